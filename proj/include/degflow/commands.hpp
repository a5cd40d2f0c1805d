#pragma once

#include <filesystem>
#include <string>

#include "degflow/config.hpp"
#include "degflow/corpus.hpp"

namespace degflow {

struct TrainOutputs {
  std::filesystem::path fgdm_ckpt;
  std::filesystem::path rfdm_ckpt;
  std::filesystem::path fgdm_loss_csv;
  std::filesystem::path rfdm_loss_csv;
  std::filesystem::path summary;
};

// gen-corpus: desk corpus under <out>/corpus.
CorpusPaths cmd_gen_corpus(const RunConfig& cfg, const std::filesystem::path& out_dir);

// train: FGDM then RFDM (FGDM frozen); writes checkpoints, loss CSVs and a
// run summary (the only artifact carrying a timestamp).
TrainOutputs cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir);

// synthesize: per HR image, bilinear /4 then the optional module chain;
// writes <out>/pairs/lr/*.png and the pair manifest. HR images with dims
// not divisible by 4 are skipped with a warning recorded in the manifest
// footer. Returns the manifest path.
std::filesystem::path cmd_synthesize(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                     const std::filesystem::path& hr_dir, bool skip_fgdm,
                                     bool skip_rfdm);

// study: dtlr | lambda | K | filter. Returns the CSV path written.
std::filesystem::path cmd_study(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                const std::string& study);

// evaluate: per-manifest-row metrics against aligned references plus a mean
// row. Returns the CSV path written.
std::filesystem::path cmd_evaluate(const std::filesystem::path& manifest,
                                   const std::filesystem::path& reference_dir,
                                   const std::filesystem::path& out_csv);

}  // namespace degflow
