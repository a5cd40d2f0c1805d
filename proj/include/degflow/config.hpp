#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "degflow/fgdm.hpp"
#include "degflow/rfdm.hpp"

namespace degflow {

// Flat `key = value` run configuration. Unknown keys are rejected with the
// offending line number; `#` starts a comment.
struct RunConfig {
  // corpus
  std::string hr_dir;
  std::string lr_dir;
  std::string val_hr_dir;
  std::string val_lr_dir;
  std::string out_dir = "out";
  uint64_t seed = 17;

  // degradation transform
  DtlrSpec dtlr;

  // fgdm
  AENetConfig aenet;
  int fgdm_steps = 2000;

  // rfdm
  VelocityNetConfig vnet;
  int rfdm_steps = 3000;
  float lambda = 0.1f;
  int flow_steps = 20;

  // shared training
  int batch_size = 8;
  float learning_rate = 1e-4f;
  int lr_patch = 32;

  // gen-corpus
  int corpus_train_images = 120;
  int corpus_val_images = 16;
  int corpus_hr_size = 128;

  FgdmTrainConfig fgdm_train_config() const {
    return FgdmTrainConfig{fgdm_steps, batch_size, learning_rate, lr_patch};
  }
  RfdmTrainConfig rfdm_train_config() const {
    return RfdmTrainConfig{rfdm_steps, batch_size, learning_rate, lr_patch, lambda};
  }

  std::string to_string() const;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

}  // namespace degflow
