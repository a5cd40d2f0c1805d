#include <CLI11.hpp>
#include <cstdio>

#include "degflow/commands.hpp"
#include "degflow/version.hpp"

namespace {

// exit codes: 0 ok, 2 config error, 3 data error, 4 numerical divergence
int run(int argc, char** argv) {
  CLI::App app{"degflow: learn real-world image degradation and synthesize LR-HR pairs"};
  app.require_subcommand(1);
  app.fallthrough();  // global --config/--seed/--out may follow the subcommand

  std::string config_path;
  std::string out_override;
  uint64_t seed_override = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "run configuration file (key = value lines)");
  app.add_option("--out", out_override, "output directory (overrides out_dir)");
  app.add_option("--seed", seed_override, "seed override")->each([&](const std::string&) {
    seed_set = true;
  });

  auto* train = app.add_subcommand("train", "train FGDM then RFDM on the LR corpus");
  auto* synth = app.add_subcommand("synthesize", "synthesize LR images for an HR directory");
  std::string hr_dir;
  bool skip_fgdm = false, skip_rfdm = false;
  synth->add_option("--hr", hr_dir, "HR directory (defaults to hr_dir from the config)");
  synth->add_flag("--skip-fgdm", skip_fgdm, "bypass FGDM (ablation)");
  synth->add_flag("--skip-rfdm", skip_rfdm, "bypass RFDM (ablation)");

  auto* study = app.add_subcommand("study", "reproduce one of the trend studies");
  std::string study_name;
  study->add_option("--study", study_name, "dtlr|lambda|K|filter")->required();

  auto* evaluate = app.add_subcommand("evaluate", "PSNR/SSIM of manifest pairs vs references");
  std::string manifest_path, reference_dir, eval_csv;
  evaluate->add_option("--manifest", manifest_path, "pair manifest CSV")->required();
  evaluate->add_option("--reference", reference_dir, "aligned reference directory")->required();
  evaluate->add_option("--out-csv", eval_csv, "output CSV (default <out>/evaluation.csv)");

  auto* gen = app.add_subcommand("gen-corpus", "generate the procedural desk corpus");
  auto* version = app.add_subcommand("version", "print version");

  CLI11_PARSE(app, argc, argv);

  if (version->parsed()) {
    std::printf("degflow %s\n", degflow::kVersion);
    return 0;
  }

  degflow::RunConfig cfg;
  if (!config_path.empty()) cfg = degflow::load_config(config_path);
  if (seed_set) cfg.seed = seed_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  const std::filesystem::path out_dir = cfg.out_dir;

  if (gen->parsed()) {
    const auto paths = degflow::cmd_gen_corpus(cfg, out_dir);
    std::printf("corpus written under %s\n", paths.root.string().c_str());
    std::printf("  train hr/lr: %s , %s\n", paths.train.hr_dir.string().c_str(),
                paths.train.lr_dir.string().c_str());
    std::printf("  val hr/lr:   %s , %s\n", paths.val.hr_dir.string().c_str(),
                paths.val.lr_dir.string().c_str());
    return 0;
  }
  if (train->parsed()) {
    const auto outs = degflow::cmd_train(cfg, out_dir);
    std::printf("checkpoints: %s %s\n", outs.fgdm_ckpt.string().c_str(),
                outs.rfdm_ckpt.string().c_str());
    return 0;
  }
  if (synth->parsed()) {
    const std::string hr = hr_dir.empty() ? cfg.hr_dir : hr_dir;
    if (hr.empty()) throw degflow::ConfigError("synthesize: no HR directory given");
    const auto manifest = degflow::cmd_synthesize(cfg, out_dir, hr, skip_fgdm, skip_rfdm);
    std::printf("manifest: %s\n", manifest.string().c_str());
    return 0;
  }
  if (study->parsed()) {
    const auto csv = degflow::cmd_study(cfg, out_dir, study_name);
    std::printf("study CSV: %s\n", csv.string().c_str());
    return 0;
  }
  if (evaluate->parsed()) {
    const std::filesystem::path csv =
        eval_csv.empty() ? out_dir / "evaluation.csv" : std::filesystem::path(eval_csv);
    std::filesystem::create_directories(csv.parent_path().empty() ? "." : csv.parent_path());
    degflow::cmd_evaluate(manifest_path, reference_dir, csv);
    std::printf("evaluation CSV: %s\n", csv.string().c_str());
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const degflow::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const degflow::DivergenceError& e) {
    std::fprintf(stderr, "numerical divergence: %s\n", e.what());
    return 4;
  } catch (const degflow::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
