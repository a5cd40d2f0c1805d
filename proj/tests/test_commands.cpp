#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "degflow/commands.hpp"
#include "degflow/metrics.hpp"
#include "degflow/png_io.hpp"
#include "degflow/studies.hpp"

using namespace degflow;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "degflow_cmd_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// tiny config shared by the integration flows
RunConfig tiny_config(const fs::path& root) {
  RunConfig cfg;
  cfg.seed = 21;
  cfg.corpus_train_images = 4;
  cfg.corpus_val_images = 2;
  cfg.corpus_hr_size = 64;
  cfg.fgdm_steps = 25;
  cfg.rfdm_steps = 25;
  cfg.batch_size = 2;
  cfg.lr_patch = 16;
  cfg.dtlr.iterations = 3;
  cfg.flow_steps = 4;
  cfg.aenet = AENetConfig{8, 1, 3};
  cfg.vnet = VelocityNetConfig{8, 64};
  cfg.out_dir = (root / "out").string();
  cfg.hr_dir = (root / "out/corpus/train/hr").string();
  cfg.lr_dir = (root / "out/corpus/train/lr").string();
  cfg.val_hr_dir = (root / "out/corpus/val/hr").string();
  cfg.val_lr_dir = (root / "out/corpus/val/lr").string();
  return cfg;
}

}  // namespace

TEST_CASE("gen-corpus writes a deterministic aligned corpus") {
  const fs::path root = fresh_dir("gen");
  RunConfig cfg = tiny_config(root);
  const CorpusPaths paths = cmd_gen_corpus(cfg, cfg.out_dir);

  const auto train_hr = list_pngs(paths.train.hr_dir);
  const auto train_lr = list_pngs(paths.train.lr_dir);
  const auto val_hr = list_pngs(paths.val.hr_dir);
  REQUIRE(train_hr.size() == 4);
  REQUIRE(train_lr.size() == 4);
  REQUIRE(val_hr.size() == 2);

  const ImageF hr = load_image(train_hr[0]);
  const ImageF lr = load_image(train_lr[0]);
  CHECK(hr.height == 64);
  CHECK(hr.channels == 3);
  CHECK(lr.height == 16);

  // degradation params recorded per image
  const std::string params = slurp(paths.params_csv);
  CHECK(params.find("name,blur_sigma,noise_sigma") == 0);
  CHECK(params.find("train_000.png") != std::string::npos);
  CHECK(params.find("val_001.png") != std::string::npos);

  // determinism: regenerate into a second root and compare bytes
  const fs::path root2 = fresh_dir("gen2");
  RunConfig cfg2 = tiny_config(root2);
  const CorpusPaths paths2 = cmd_gen_corpus(cfg2, cfg2.out_dir);
  CHECK(slurp(train_hr[1]) == slurp(list_pngs(paths2.train.hr_dir)[1]));
  CHECK(slurp(train_lr[2]) == slurp(list_pngs(paths2.train.lr_dir)[2]));
}

TEST_CASE("train-synthesize-evaluate round trip on the tiny corpus") {
  const fs::path root = fresh_dir("pipeline");
  RunConfig cfg = tiny_config(root);
  cmd_gen_corpus(cfg, cfg.out_dir);

  const TrainOutputs outs = cmd_train(cfg, cfg.out_dir);
  CHECK(fs::exists(outs.fgdm_ckpt));
  CHECK(fs::exists(outs.rfdm_ckpt));
  CHECK(fs::exists(outs.summary));

  // loss CSVs carry one row per step plus header
  const std::string fgdm_csv = slurp(outs.fgdm_loss_csv);
  CHECK(static_cast<int>(std::count(fgdm_csv.begin(), fgdm_csv.end(), '\n')) ==
        cfg.fgdm_steps + 1);
  CHECK(fgdm_csv.rfind("step,loss\n", 0) == 0);

  const fs::path manifest = cmd_synthesize(cfg, cfg.out_dir, cfg.val_hr_dir, false, false);
  const std::string mtext = slurp(manifest);
  CHECK(mtext.rfind("hr_path,lr_path,seed,fgdm_ckpt,rfdm_ckpt\n", 0) == 0);
  CHECK(static_cast<int>(std::count(mtext.begin(), mtext.end(), '\n')) == 3);  // header + 2 rows

  // synthesized LR images have HR/4 dims and values in [0,1]
  for (const auto& p : list_pngs(fs::path(cfg.out_dir) / "pairs" / "lr")) {
    const ImageF lr = load_image(p);
    CHECK(lr.height == 16);
    CHECK(lr.width == 16);
    for (float v : lr.data) {
      CHECK(v >= 0.f);
      CHECK(v <= 1.f);
    }
  }

  const fs::path eval_csv = fs::path(cfg.out_dir) / "eval.csv";
  cmd_evaluate(manifest, cfg.val_lr_dir, eval_csv);
  const std::string etext = slurp(eval_csv);
  CHECK(etext.rfind("name,psnr,ssim\n", 0) == 0);
  CHECK(etext.find("mean,") != std::string::npos);
}

TEST_CASE("training twice with one seed is byte-identical") {
  const fs::path root = fresh_dir("determinism");
  RunConfig cfg = tiny_config(root);
  cmd_gen_corpus(cfg, cfg.out_dir);

  const fs::path out_a = root / "out_a", out_b = root / "out_b";
  const TrainOutputs a = cmd_train(cfg, out_a);
  const TrainOutputs b = cmd_train(cfg, out_b);
  CHECK(slurp(a.fgdm_ckpt) == slurp(b.fgdm_ckpt));
  CHECK(slurp(a.rfdm_ckpt) == slurp(b.rfdm_ckpt));
  CHECK(slurp(a.fgdm_loss_csv) == slurp(b.fgdm_loss_csv));

  RunConfig cfg_a = cfg, cfg_b = cfg;
  cfg_a.out_dir = out_a.string();
  cfg_b.out_dir = out_b.string();
  const fs::path ma = cmd_synthesize(cfg_a, out_a, cfg.val_hr_dir, false, false);
  const fs::path mb = cmd_synthesize(cfg_b, out_b, cfg.val_hr_dir, false, false);
  const auto la = list_pngs(out_a / "pairs" / "lr");
  const auto lb = list_pngs(out_b / "pairs" / "lr");
  REQUIRE(la.size() == lb.size());
  for (size_t i = 0; i < la.size(); ++i) CHECK(slurp(la[i]) == slurp(lb[i]));
}

TEST_CASE("skip flags subset the pipeline") {
  const fs::path root = fresh_dir("skips");
  RunConfig cfg = tiny_config(root);
  cmd_gen_corpus(cfg, cfg.out_dir);

  // both skips need no checkpoints at all and give plain bilinear pairs
  const fs::path manifest = cmd_synthesize(cfg, cfg.out_dir, cfg.val_hr_dir, true, true);
  const auto rows = slurp(manifest);
  CHECK(rows.find(",-,-") != std::string::npos);
  const auto hr_files = list_pngs(cfg.val_hr_dir);
  const auto lr_files = list_pngs(fs::path(cfg.out_dir) / "pairs" / "lr");
  REQUIRE(hr_files.size() == lr_files.size());
  for (size_t i = 0; i < hr_files.size(); ++i) {
    const ImageF hr = load_image(hr_files[i]);
    const ImageF want = clamp01(resize(hr, hr.height / 4, hr.width / 4, FilterKind::kBilinear));
    const ImageF got = load_image(lr_files[i]);
    // bytes go through one u8 quantization
    for (size_t j = 0; j < got.data.size(); ++j)
      CHECK(std::abs(got.data[j] - want.data[j]) <= 0.5f / 255.f + 1e-6f);
  }

  // fgdm-only requires only the fgdm checkpoint
  cmd_train(cfg, cfg.out_dir);
  fs::remove(fs::path(cfg.out_dir) / "rfdm.dgfw");
  CHECK_NOTHROW(cmd_synthesize(cfg, cfg.out_dir, cfg.val_hr_dir, false, true));
  CHECK_THROWS_AS(cmd_synthesize(cfg, cfg.out_dir, cfg.val_hr_dir, false, false), DataError);
}

TEST_CASE("indivisible HR dims are skipped and recorded in the footer") {
  const fs::path root = fresh_dir("skipdims");
  RunConfig cfg = tiny_config(root);
  const fs::path hr_dir = root / "hr";
  fs::create_directories(hr_dir);
  ImageF ok(16, 16, 3, 0.5f), bad(18, 16, 3, 0.5f);
  save_image(ok, hr_dir / "a_ok.png");
  save_image(bad, hr_dir / "b_bad.png");
  const fs::path manifest = cmd_synthesize(cfg, cfg.out_dir, hr_dir, true, true);
  const std::string text = slurp(manifest);
  CHECK(text.find("a_ok.png") != std::string::npos);
  CHECK(text.find("# skipped") != std::string::npos);
  CHECK(text.find("b_bad.png: dims not divisible by 4") != std::string::npos);
}

TEST_CASE("evaluate on identical pairs reports the caps; empty manifest is fine") {
  const fs::path root = fresh_dir("eval");
  const fs::path dir = root / "imgs";
  fs::create_directories(dir);
  ImageF img(16, 16, 3, 0.5f);
  Rng rng(1, 0);
  for (auto& v : img.data) v = static_cast<float>(rng.next_double());
  save_image(img, dir / "x.png");

  const fs::path manifest = root / "manifest.csv";
  {
    std::ofstream os(manifest);
    os << "hr_path,lr_path,seed,fgdm_ckpt,rfdm_ckpt\n";
    os << (dir / "x.png").string() << "," << (dir / "x.png").string() << ",0,-,-\n";
  }
  const fs::path csv = root / "eval.csv";
  cmd_evaluate(manifest, dir, csv);
  const std::string text = slurp(csv);
  CHECK(text.find("x.png,99.0000,1.0000") != std::string::npos);
  CHECK(text.find("mean,99.0000,1.0000") != std::string::npos);

  const fs::path empty_manifest = root / "empty.csv";
  {
    std::ofstream os(empty_manifest);
    os << "hr_path,lr_path,seed,fgdm_ckpt,rfdm_ckpt\n";
  }
  const fs::path empty_csv = root / "empty_eval.csv";
  cmd_evaluate(empty_manifest, dir, empty_csv);
  CHECK(slurp(empty_csv) == "name,psnr,ssim\n");

  // unresolved reference path
  const fs::path bad_manifest = root / "bad.csv";
  {
    std::ofstream os(bad_manifest);
    os << "hr_path,lr_path,seed,fgdm_ckpt,rfdm_ckpt\n";
    os << (dir / "x.png").string() << "," << (dir / "x.png").string() << ",0,-,-\n";
  }
  CHECK_THROWS_AS(cmd_evaluate(bad_manifest, root / "nowhere", root / "c.csv"), DataError);
}

TEST_CASE("dtlr study row zero equals the raw pair metric") {
  const fs::path root = fresh_dir("study");
  RunConfig cfg = tiny_config(root);
  cmd_gen_corpus(cfg, cfg.out_dir);
  const fs::path csv = cmd_study(cfg, cfg.out_dir, "dtlr");
  std::ifstream is(csv);
  std::string header, row0;
  std::getline(is, header);
  CHECK(header == "iters,psnr,ssim");
  std::getline(is, row0);

  // recompute the raw-pair means directly
  const auto val_hr = load_dir_images(cfg.val_hr_dir);
  const auto val_lr = load_dir_images(cfg.val_lr_dir);
  double p = 0, s = 0;
  for (size_t i = 0; i < val_hr.size(); ++i) {
    const ImageF bi = resize(val_hr[i], val_hr[i].height / 4, val_hr[i].width / 4,
                             FilterKind::kBilinear);
    p += psnr(val_lr[i], bi);
    s += ssim(val_lr[i], bi);
  }
  char expect[64];
  std::snprintf(expect, sizeof(expect), "0,%.4f,%.4f", p / val_hr.size(), s / val_hr.size());
  CHECK(row0 == expect);

  CHECK_THROWS_AS(cmd_study(cfg, cfg.out_dir, "bogus"), ConfigError);
}

TEST_CASE("cli exit codes: 0 ok, 2 config, 3 data") {
#ifdef DEGFLOW_CLI
  const fs::path root = fresh_dir("cli");
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(DEGFLOW_CLI) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
  };
  CHECK(run("version") == 0);
  // unknown config key -> 2
  {
    std::ofstream os(root / "bad.cfg");
    os << "bogus_key = 1\n";
  }
  CHECK(run("train --config " + (root / "bad.cfg").string()) == 2);
  // missing corpus -> 3
  {
    std::ofstream os(root / "ok.cfg");
    os << "lr_dir = " << (root / "does_not_exist").string() << "\n";
  }
  CHECK(run("train --config " + (root / "ok.cfg").string() + " --out " +
            (root / "out").string()) == 3);
#endif
}
