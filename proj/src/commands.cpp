#include "degflow/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "degflow/metrics.hpp"
#include "degflow/png_io.hpp"
#include "degflow/studies.hpp"

namespace degflow {

namespace fs = std::filesystem;

namespace {

void write_loss_csv(const fs::path& path, const std::vector<float>& losses) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "step,loss\n";
  char row[64];
  for (size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(row, sizeof(row), "%zu,%.6f\n", i, static_cast<double>(losses[i]));
    os << row;
  }
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

uint64_t synth_seed(uint64_t base, size_t index) {
  return Rng(base, streams::kSynth + index * streams::kStreamStride).next_u64();
}

}  // namespace

CorpusPaths cmd_gen_corpus(const RunConfig& cfg, const fs::path& out_dir) {
  CorpusSpec spec;
  spec.train_images = cfg.corpus_train_images;
  spec.val_images = cfg.corpus_val_images;
  spec.hr_size = cfg.corpus_hr_size;
  spec.scale = cfg.dtlr.scale;
  if (spec.train_images < 1 || spec.val_images < 0 || spec.hr_size < 8 * spec.scale)
    throw ConfigError("gen-corpus: corpus sizes out of range");
  fs::create_directories(out_dir);
  return generate_corpus(out_dir / "corpus", spec, cfg.seed);
}

TrainOutputs cmd_train(const RunConfig& cfg, const fs::path& out_dir) {
  if (cfg.lr_dir.empty()) throw ConfigError("train: lr_dir is not set");
  const std::vector<ImageF> lr_corpus = load_dir_images(cfg.lr_dir);
  if (lr_corpus.empty()) throw DataError("train: LR corpus is empty: " + cfg.lr_dir);
  fs::create_directories(out_dir);

  TrainOutputs outs;
  outs.fgdm_ckpt = out_dir / "fgdm.dgfw";
  outs.rfdm_ckpt = out_dir / "rfdm.dgfw";
  outs.fgdm_loss_csv = out_dir / "fgdm_loss.csv";
  outs.rfdm_loss_csv = out_dir / "rfdm_loss.csv";
  outs.summary = out_dir / "train_summary.txt";

  FgdmTrainResult fgdm_res =
      fgdm_train(lr_corpus, cfg.dtlr, cfg.aenet, cfg.fgdm_train_config(), cfg.seed);
  fgdm_res.model.save(outs.fgdm_ckpt);
  write_loss_csv(outs.fgdm_loss_csv, fgdm_res.losses);

  RfdmTrainResult rfdm_res =
      rfdm_train(lr_corpus, fgdm_res.model, cfg.vnet, cfg.rfdm_train_config(), cfg.seed);
  rfdm_res.model.save(outs.rfdm_ckpt);
  write_loss_csv(outs.rfdm_loss_csv, rfdm_res.losses);

  std::ofstream summary(outs.summary);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  summary << "degflow training summary\n";
  summary << "finished: " << std::ctime(&now);
  summary << "corpus images: " << lr_corpus.size() << "\n";
  summary << "fgdm steps: " << cfg.fgdm_steps
          << (cfg.fgdm_steps == 0 ? " (zero training: identity enhancer)\n" : "\n");
  summary << "rfdm steps: " << cfg.rfdm_steps
          << (cfg.rfdm_steps == 0 ? " (zero training: zero velocity field)\n" : "\n");
  if (!fgdm_res.losses.empty())
    summary << "fgdm loss first/last: " << fgdm_res.losses.front() << " / "
            << fgdm_res.losses.back() << "\n";
  if (!rfdm_res.losses.empty())
    summary << "rfdm loss first/last: " << rfdm_res.losses.front() << " / "
            << rfdm_res.losses.back() << "\n";
  summary << "\nconfig:\n" << cfg.to_string();
  return outs;
}

fs::path cmd_synthesize(const RunConfig& cfg, const fs::path& out_dir, const fs::path& hr_dir,
                        bool skip_fgdm, bool skip_rfdm) {
  const auto hr_files = list_pngs(hr_dir);

  FgdmModel fgdm;
  RfdmModel rfdm;
  const fs::path fgdm_ckpt = out_dir / "fgdm.dgfw";
  const fs::path rfdm_ckpt = out_dir / "rfdm.dgfw";
  if (!skip_fgdm) {
    if (!fs::exists(fgdm_ckpt)) throw DataError("synthesize: missing checkpoint " + fgdm_ckpt.string());
    fgdm = FgdmModel::load(fgdm_ckpt);
  }
  if (!skip_rfdm) {
    if (!fs::exists(rfdm_ckpt)) throw DataError("synthesize: missing checkpoint " + rfdm_ckpt.string());
    rfdm = RfdmModel::load(rfdm_ckpt);
  }

  const fs::path pair_dir = out_dir / "pairs";
  fs::create_directories(pair_dir / "lr");
  const fs::path manifest_path = pair_dir / "manifest.csv";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw DataError("cannot write " + manifest_path.string());
  manifest << "hr_path,lr_path,seed,fgdm_ckpt,rfdm_ckpt\n";
  std::vector<std::string> footer;

  for (size_t i = 0; i < hr_files.size(); ++i) {
    const ImageF hr = load_image(hr_files[i]);
    if (hr.height % cfg.dtlr.scale != 0 || hr.width % cfg.dtlr.scale != 0) {
      std::fprintf(stderr, "warning: skipping %s (dims %dx%d not divisible by %d)\n",
                   hr_files[i].string().c_str(), hr.height, hr.width, cfg.dtlr.scale);
      footer.push_back("# skipped " + hr_files[i].string() + ": dims not divisible by " +
                       std::to_string(cfg.dtlr.scale));
      continue;
    }
    const uint64_t seed = synth_seed(cfg.seed, i);
    const ImageF lr = synthesize_lr(hr, skip_fgdm ? nullptr : &fgdm, skip_rfdm ? nullptr : &rfdm,
                                    cfg.lambda, cfg.flow_steps, cfg.dtlr.scale, seed);
    const fs::path lr_path = pair_dir / "lr" / hr_files[i].filename();
    save_image(lr, lr_path);
    // lr and checkpoint paths are stored relative to the manifest so runs
    // into different output roots stay byte-identical and relocatable
    manifest << hr_files[i].string() << ","
             << (fs::path("lr") / hr_files[i].filename()).string() << "," << seed << ","
             << (skip_fgdm ? "-" : "../fgdm.dgfw") << ","
             << (skip_rfdm ? "-" : "../rfdm.dgfw") << "\n";
  }
  for (const auto& line : footer) manifest << line << "\n";
  return manifest_path;
}

fs::path cmd_study(const RunConfig& cfg, const fs::path& out_dir, const std::string& study) {
  fs::create_directories(out_dir);
  if (cfg.val_hr_dir.empty() || cfg.val_lr_dir.empty())
    throw ConfigError("study: val_hr_dir and val_lr_dir must be set");
  const std::vector<ImageF> val_hr = load_dir_images(cfg.val_hr_dir);
  const std::vector<ImageF> val_lr = load_dir_images(cfg.val_lr_dir);
  if (val_hr.size() != val_lr.size() || val_hr.empty())
    throw DataError("study: val corpus must be non-empty and aligned");

  auto bi_set = [&] {
    std::vector<ImageF> bi;
    bi.reserve(val_hr.size());
    for (const auto& hr : val_hr)
      bi.push_back(resize(hr, hr.height / cfg.dtlr.scale, hr.width / cfg.dtlr.scale,
                          FilterKind::kBilinear));
    return bi;
  };

  if (study == "dtlr") {
    const auto rows = degradation_convergence_study(val_lr, bi_set(), cfg.dtlr.iterations,
                                                    cfg.dtlr.filter, cfg.dtlr.scale);
    const fs::path csv = out_dir / "study_dtlr.csv";
    std::ofstream os(csv);
    os << "iters,psnr,ssim\n";
    for (const auto& r : rows)
      os << r.iters << "," << fmt4(r.psnr) << "," << fmt4(r.ssim) << "\n";
    return csv;
  }

  if (study == "filter") {
    const fs::path csv = out_dir / "study_filter.csv";
    std::ofstream os(csv);
    os << "filter,iters,psnr,ssim\n";
    for (FilterKind f : {FilterKind::kBilinear, FilterKind::kBicubic, FilterKind::kLanczos3}) {
      // the LR(bi)-style input is regenerated with the same filter under study
      std::vector<ImageF> gen;
      gen.reserve(val_hr.size());
      for (const auto& hr : val_hr)
        gen.push_back(resize(hr, hr.height / cfg.dtlr.scale, hr.width / cfg.dtlr.scale, f));
      const auto rows =
          degradation_convergence_study(val_lr, gen, cfg.dtlr.iterations, f, cfg.dtlr.scale);
      for (const auto& r : rows)
        os << filter_to_string(f) << "," << r.iters << "," << fmt4(r.psnr) << ","
           << fmt4(r.ssim) << "\n";
    }
    return csv;
  }

  if (study == "K") {
    FgdmModel fgdm = FgdmModel::load(out_dir / "fgdm.dgfw");
    RfdmModel rfdm = RfdmModel::load(out_dir / "rfdm.dgfw");
    const fs::path csv = out_dir / "study_K.csv";
    std::ofstream os(csv);
    os << "K,psnr\n";
    for (int k : {1, 5, 10, 20, 40}) {
      const double p = mean_synth_psnr(val_hr, val_lr, &fgdm, &rfdm, cfg.lambda, k,
                                       cfg.dtlr.scale, cfg.seed);
      os << k << "," << fmt4(p) << "\n";
    }
    return csv;
  }

  if (study == "lambda") {
    // retrain-lite sweep: 500 RFDM steps per lambda, trend-level only
    if (cfg.lr_dir.empty()) throw ConfigError("study lambda: lr_dir must be set");
    const std::vector<ImageF> lr_corpus = load_dir_images(cfg.lr_dir);
    FgdmModel fgdm = FgdmModel::load(out_dir / "fgdm.dgfw");
    const fs::path csv = out_dir / "study_lambda.csv";
    std::ofstream os(csv);
    os << "lambda,psnr\n";
    for (double lam : {0.0, 0.05, 0.1, 0.2}) {
      RfdmTrainConfig tc = cfg.rfdm_train_config();
      tc.steps = 500;
      tc.lambda = static_cast<float>(lam);
      RfdmTrainResult res = rfdm_train(lr_corpus, fgdm, cfg.vnet, tc, cfg.seed);
      const double p = mean_synth_psnr(val_hr, val_lr, &fgdm, &res.model, lam, cfg.flow_steps,
                                       cfg.dtlr.scale, cfg.seed);
      os << fmt4(lam) << "," << fmt4(p) << "\n";
    }
    return csv;
  }

  throw ConfigError("unknown study '" + study + "' (expected dtlr|lambda|K|filter)");
}

fs::path cmd_evaluate(const fs::path& manifest, const fs::path& reference_dir,
                      const fs::path& out_csv) {
  std::ifstream is(manifest);
  if (!is) throw DataError("evaluate: cannot open manifest " + manifest.string());
  std::string line;
  if (!std::getline(is, line) || line != "hr_path,lr_path,seed,fgdm_ckpt,rfdm_ckpt")
    throw DataError("evaluate: bad manifest header in " + manifest.string());

  std::ofstream os(out_csv);
  if (!os) throw DataError("cannot write " + out_csv.string());
  os << "name,psnr,ssim\n";
  double psnr_acc = 0.0, ssim_acc = 0.0;
  size_t count = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    // columns: hr_path,lr_path,seed,fgdm_ckpt,rfdm_ckpt
    std::vector<std::string> cols;
    size_t start = 0;
    for (size_t pos = 0; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
      cols.push_back(line.substr(start, pos - start));
    cols.push_back(line.substr(start));
    if (cols.size() != 5) throw DataError("evaluate: malformed manifest row: " + line);

    fs::path lr_path = cols[1];
    if (lr_path.is_relative()) lr_path = manifest.parent_path() / lr_path;
    const fs::path ref_path = reference_dir / fs::path(cols[0]).filename();
    const ImageF lr = load_image(lr_path);
    const ImageF ref = load_image(ref_path);
    const MetricReport m = metric_report(lr, ref);
    os << fs::path(cols[0]).filename().string() << "," << fmt4(m.psnr) << "," << fmt4(m.ssim)
       << "\n";
    psnr_acc += m.psnr;
    ssim_acc += m.ssim;
    ++count;
  }
  if (count > 0)
    os << "mean," << fmt4(psnr_acc / count) << "," << fmt4(ssim_acc / count) << "\n";
  return out_csv;
}

}  // namespace degflow
