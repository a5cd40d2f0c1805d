#include "degflow/studies.hpp"

namespace degflow {

std::vector<ConvergenceRow> degradation_convergence_study(const std::vector<ImageF>& lr_real_set,
                                                          const std::vector<ImageF>& lr_bi_set,
                                                          int max_iters, FilterKind filter,
                                                          int scale) {
  if (lr_real_set.size() != lr_bi_set.size() || lr_real_set.empty())
    throw DataError("convergence study: sets must be non-empty and equally sized");
  for (size_t i = 0; i < lr_real_set.size(); ++i)
    if (!lr_real_set[i].same_dims(lr_bi_set[i]))
      throw DataError("convergence study: misaligned dimensions at pair " + std::to_string(i));

  // advance both sets one down-up cycle at a time
  std::vector<ImageF> real = lr_real_set, bi = lr_bi_set;
  const DtlrSpec cycle{1, scale, filter};
  std::vector<ConvergenceRow> rows;
  for (int it = 0; it <= max_iters; ++it) {
    if (it > 0)
      for (size_t i = 0; i < real.size(); ++i) {
        real[i] = dtlr(real[i], cycle);
        bi[i] = dtlr(bi[i], cycle);
      }
    double psnr_acc = 0.0, ssim_acc = 0.0;
    for (size_t i = 0; i < real.size(); ++i) {
      psnr_acc += psnr(real[i], bi[i]);
      ssim_acc += ssim(real[i], bi[i]);
    }
    rows.push_back({it, psnr_acc / real.size(), ssim_acc / real.size()});
  }
  return rows;
}

ImageF synthesize_lr(const ImageF& hr, FgdmModel* fgdm, RfdmModel* rfdm, double lambda,
                     int flow_steps, int scale, uint64_t seed) {
  if (hr.height % scale != 0 || hr.width % scale != 0)
    throw DataError("synthesize_lr: HR dims not divisible by " + std::to_string(scale));
  ImageF lr = resize(hr, hr.height / scale, hr.width / scale, FilterKind::kBilinear);
  if (fgdm) lr = fgdm_apply(lr, *fgdm);
  if (rfdm) lr = rfdm_apply(lr, *rfdm, lambda, flow_steps, seed);
  return clamp01(std::move(lr));
}

double mean_synth_psnr(const std::vector<ImageF>& hr_set, const std::vector<ImageF>& lr_real_set,
                       FgdmModel* fgdm, RfdmModel* rfdm, double lambda, int flow_steps, int scale,
                       uint64_t seed) {
  if (hr_set.size() != lr_real_set.size() || hr_set.empty())
    throw DataError("mean_synth_psnr: aligned sets required");
  double acc = 0.0;
  for (size_t i = 0; i < hr_set.size(); ++i) {
    const uint64_t img_seed =
        Rng(seed, streams::kSynth + i * streams::kStreamStride).next_u64();
    const ImageF synth = synthesize_lr(hr_set[i], fgdm, rfdm, lambda, flow_steps, scale, img_seed);
    acc += psnr(synth, lr_real_set[i]);
  }
  return acc / hr_set.size();
}

}  // namespace degflow
