#pragma once

#include <vector>

#include "degflow/fgdm.hpp"
#include "degflow/metrics.hpp"
#include "degflow/resample.hpp"
#include "degflow/rfdm.hpp"

namespace degflow {

struct ConvergenceRow {
  int iters = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

// For i in 0..max_iters, mean PSNR/SSIM between dtlr(real, i) and
// dtlr(bi, i) over pixel-aligned pairs. Row 0 is the plain metric of the
// raw pairs.
std::vector<ConvergenceRow> degradation_convergence_study(const std::vector<ImageF>& lr_real_set,
                                                          const std::vector<ImageF>& lr_bi_set,
                                                          int max_iters, FilterKind filter,
                                                          int scale = 4);

// One synthesized LR: bilinear downscale, then the optional module chain.
ImageF synthesize_lr(const ImageF& hr, FgdmModel* fgdm, RfdmModel* rfdm, double lambda,
                     int flow_steps, int scale, uint64_t seed);

// Mean PSNR of synthesized LR images against aligned real LR references.
double mean_synth_psnr(const std::vector<ImageF>& hr_set, const std::vector<ImageF>& lr_real_set,
                       FgdmModel* fgdm, RfdmModel* rfdm, double lambda, int flow_steps, int scale,
                       uint64_t seed);

}  // namespace degflow
