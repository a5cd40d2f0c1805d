#pragma once

#include "degflow/image.hpp"

namespace degflow {

struct MetricReport {
  double psnr = 0.0;  // dB, capped at 99.0
  double ssim = 0.0;  // in [-1, 1]
};

// 10 log10(1 / MSE) over all pixels and channels, peak 1.0. Identical
// inputs (MSE = 0) report the 99.0 cap.
double psnr(const ImageF& a, const ImageF& b);

// Mean structural similarity: 11x11 Gaussian window (sigma 1.5),
// C1 = 0.01^2, C2 = 0.03^2 at peak 1.0, valid-region aggregation (no
// padding), channels averaged. Errors when any dim is below the window.
double ssim(const ImageF& a, const ImageF& b);

MetricReport metric_report(const ImageF& a, const ImageF& b);

}  // namespace degflow
