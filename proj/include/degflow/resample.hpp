#pragma once

#include <string>

#include "degflow/image.hpp"

namespace degflow {

enum class FilterKind { kBilinear, kBicubic, kLanczos3 };

FilterKind filter_from_string(const std::string& name);
std::string filter_to_string(FilterKind f);

// Repeated down-up degradation transform.
struct DtlrSpec {
  int iterations = 10;
  int scale = 4;
  FilterKind filter = FilterKind::kBilinear;
};

// Separable resampling with half-pixel centers (source coordinate of output
// index d is (d + 0.5) * in/out - 0.5) and clamp-to-edge boundaries. When
// downscaling, the kernel support is widened by the scale ratio so repeated
// cycles do not alias. Bicubic is the Keys kernel with a = -0.5; lanczos3 is
// the 3-lobe windowed sinc.
ImageF resize(const ImageF& img, int out_h, int out_w, FilterKind filter);

// `iterations` cycles of (downscale by spec.scale, upscale back). Output has
// the input dimensions; iterations = 0 returns the input unchanged. Errors
// when the dimensions are not divisible by the scale.
ImageF dtlr(const ImageF& img, const DtlrSpec& spec);

// Filter kernel value at x, radius of support (before AA widening).
double filter_kernel(FilterKind f, double x);
double filter_radius(FilterKind f);

}  // namespace degflow
