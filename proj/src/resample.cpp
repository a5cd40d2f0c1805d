#include "degflow/resample.hpp"

#include <cmath>
#include <vector>

namespace degflow {

FilterKind filter_from_string(const std::string& name) {
  if (name == "bilinear") return FilterKind::kBilinear;
  if (name == "bicubic") return FilterKind::kBicubic;
  if (name == "lanczos3") return FilterKind::kLanczos3;
  throw ConfigError("unknown filter '" + name + "' (expected bilinear|bicubic|lanczos3)");
}

std::string filter_to_string(FilterKind f) {
  switch (f) {
    case FilterKind::kBilinear: return "bilinear";
    case FilterKind::kBicubic: return "bicubic";
    case FilterKind::kLanczos3: return "lanczos3";
  }
  return "?";
}

double filter_radius(FilterKind f) {
  switch (f) {
    case FilterKind::kBilinear: return 1.0;
    case FilterKind::kBicubic: return 2.0;
    case FilterKind::kLanczos3: return 3.0;
  }
  return 0.0;
}

double filter_kernel(FilterKind f, double x) {
  x = std::abs(x);
  switch (f) {
    case FilterKind::kBilinear:
      return x < 1.0 ? 1.0 - x : 0.0;
    case FilterKind::kBicubic: {
      // Keys cubic, a = -0.5
      constexpr double a = -0.5;
      if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
      if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
      return 0.0;
    }
    case FilterKind::kLanczos3: {
      if (x < 1e-12) return 1.0;
      if (x >= 3.0) return 0.0;
      const double pix = M_PI * x;
      return 3.0 * std::sin(pix) * std::sin(pix / 3.0) / (pix * pix);
    }
  }
  return 0.0;
}

namespace {

// Per-output-index tap list along one axis.
struct TapTable {
  int taps = 0;
  std::vector<double> weights;  // taps weights per output, normalized
  std::vector<int> index;       // flattened clamped indices per output
};

TapTable build_taps(int in_size, int out_size, FilterKind filter) {
  TapTable t;
  const double scale = static_cast<double>(in_size) / out_size;
  const double support_scale = scale > 1.0 ? scale : 1.0;  // AA widening on downscale
  const double radius = filter_radius(filter) * support_scale;
  t.taps = static_cast<int>(std::ceil(radius * 2.0)) + 1;
  t.weights.resize(static_cast<size_t>(out_size) * t.taps, 0.0);
  t.index.resize(static_cast<size_t>(out_size) * t.taps, 0);
  for (int od = 0; od < out_size; ++od) {
    const double center = (od + 0.5) * scale - 0.5;
    int lo = static_cast<int>(std::floor(center - radius + 0.5));
    double sum = 0.0;
    for (int k = 0; k < t.taps; ++k) {
      const int src = lo + k;
      const double w = filter_kernel(filter, (src - center) / support_scale);
      t.weights[static_cast<size_t>(od) * t.taps + k] = w;
      // clamp-to-edge: out-of-range taps read the border pixel
      const int clamped = src < 0 ? 0 : (src >= in_size ? in_size - 1 : src);
      t.index[static_cast<size_t>(od) * t.taps + k] = clamped;
      sum += w;
    }
    if (sum != 0.0)
      for (int k = 0; k < t.taps; ++k) t.weights[static_cast<size_t>(od) * t.taps + k] /= sum;
  }
  return t;
}

}  // namespace

ImageF resize(const ImageF& img, int out_h, int out_w, FilterKind filter) {
  if (out_h < 1 || out_w < 1) throw DataError("resize: target dims must be >= 1");
  if (out_h == img.height && out_w == img.width) return img;

  const TapTable tx = build_taps(img.width, out_w, filter);
  const TapTable ty = build_taps(img.height, out_h, filter);
  const int C = img.channels;

  // horizontal pass, accumulating in double
  std::vector<double> tmp(static_cast<size_t>(img.height) * out_w * C, 0.0);
  for (int y = 0; y < img.height; ++y) {
    const float* row = img.data.data() + static_cast<size_t>(y) * img.width * C;
    double* orow = tmp.data() + static_cast<size_t>(y) * out_w * C;
    for (int x = 0; x < out_w; ++x) {
      const double* w = tx.weights.data() + static_cast<size_t>(x) * tx.taps;
      const int* idx = tx.index.data() + static_cast<size_t>(x) * tx.taps;
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = 0; k < tx.taps; ++k) acc += w[k] * row[idx[k] * C + c];
        orow[x * C + c] = acc;
      }
    }
  }

  // vertical pass
  ImageF out(out_h, out_w, C);
  for (int y = 0; y < out_h; ++y) {
    const double* w = ty.weights.data() + static_cast<size_t>(y) * ty.taps;
    const int* idx = ty.index.data() + static_cast<size_t>(y) * ty.taps;
    float* orow = out.data.data() + static_cast<size_t>(y) * out_w * C;
    for (int x = 0; x < out_w * C; ++x) {
      double acc = 0.0;
      for (int k = 0; k < ty.taps; ++k)
        acc += w[k] * tmp[static_cast<size_t>(idx[k]) * out_w * C + x];
      orow[x] = static_cast<float>(acc);
    }
  }
  return out;
}

ImageF dtlr(const ImageF& img, const DtlrSpec& spec) {
  if (spec.iterations < 0 || spec.scale < 2)
    throw DataError("dtlr: iterations must be >= 0 and scale >= 2");
  if (img.height % spec.scale != 0 || img.width % spec.scale != 0)
    throw DataError("dtlr: image " + std::to_string(img.height) + "x" +
                    std::to_string(img.width) + " not divisible by scale " +
                    std::to_string(spec.scale));
  if (spec.iterations == 0) return img;
  ImageF cur = img;
  const int lh = img.height / spec.scale, lw = img.width / spec.scale;
  for (int i = 0; i < spec.iterations; ++i) {
    cur = resize(cur, lh, lw, spec.filter);
    cur = resize(cur, img.height, img.width, spec.filter);
  }
  return cur;
}

}  // namespace degflow
