#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "degflow/errors.hpp"
#include "degflow/rng.hpp"

namespace degflow {

// H x W x C floating image, row-major, channel-last. Values are nominally in
// [0,1]; intermediate pipeline stages may exceed that range and clamp at
// export time.
struct ImageF {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 or 3
  std::vector<float> data;

  ImageF() = default;
  ImageF(int h, int w, int c, float fill = 0.f)
      : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3))
      throw DataError("image: invalid dims " + std::to_string(h) + "x" + std::to_string(w) +
                      "x" + std::to_string(c));
  }

  float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  size_t size() const { return data.size(); }

  bool same_dims(const ImageF& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Clamps every value into [0,1].
ImageF clamp01(ImageF img);

// Centered window; offsets are floor((dim - out) / 2). Errors on oversize.
ImageF center_crop(const ImageF& img, int out_h, int out_w);

// Square patch with a uniform top-left offset drawn from the counter RNG
// (stream streams::kPatch). Deterministic per (img, size, seed).
ImageF random_patch(const ImageF& img, int size, uint64_t seed);

}  // namespace degflow
