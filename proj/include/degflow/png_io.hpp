#pragma once

#include <filesystem>

#include "degflow/image.hpp"

namespace degflow {

// Image I/O error kinds. All map to the data-error exit code but stay
// distinguishable for callers and tests.
struct FileMissingError : DataError {
  using DataError::DataError;
};
struct UnsupportedImageError : DataError {
  using DataError::DataError;
};
struct CorruptImageError : DataError {
  using DataError::DataError;
};

// Loads an 8-bit grayscale or RGB PNG; values become v/255 exactly.
// 16-bit, palette, alpha and interlaced files raise UnsupportedImageError.
ImageF load_image(const std::filesystem::path& path);

// Writes an 8-bit PNG; byte = round(v * 255) with ties away from zero.
// Values are expected in [0,1] (clamp first); out-of-range values are
// clipped at the byte conversion.
void save_image(const ImageF& img, const std::filesystem::path& path);

}  // namespace degflow
