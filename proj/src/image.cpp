#include "degflow/image.hpp"

namespace degflow {

ImageF clamp01(ImageF img) {
  for (auto& v : img.data) v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return img;
}

ImageF center_crop(const ImageF& img, int out_h, int out_w) {
  if (out_h > img.height || out_w > img.width)
    throw DataError("center_crop: requested " + std::to_string(out_h) + "x" +
                    std::to_string(out_w) + " from " + std::to_string(img.height) + "x" +
                    std::to_string(img.width));
  const int oy = (img.height - out_h) / 2;
  const int ox = (img.width - out_w) / 2;
  ImageF out(out_h, out_w, img.channels);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y + oy, x + ox, c);
  return out;
}

ImageF random_patch(const ImageF& img, int size, uint64_t seed) {
  if (size > img.height || size > img.width)
    throw DataError("random_patch: size " + std::to_string(size) + " exceeds image " +
                    std::to_string(img.height) + "x" + std::to_string(img.width));
  Rng rng(seed, streams::kPatch);
  const int oy = static_cast<int>(rng.next_below(static_cast<uint64_t>(img.height - size + 1)));
  const int ox = static_cast<int>(rng.next_below(static_cast<uint64_t>(img.width - size + 1)));
  ImageF out(size, size, img.channels);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y + oy, x + ox, c);
  return out;
}

}  // namespace degflow
