#include "degflow/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "degflow/png_io.hpp"
#include "degflow/resample.hpp"

namespace degflow {

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<ImageF> load_dir_images(const std::filesystem::path& dir) {
  std::vector<ImageF> images;
  for (const auto& p : list_pngs(dir)) images.push_back(load_image(p));
  return images;
}

ImageF gaussian_blur(const ImageF& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;

  const int h = img.height, w = img.width, C = img.channels;
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  ImageF tmp(h, w, C), out(h, w, C);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * img.at(y, clampi(x + k, 0, w - 1), c);
        tmp.at(y, x, c) = static_cast<float>(acc);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * tmp.at(clampi(y + k, 0, h - 1), x, c);
        out.at(y, x, c) = static_cast<float>(acc);
      }
  return out;
}

ImageF procedural_texture(int size, uint64_t seed) {
  Rng rng(seed, streams::kCorpus);
  const int n = size;

  // Statistically stationary, detail-rich texture: a multi-octave value
  // noise base (roughly 1/f spectrum) plus fine oriented gratings and a
  // dense field of small hard-edged tiles. Every image draws from the same
  // families with similar energy so the corpus shares its spectral shape
  // while varying in content.
  std::vector<float> luma(static_cast<size_t>(n) * n, 0.f);

  // value-noise octaves, finest grid dominates detail
  float octave_amp = 0.55f;
  for (int grid = 4; grid <= n / 2; grid *= 2) {
    ImageF coarse(grid, grid, 1);
    for (auto& v : coarse.data) v = static_cast<float>(rng.next_double() - 0.5);
    const ImageF up = resize(coarse, n, n, FilterKind::kBicubic);
    for (int i = 0; i < n * n; ++i) luma[i] += octave_amp * up.data[i];
    octave_amp *= 0.62f;
  }

  // fine gratings (8..24 cycles across the image)
  const int n_waves = 3;
  for (int k = 0; k < n_waves; ++k) {
    const double ang = rng.next_double() * M_PI;
    const double freq = 8.0 + rng.next_double() * 16.0;
    const double phase = rng.next_double() * 2.0 * M_PI;
    const double fx = std::cos(ang) * freq * 2.0 * M_PI / n;
    const double fy = std::sin(ang) * freq * 2.0 * M_PI / n;
    const double amp = 0.05 + 0.05 * rng.next_double();
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        luma[static_cast<size_t>(y) * n + x] +=
            static_cast<float>(amp * std::sin(fx * x + fy * y + phase));
  }

  // dense small tiles: sharp edges spread across the whole frame
  const int n_tiles = n * n / 96;
  for (int k = 0; k < n_tiles; ++k) {
    const int rw = 2 + static_cast<int>(rng.next_below(7));
    const int rh = 2 + static_cast<int>(rng.next_below(7));
    const int x0 = static_cast<int>(rng.next_below(static_cast<uint64_t>(n - rw)));
    const int y0 = static_cast<int>(rng.next_below(static_cast<uint64_t>(n - rh)));
    const float v = static_cast<float>(0.35 * (rng.next_double() - 0.5));
    for (int y = y0; y < y0 + rh; ++y)
      for (int x = x0; x < x0 + rw; ++x) luma[static_cast<size_t>(y) * n + x] += v;
  }

  // robust contrast normalization, shared across channels
  std::vector<float> sorted = luma;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 50, sorted.end());
  const float lo = sorted[sorted.size() / 50];
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() * 49 / 50, sorted.end());
  const float hi = sorted[sorted.size() * 49 / 50];
  const float span = hi > lo ? hi - lo : 1.f;

  ImageF out(n, n, 3);
  float tint[3], gain[3];
  for (int c = 0; c < 3; ++c) {
    tint[c] = static_cast<float>(rng.next_double() * 0.08 - 0.04);
    gain[c] = static_cast<float>(0.9 + rng.next_double() * 0.1);
  }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const float base = 0.08f + 0.84f * (luma[static_cast<size_t>(y) * n + x] - lo) / span;
      for (int c = 0; c < 3; ++c) {
        float v = base * gain[c] + tint[c];
        out.at(y, x, c) = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
      }
    }
  return out;
}

ImageF degrade_real(const ImageF& hr, double blur_sigma, double noise_sigma, int scale,
                    uint64_t noise_seed) {
  // blur_sigma is in LR-pixel units; the blur acts before downscaling, so it
  // widens by the scale factor at HR resolution
  ImageF degraded = gaussian_blur(hr, blur_sigma * scale);
  Rng rng(noise_seed, streams::kCorpus + 1);
  for (auto& v : degraded.data)
    v = static_cast<float>(v + noise_sigma * rng.next_normal());
  ImageF lr = resize(degraded, hr.height / scale, hr.width / scale, FilterKind::kBilinear);
  return clamp01(std::move(lr));
}

CorpusPaths generate_corpus(const std::filesystem::path& root, const CorpusSpec& spec,
                            uint64_t seed) {
  namespace fs = std::filesystem;
  CorpusPaths paths;
  paths.root = root;
  paths.train = {root / "train" / "hr", root / "train" / "lr"};
  paths.val = {root / "val" / "hr", root / "val" / "lr"};
  paths.params_csv = root / "degradation_params.csv";
  for (const auto& d : {paths.train.hr_dir, paths.train.lr_dir, paths.val.hr_dir,
                        paths.val.lr_dir})
    fs::create_directories(d);

  std::ofstream params(paths.params_csv);
  if (!params) throw DataError("cannot write " + paths.params_csv.string());
  params << "name,blur_sigma,noise_sigma\n";

  const int total = spec.train_images + spec.val_images;
  char name[32];
  for (int i = 0; i < total; ++i) {
    const bool is_val = i >= spec.train_images;
    const int local = is_val ? i - spec.train_images : i;
    std::snprintf(name, sizeof(name), "%s_%03d.png", is_val ? "val" : "train", local);

    Rng rng(seed, streams::kCorpus + 3 + static_cast<uint64_t>(i) * streams::kStreamStride);
    const uint64_t tex_seed = rng.next_u64();
    const double blur_sigma =
        spec.blur_sigma_min + rng.next_double() * (spec.blur_sigma_max - spec.blur_sigma_min);
    const double noise_sigma =
        spec.noise_sigma_min + rng.next_double() * (spec.noise_sigma_max - spec.noise_sigma_min);
    const uint64_t noise_seed = rng.next_u64();

    const ImageF hr = procedural_texture(spec.hr_size, tex_seed);
    const ImageF lr = degrade_real(hr, blur_sigma, noise_sigma, spec.scale, noise_seed);

    const CorpusLayout& layout = is_val ? paths.val : paths.train;
    save_image(hr, layout.hr_dir / name);
    save_image(lr, layout.lr_dir / name);
    char row[96];
    std::snprintf(row, sizeof(row), "%s,%.6f,%.6f\n", name, blur_sigma, noise_sigma);
    params << row;
  }
  return paths;
}

}  // namespace degflow
