#pragma once

#include <filesystem>
#include <vector>

#include "degflow/image.hpp"

namespace degflow {

// Unpaired corpus layout: two directories whose listings are sorted
// lexicographically. No filename correspondence is assumed between them.
struct CorpusLayout {
  std::filesystem::path hr_dir;
  std::filesystem::path lr_dir;
};

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);
std::vector<ImageF> load_dir_images(const std::filesystem::path& dir);

// Desk corpus: procedural HR textures plus synthetically degraded "real" LR
// images with known ground-truth parameters (Gaussian blur sigma in
// [1.0, 2.5] at HR scale, bilinear x4 downscale, additive Gaussian noise
// with sigma in [0.01, 0.04] at LR scale).
struct CorpusSpec {
  int train_images = 120;
  int val_images = 16;
  int hr_size = 128;
  int scale = 4;
  double blur_sigma_min = 1.0;
  double blur_sigma_max = 2.5;
  double noise_sigma_min = 0.01;
  double noise_sigma_max = 0.04;
};

struct CorpusPaths {
  std::filesystem::path root;
  CorpusLayout train;
  CorpusLayout val;
  std::filesystem::path params_csv;  // per-image ground-truth degradation
};

// Writes corpus/{train,val}/{hr,lr}/*.png under `root` plus the parameter
// record. Deterministic per seed.
CorpusPaths generate_corpus(const std::filesystem::path& root, const CorpusSpec& spec,
                            uint64_t seed);

// Procedural texture used for the desk corpus; exposed for fixtures.
ImageF procedural_texture(int size, uint64_t seed);

// Separable Gaussian blur with clamp-to-edge borders (kernel radius 3 sigma).
ImageF gaussian_blur(const ImageF& img, double sigma);

// The corpus's "real-world" degradation: blur at HR scale, bilinear
// downscale by spec.scale, then pixel noise. Returns the degraded LR.
ImageF degrade_real(const ImageF& hr, double blur_sigma, double noise_sigma, int scale,
                    uint64_t noise_seed);

}  // namespace degflow
