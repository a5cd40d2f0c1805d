#pragma once

#include <complex>
#include <vector>

#include "degflow/image.hpp"

namespace degflow {

// Per-channel complex frequency plane. Same dims as the source image,
// channel-planar storage (channel c occupies data[c*H*W .. (c+1)*H*W)).
struct Spectrum {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::complex<double>> data;

  Spectrum() = default;
  Spectrum(int h, int w, int c)
      : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c) {}

  std::complex<double>& at(int c, int u, int v) {
    return data[(static_cast<size_t>(c) * height + u) * width + v];
  }
  std::complex<double> at(int c, int u, int v) const {
    return data[(static_cast<size_t>(c) * height + u) * width + v];
  }
};

// Polar decomposition of a spectrum. amplitude >= 0; phase in (-pi, pi],
// with phase 0 at zero-amplitude bins by convention.
struct AmpPhase {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> amplitude;
  std::vector<double> phase;
};

// Unnormalized forward 2D DFT per channel (sign e^{-2 pi i}).
Spectrum fft2(const ImageF& img);

// Inverse with 1/(HW) normalization. The input must be (near-)conjugate-
// symmetric: residual imaginary parts below 1e-5 (relative to the output
// magnitude, floored at 1) are discarded, larger ones raise DataError.
// Output is NOT clamped.
ImageF ifft2(const Spectrum& spec);

AmpPhase amp_phase(const Spectrum& spec);

// Exact inverse of amp_phase. Errors on negative amplitude.
Spectrum recombine(const AmpPhase& ap);

// ifft2(recombine(amp(fft2(x)), phase(fft2(y)))), clamped to [0,1].
ImageF swap_amplitude(const ImageF& x, const ImageF& y);

// log(1+A) amplitude plane normalized to [0,1] per channel; debug visual.
ImageF amplitude_log_image(const Spectrum& spec);

// ---- plane-level kernels shared with the training path ----------------------

// In-place 2D FFT of one H x W plane. Forward is unnormalized; inverse
// applies 1/(HW). Any size >= 1 per axis (radix-2 plus Bluestein).
void fft2_plane(std::complex<double>* data, int h, int w, bool inverse);

// x = Re(IFFT2(A exp(i phase))) for one plane. Equivalent to Hermitian-
// symmetrizing the spectrum before the inverse transform, so the result is
// exactly real even when `amp` lost its symmetry.
void plane_polar_to_image(const double* amp, const double* phase, int h, int w, double* out);

// Adjoint of plane_polar_to_image with respect to `amp`:
// d/dA = (1/HW) Re(exp(i phase) * conj(FFT2(gout))).
void plane_polar_amp_grad(const double* gout, const double* phase, int h, int w, double* damp);

}  // namespace degflow
