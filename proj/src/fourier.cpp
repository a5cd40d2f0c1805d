#include "degflow/fourier.hpp"

#include <algorithm>
#include <cmath>

namespace degflow {

namespace {

using cplx = std::complex<double>;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
void fft_pow2(cplx* a, int n, bool inverse) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / len;
    const cplx wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Bluestein chirp-z for arbitrary n, expressed through a pow2 convolution.
void fft_bluestein(cplx* a, int n, bool inverse) {
  const double sign = inverse ? 1.0 : -1.0;
  int m = 1;
  while (m < 2 * n - 1) m <<= 1;
  std::vector<cplx> w(n);  // chirp e^{sign * i pi k^2 / n}
  for (int k = 0; k < n; ++k) {
    const int64_t k2 = (static_cast<int64_t>(k) * k) % (2 * n);
    const double ang = sign * M_PI * static_cast<double>(k2) / n;
    w[k] = cplx(std::cos(ang), std::sin(ang));
  }
  std::vector<cplx> fa(m, cplx(0, 0)), fb(m, cplx(0, 0));
  for (int k = 0; k < n; ++k) fa[k] = a[k] * w[k];
  fb[0] = std::conj(w[0]);
  for (int k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(w[k]);
  fft_pow2(fa.data(), m, false);
  fft_pow2(fb.data(), m, false);
  for (int k = 0; k < m; ++k) fa[k] *= fb[k];
  fft_pow2(fa.data(), m, true);
  const double inv_m = 1.0 / m;
  for (int k = 0; k < n; ++k) a[k] = fa[k] * inv_m * w[k];
}

void fft_1d(cplx* a, int n, bool inverse) {
  if (n == 1) return;
  if (is_pow2(n))
    fft_pow2(a, n, inverse);
  else
    fft_bluestein(a, n, inverse);
}

}  // namespace

void fft2_plane(cplx* data, int h, int w, bool inverse) {
  for (int y = 0; y < h; ++y) fft_1d(data + static_cast<size_t>(y) * w, w, inverse);
  std::vector<cplx> col(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = data[static_cast<size_t>(y) * w + x];
    fft_1d(col.data(), h, inverse);
    for (int y = 0; y < h; ++y) data[static_cast<size_t>(y) * w + x] = col[y];
  }
  if (inverse) {
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) data[i] *= inv;
  }
}

Spectrum fft2(const ImageF& img) {
  if (img.height < 2 || img.width < 2) throw DataError("fft2: dims must be >= 2");
  Spectrum spec(img.height, img.width, img.channels);
  const size_t plane = static_cast<size_t>(img.height) * img.width;
  for (int c = 0; c < img.channels; ++c) {
    cplx* dst = spec.data.data() + c * plane;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        dst[static_cast<size_t>(y) * img.width + x] = cplx(img.at(y, x, c), 0.0);
    fft2_plane(dst, img.height, img.width, false);
  }
  return spec;
}

ImageF ifft2(const Spectrum& spec) {
  ImageF out(spec.height, spec.width, spec.channels);
  const size_t plane = static_cast<size_t>(spec.height) * spec.width;
  std::vector<cplx> buf(plane);
  for (int c = 0; c < spec.channels; ++c) {
    std::copy(spec.data.begin() + c * plane, spec.data.begin() + (c + 1) * plane, buf.begin());
    fft2_plane(buf.data(), spec.height, spec.width, true);
    double max_re = 0.0, max_im = 0.0;
    for (const cplx& v : buf) {
      max_re = std::max(max_re, std::abs(v.real()));
      max_im = std::max(max_im, std::abs(v.imag()));
    }
    const double tol = 1e-5 * std::max(1.0, max_re);
    if (max_im > tol)
      throw DataError("ifft2: spectrum not conjugate-symmetric (residual imaginary " +
                      std::to_string(max_im) + " exceeds tolerance)");
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x)
        out.at(y, x, c) = static_cast<float>(buf[static_cast<size_t>(y) * spec.width + x].real());
  }
  return out;
}

AmpPhase amp_phase(const Spectrum& spec) {
  AmpPhase ap;
  ap.height = spec.height;
  ap.width = spec.width;
  ap.channels = spec.channels;
  ap.amplitude.resize(spec.data.size());
  ap.phase.resize(spec.data.size());
  for (size_t i = 0; i < spec.data.size(); ++i) {
    const double a = std::abs(spec.data[i]);
    ap.amplitude[i] = a;
    double p = a == 0.0 ? 0.0 : std::atan2(spec.data[i].imag(), spec.data[i].real());
    if (p <= -M_PI) p = M_PI;  // principal value in (-pi, pi]
    ap.phase[i] = p;
  }
  return ap;
}

Spectrum recombine(const AmpPhase& ap) {
  Spectrum spec(ap.height, ap.width, ap.channels);
  for (size_t i = 0; i < spec.data.size(); ++i) {
    if (ap.amplitude[i] < 0.0)
      throw DataError("recombine: negative amplitude at bin " + std::to_string(i));
    spec.data[i] = std::polar(ap.amplitude[i], ap.phase[i]);
  }
  return spec;
}

ImageF swap_amplitude(const ImageF& x, const ImageF& y) {
  if (!x.same_dims(y)) throw DataError("swap_amplitude: dimension mismatch");
  const AmpPhase ax = amp_phase(fft2(x));
  const AmpPhase ay = amp_phase(fft2(y));
  AmpPhase mixed = ay;         // phase of y
  mixed.amplitude = ax.amplitude;  // amplitude of x
  return clamp01(ifft2(recombine(mixed)));
}

ImageF amplitude_log_image(const Spectrum& spec) {
  ImageF out(spec.height, spec.width, spec.channels);
  const size_t plane = static_cast<size_t>(spec.height) * spec.width;
  for (int c = 0; c < spec.channels; ++c) {
    double mx = 0.0;
    for (size_t i = 0; i < plane; ++i)
      mx = std::max(mx, std::log1p(std::abs(spec.data[c * plane + i])));
    const double inv = mx > 0.0 ? 1.0 / mx : 0.0;
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x)
        out.at(y, x, c) = static_cast<float>(
            std::log1p(std::abs(spec.at(c, y, x))) * inv);
  }
  return out;
}

void plane_polar_to_image(const double* amp, const double* phase, int h, int w, double* out) {
  const size_t n = static_cast<size_t>(h) * w;
  std::vector<cplx> buf(n);
  for (size_t i = 0; i < n; ++i) buf[i] = std::polar(amp[i], phase[i]);
  fft2_plane(buf.data(), h, w, true);
  for (size_t i = 0; i < n; ++i) out[i] = buf[i].real();
}

void plane_polar_amp_grad(const double* gout, const double* phase, int h, int w, double* damp) {
  const size_t n = static_cast<size_t>(h) * w;
  std::vector<cplx> buf(n);
  for (size_t i = 0; i < n; ++i) buf[i] = cplx(gout[i], 0.0);
  fft2_plane(buf.data(), h, w, false);
  const double inv = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    const cplx e(std::cos(phase[i]), std::sin(phase[i]));
    damp[i] = inv * (e * std::conj(buf[i])).real();
  }
}

}  // namespace degflow
