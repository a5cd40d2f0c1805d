#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "degflow/adam.hpp"
#include "degflow/tape.hpp"

namespace degflow {

// 3x3 (or KxK) convolution layer with per-channel bias.
template <typename T>
struct Conv2dLayer {
  Param<T> w;
  Param<T> b;
  int stride = 1;
  int pad = 1;

  Conv2dLayer() = default;

  Conv2dLayer(const std::string& name, int in_ch, int out_ch, int k, int stride_, Rng& rng,
              bool zero_init = false)
      : stride(stride_), pad(k / 2) {
    Tensor<T> wt(Shape{out_ch, in_ch, k, k});
    if (!zero_init) {
      const double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
      for (auto& v : wt.data) v = static_cast<T>(rng.next_normal() * std);
    }
    w = Param<T>(name + ".w", std::move(wt));
    b = Param<T>(name + ".b", Tensor<T>(Shape{out_ch}));
  }

  Value<T> operator()(Tape<T>& tape, Value<T> x) {
    return tape.add_channel_bias(tape.conv2d(x, tape.param(w), stride, pad), tape.param(b));
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

// Affine map [embed_dim] -> [channels] applied per sample; the result is
// broadcast-added over the spatial dims (time-embedding injection).
template <typename T>
struct TimeInject {
  Param<T> w;
  Param<T> b;

  TimeInject() = default;

  TimeInject(const std::string& name, int embed_dim, int channels, Rng& rng) {
    Tensor<T> wt(Shape{embed_dim, channels});
    const double std = std::sqrt(2.0 / embed_dim);
    for (auto& v : wt.data) v = static_cast<T>(rng.next_normal() * std);
    w = Param<T>(name + ".w", std::move(wt));
    b = Param<T>(name + ".b", Tensor<T>(Shape{channels}));
  }

  // x: [N,C,H,W], emb: [N,embed_dim] constant
  Value<T> operator()(Tape<T>& tape, Value<T> x, Value<T> emb) {
    Value<T> proj = tape.add_row_bias(tape.matmul(emb, tape.param(w)), tape.param(b));
    return tape.add_sample_bias(x, proj);
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

// 64-dim sinusoidal embedding of per-sample times in [0,1]; frequencies span
// 1..1000 geometrically.
template <typename T>
Tensor<T> sinusoidal_time_embedding(const std::vector<double>& times, int dim = 64) {
  const int half = dim / 2;
  Tensor<T> emb(Shape{static_cast<int64_t>(times.size()), dim});
  for (size_t n = 0; n < times.size(); ++n)
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(std::log(1000.0) * i / (half - 1));
      emb.data[n * dim + 2 * i] = static_cast<T>(std::sin(times[n] * freq));
      emb.data[n * dim + 2 * i + 1] = static_cast<T>(std::cos(times[n] * freq));
    }
  return emb;
}

}  // namespace degflow
