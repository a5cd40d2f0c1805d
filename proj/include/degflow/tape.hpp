#pragma once

#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "degflow/tensor.hpp"

namespace degflow {

// Named trainable tensor. Gradients accumulate across tapes until the
// optimizer consumes them.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  std::vector<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() { grad.assign(value.data.size(), T(0)); }
  std::vector<T>& grad_buf() {
    if (grad.size() != value.data.size()) grad.assign(value.data.size(), T(0));
    return grad;
  }
};

// ---- low-level kernels -------------------------------------------------------

namespace detail {

// Dot product with fixed per-lane partial sums; the lane loop vectorizes
// without reassociating a single scalar accumulator, and the result is
// deterministic (lanes reduced in index order).
template <typename T>
T dot_lanes(const T* a, const T* b, int64_t n) {
  constexpr int kLanes = 8;
  T lanes[kLanes] = {};
  int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (int l = 0; l < kLanes; ++l) lanes[l] += a[i + l] * b[i + l];
  T acc = 0;
  for (int l = 0; l < kLanes; ++l) acc += lanes[l];
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T dot_strided(const T* a, const T* b, int64_t n, int stride) {
  constexpr int kLanes = 8;
  T lanes[kLanes] = {};
  int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (int l = 0; l < kLanes; ++l) lanes[l] += a[i + l] * b[(i + l) * stride];
  T acc = 0;
  for (int l = 0; l < kLanes; ++l) acc += lanes[l];
  for (; i < n; ++i) acc += a[i] * b[i * stride];
  return acc;
}

// All nine 3x3 weight-gradient taps for one (oc, ic) pair in a single pass:
// gk[kh*3+kw] += sum_oh sum_ow g[oh,ow] * in_pad[oh+kh, ow+kw]. Nine lane
// accumulators amortize the loads; lanes reduce in index order.
template <typename T>
void weight_grad_3x3(const T* gout, const T* in_pad, int64_t Wp, int64_t OH, int64_t OW,
                     T* gk) {
  constexpr int kLanes = 8;
  T acc[9][kLanes] = {};
  T tail[9] = {};
  for (int64_t oh = 0; oh < OH; ++oh) {
    const T* gr = gout + oh * OW;
    const T* r0 = in_pad + oh * Wp;
    const T* r1 = r0 + Wp;
    const T* r2 = r1 + Wp;
    int64_t j = 0;
    for (; j + kLanes <= OW; j += kLanes)
      for (int l = 0; l < kLanes; ++l) {
        const T gv = gr[j + l];
        acc[0][l] += gv * r0[j + l];
        acc[1][l] += gv * r0[j + l + 1];
        acc[2][l] += gv * r0[j + l + 2];
        acc[3][l] += gv * r1[j + l];
        acc[4][l] += gv * r1[j + l + 1];
        acc[5][l] += gv * r1[j + l + 2];
        acc[6][l] += gv * r2[j + l];
        acc[7][l] += gv * r2[j + l + 1];
        acc[8][l] += gv * r2[j + l + 2];
      }
    for (; j < OW; ++j) {
      const T gv = gr[j];
      tail[0] += gv * r0[j];
      tail[1] += gv * r0[j + 1];
      tail[2] += gv * r0[j + 2];
      tail[3] += gv * r1[j];
      tail[4] += gv * r1[j + 1];
      tail[5] += gv * r1[j + 2];
      tail[6] += gv * r2[j];
      tail[7] += gv * r2[j + 1];
      tail[8] += gv * r2[j + 2];
    }
  }
  for (int k = 0; k < 9; ++k) {
    T total = tail[k];
    for (int l = 0; l < kLanes; ++l) total += acc[k][l];
    gk[k] += total;
  }
}

// Zero-pad one NCHW sample into a [C, H+2p, W+2p] scratch plane.
template <typename T>
void pad_sample(const T* src, int64_t C, int64_t H, int64_t W, int pad, T* dst) {
  const int64_t Hp = H + 2 * pad, Wp = W + 2 * pad;
  std::memset(dst, 0, sizeof(T) * C * Hp * Wp);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < H; ++i)
      std::memcpy(dst + (c * Hp + i + pad) * Wp + pad, src + (c * H + i) * W, sizeof(T) * W);
}

// out[oc] += sum_ic corr(in_pad[ic], ker[oc][ic]); fast path for K=3 stride=1.
template <typename T>
void conv_accum(const T* in_pad, int64_t C, int64_t Hp, int64_t Wp, const T* ker, int64_t OC,
                int64_t K, int stride, T* out, int64_t OH, int64_t OW) {
  for (int64_t oc = 0; oc < OC; ++oc) {
    T* outp = out + oc * OH * OW;
    for (int64_t ic = 0; ic < C; ++ic) {
      const T* inc = in_pad + ic * Hp * Wp;
      const T* kc = ker + (oc * C + ic) * K * K;
      if (K == 3 && stride == 1) {
        for (int64_t kh = 0; kh < 3; ++kh) {
          const T w0 = kc[kh * 3], w1 = kc[kh * 3 + 1], w2 = kc[kh * 3 + 2];
          for (int64_t oh = 0; oh < OH; ++oh) {
            const T* src = inc + (oh + kh) * Wp;
            T* dst = outp + oh * OW;
            for (int64_t ow = 0; ow < OW; ++ow)
              dst[ow] += w0 * src[ow] + w1 * src[ow + 1] + w2 * src[ow + 2];
          }
        }
      } else {
        for (int64_t kh = 0; kh < K; ++kh)
          for (int64_t kw = 0; kw < K; ++kw) {
            const T w = kc[kh * K + kw];
            for (int64_t oh = 0; oh < OH; ++oh) {
              const T* src = inc + (oh * stride + kh) * Wp + kw;
              T* dst = outp + oh * OW;
              for (int64_t ow = 0; ow < OW; ++ow) dst[ow] += w * src[ow * stride];
            }
          }
      }
    }
  }
}

}  // namespace detail

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
template <typename T>
struct Value {
  Tape<T>* tape = nullptr;
  int32_t id = -1;

  const Shape& shape() const;
  const Tensor<T>& tensor() const;
};

// Single-use reverse-mode tape. Each training step records a fresh graph;
// backward() may run once and then the tape is consumed.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- graph construction -------------------------------------------------

  Value<T> constant(Tensor<T> v) { return push(std::move(v), false, nullptr, {}); }

  Value<T> leaf(Tensor<T> v, bool requires_grad) {
    return push(std::move(v), requires_grad, nullptr, {});
  }

  Value<T> param(Param<T>& p) { return push(p.value, true, &p, {}); }

  // Custom differentiable op. `backprop` receives the output gradient and
  // must add into the parents' buffers via grad_buf().
  Value<T> custom(Tensor<T> value, std::vector<Value<T>> parents,
                  std::function<void(Tape<T>&, const std::vector<T>&)> backprop) {
    bool req = false;
    for (const auto& p : parents) req = req || node(p.id).needs_grad;
    Value<T> out = push(std::move(value), req, nullptr, {});
    if (req)
      node(out.id).backprop = [this, bp = std::move(backprop)](const std::vector<T>& g) {
        bp(*this, g);
      };
    return out;
  }

  // ---- elementwise --------------------------------------------------------

  Value<T> add(Value<T> a, Value<T> b) {
    const Tensor<T>&A = val(a), &B = val(b);
    check_same(A, B, "add");
    Tensor<T> out(A.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] + B.data[i];
    return binary(std::move(out), a, b, [this, a, b](const std::vector<T>& g) {
      axpy(grad_buf(a.id), g, T(1));
      axpy(grad_buf(b.id), g, T(1));
    });
  }

  Value<T> sub(Value<T> a, Value<T> b) {
    const Tensor<T>&A = val(a), &B = val(b);
    check_same(A, B, "sub");
    Tensor<T> out(A.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] - B.data[i];
    return binary(std::move(out), a, b, [this, a, b](const std::vector<T>& g) {
      axpy(grad_buf(a.id), g, T(1));
      axpy(grad_buf(b.id), g, T(-1));
    });
  }

  Value<T> mul(Value<T> a, Value<T> b) {
    const Tensor<T>&A = val(a), &B = val(b);
    check_same(A, B, "mul");
    Tensor<T> out(A.shape);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] * B.data[i];
    return binary(std::move(out), a, b, [this, a, b](const std::vector<T>& g) {
      const auto &A = val(a).data, &B = val(b).data;
      if (node(a.id).needs_grad) {
        auto& ga = grad_buf(a.id);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
      }
      if (node(b.id).needs_grad) {
        auto& gb = grad_buf(b.id);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
      }
    });
  }

  Value<T> scale(Value<T> a, T s) {
    Tensor<T> out(val(a).shape);
    const auto& A = val(a).data;
    for (size_t i = 0; i < A.size(); ++i) out.data[i] = A[i] * s;
    return unary(std::move(out), a, [this, a, s](const std::vector<T>& g) {
      axpy(grad_buf(a.id), g, s);
    });
  }

  Value<T> add_scalar(Value<T> a, T s) {
    Tensor<T> out(val(a).shape);
    const auto& A = val(a).data;
    for (size_t i = 0; i < A.size(); ++i) out.data[i] = A[i] + s;
    return unary(std::move(out), a, [this, a](const std::vector<T>& g) {
      axpy(grad_buf(a.id), g, T(1));
    });
  }

  Value<T> abs_(Value<T> a) {
    Tensor<T> out(val(a).shape);
    const auto& A = val(a).data;
    for (size_t i = 0; i < A.size(); ++i) out.data[i] = A[i] < T(0) ? -A[i] : A[i];
    return unary(std::move(out), a, [this, a](const std::vector<T>& g) {
      const auto& A = val(a).data;
      auto& ga = grad_buf(a.id);
      for (size_t i = 0; i < g.size(); ++i)
        ga[i] += A[i] > T(0) ? g[i] : (A[i] < T(0) ? -g[i] : T(0));
    });
  }

  // max(x, slope * x); subgradient at 0 is `slope`.
  Value<T> leaky_relu(Value<T> a, T slope = T(0.2)) {
    Tensor<T> out(val(a).shape);
    const auto& A = val(a).data;
    for (size_t i = 0; i < A.size(); ++i) out.data[i] = A[i] > T(0) ? A[i] : slope * A[i];
    return unary(std::move(out), a, [this, a, slope](const std::vector<T>& g) {
      const auto& A = val(a).data;
      auto& ga = grad_buf(a.id);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += (A[i] > T(0) ? T(1) : slope) * g[i];
    });
  }

  // max(x, 0); subgradient 0 at the kink.
  Value<T> relu_floor(Value<T> a) {
    Tensor<T> out(val(a).shape);
    const auto& A = val(a).data;
    for (size_t i = 0; i < A.size(); ++i) out.data[i] = A[i] > T(0) ? A[i] : T(0);
    return unary(std::move(out), a, [this, a](const std::vector<T>& g) {
      const auto& A = val(a).data;
      auto& ga = grad_buf(a.id);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += A[i] > T(0) ? g[i] : T(0);
    });
  }

  Value<T> expm1_(Value<T> a) {
    Tensor<T> out(val(a).shape);
    const auto& A = val(a).data;
    for (size_t i = 0; i < A.size(); ++i) out.data[i] = std::expm1(A[i]);
    return unary(std::move(out), a, [this, a](const std::vector<T>& g) {
      const auto& A = val(a).data;
      auto& ga = grad_buf(a.id);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += std::exp(A[i]) * g[i];
    });
  }

  // ---- reductions ----------------------------------------------------------

  Value<T> sum_(Value<T> a) {
    const auto& A = val(a).data;
    T acc = 0;
    for (T v : A) acc += v;
    Tensor<T> out(Shape{1});
    out.data[0] = acc;
    return unary(std::move(out), a, [this, a](const std::vector<T>& g) {
      auto& ga = grad_buf(a.id);
      for (auto& v : ga) v += g[0];
    });
  }

  Value<T> mean(Value<T> a) {
    const auto& A = val(a).data;
    T acc = 0;
    for (T v : A) acc += v;
    const T inv = T(1) / static_cast<T>(A.size());
    Tensor<T> out(Shape{1});
    out.data[0] = acc * inv;
    return unary(std::move(out), a, [this, a, inv](const std::vector<T>& g) {
      auto& ga = grad_buf(a.id);
      const T gs = g[0] * inv;
      for (auto& v : ga) v += gs;
    });
  }

  // ---- structured ops -------------------------------------------------------

  // x: [N,C,H,W], b: [C]  ->  x + b broadcast over N,H,W
  Value<T> add_channel_bias(Value<T> x, Value<T> b) {
    const Tensor<T>&X = val(x), &B = val(b);
    if (X.shape.size() != 4 || B.shape.size() != 1 || B.shape[0] != X.shape[1])
      throw DataError("add_channel_bias: x " + shape_str(X.shape) + " vs b " + shape_str(B.shape));
    const int64_t N = X.shape[0], C = X.shape[1], HW = X.shape[2] * X.shape[3];
    Tensor<T> out(X.shape);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const T bv = B.data[c];
        const T* src = X.ptr() + (n * C + c) * HW;
        T* dst = out.ptr() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) dst[i] = src[i] + bv;
      }
    return binary(std::move(out), x, b, [this, x, b, N, C, HW](const std::vector<T>& g) {
      if (node(x.id).needs_grad) axpy(grad_buf(x.id), g, T(1));
      if (node(b.id).needs_grad) {
        auto& gb = grad_buf(b.id);
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c) {
            const T* gp = g.data() + (n * C + c) * HW;
            T acc = 0;
            for (int64_t i = 0; i < HW; ++i) acc += gp[i];
            gb[c] += acc;
          }
      }
    });
  }

  // x: [N,C,H,W], b: [N,C]  ->  per-sample channel bias (time-embedding inject)
  Value<T> add_sample_bias(Value<T> x, Value<T> b) {
    const Tensor<T>&X = val(x), &B = val(b);
    if (X.shape.size() != 4 || B.shape.size() != 2 || B.shape[0] != X.shape[0] ||
        B.shape[1] != X.shape[1])
      throw DataError("add_sample_bias: x " + shape_str(X.shape) + " vs b " + shape_str(B.shape));
    const int64_t N = X.shape[0], C = X.shape[1], HW = X.shape[2] * X.shape[3];
    Tensor<T> out(X.shape);
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const T bv = B.data[nc];
      const T* src = X.ptr() + nc * HW;
      T* dst = out.ptr() + nc * HW;
      for (int64_t i = 0; i < HW; ++i) dst[i] = src[i] + bv;
    }
    return binary(std::move(out), x, b, [this, x, b, N, C, HW](const std::vector<T>& g) {
      if (node(x.id).needs_grad) axpy(grad_buf(x.id), g, T(1));
      if (node(b.id).needs_grad) {
        auto& gb = grad_buf(b.id);
        for (int64_t nc = 0; nc < N * C; ++nc) {
          const T* gp = g.data() + nc * HW;
          T acc = 0;
          for (int64_t i = 0; i < HW; ++i) acc += gp[i];
          gb[nc] += acc;
        }
      }
    });
  }

  // a: [M,K], b: [K,N]
  Value<T> matmul(Value<T> a, Value<T> b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
      throw DataError("matmul: " + shape_str(A.shape) + " x " + shape_str(B.shape));
    const int64_t M = A.shape[0], K = A.shape[1], N = B.shape[1];
    Tensor<T> out(Shape{M, N});
    for (int64_t m = 0; m < M; ++m)
      for (int64_t k = 0; k < K; ++k) {
        const T av = A.data[m * K + k];
        const T* brow = B.ptr() + k * N;
        T* crow = out.ptr() + m * N;
        for (int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
      }
    return binary(std::move(out), a, b, [this, a, b, M, K, N](const std::vector<T>& g) {
      const auto &A = val(a).data, &B = val(b).data;
      if (node(a.id).needs_grad) {
        auto& ga = grad_buf(a.id);
        for (int64_t m = 0; m < M; ++m)
          for (int64_t k = 0; k < K; ++k)
            ga[m * K + k] += detail::dot_lanes(g.data() + m * N, B.data() + k * N, N);
      }
      if (node(b.id).needs_grad) {
        auto& gb = grad_buf(b.id);
        for (int64_t m = 0; m < M; ++m)
          for (int64_t k = 0; k < K; ++k) {
            const T av = A[m * K + k];
            const T* grow = g.data() + m * N;
            T* gbrow = gb.data() + k * N;
            for (int64_t j = 0; j < N; ++j) gbrow[j] += av * grow[j];
          }
      }
    });
  }

  // b: [N] row bias added to a: [M,N]
  Value<T> add_row_bias(Value<T> a, Value<T> b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (A.shape.size() != 2 || B.shape.size() != 1 || B.shape[0] != A.shape[1])
      throw DataError("add_row_bias: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    const int64_t M = A.shape[0], N = A.shape[1];
    Tensor<T> out(A.shape);
    for (int64_t m = 0; m < M; ++m)
      for (int64_t j = 0; j < N; ++j) out.data[m * N + j] = A.data[m * N + j] + B.data[j];
    return binary(std::move(out), a, b, [this, a, b, M, N](const std::vector<T>& g) {
      if (node(a.id).needs_grad) axpy(grad_buf(a.id), g, T(1));
      if (node(b.id).needs_grad) {
        auto& gb = grad_buf(b.id);
        for (int64_t m = 0; m < M; ++m)
          for (int64_t j = 0; j < N; ++j) gb[j] += g[m * N + j];
      }
    });
  }

  // Nearest-neighbour 2x upsampling of [N,C,H,W].
  Value<T> upsample_nearest2(Value<T> x) {
    const Tensor<T>& X = val(x);
    if (X.shape.size() != 4) throw DataError("upsample_nearest2 expects NCHW");
    const int64_t N = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
    Tensor<T> out(Shape{N, C, 2 * H, 2 * W});
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const T* src = X.ptr() + nc * H * W;
      T* dst = out.ptr() + nc * 4 * H * W;
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          const T v = src[i * W + j];
          T* d = dst + (2 * i) * (2 * W) + 2 * j;
          d[0] = v;
          d[1] = v;
          d[2 * W] = v;
          d[2 * W + 1] = v;
        }
    }
    return unary(std::move(out), x, [this, x, N, C, H, W](const std::vector<T>& g) {
      auto& gx = grad_buf(x.id);
      for (int64_t nc = 0; nc < N * C; ++nc) {
        T* dst = gx.data() + nc * H * W;
        const T* src = g.data() + nc * 4 * H * W;
        for (int64_t i = 0; i < H; ++i)
          for (int64_t j = 0; j < W; ++j) {
            const T* s = src + (2 * i) * (2 * W) + 2 * j;
            dst[i * W + j] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
          }
      }
    });
  }

  Value<T> concat_channels(Value<T> a, Value<T> b) {
    const Tensor<T>&A = val(a), &B = val(b);
    if (A.shape.size() != 4 || B.shape.size() != 4 || A.shape[0] != B.shape[0] ||
        A.shape[2] != B.shape[2] || A.shape[3] != B.shape[3])
      throw DataError("concat_channels: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    const int64_t N = A.shape[0], Ca = A.shape[1], Cb = B.shape[1], HW = A.shape[2] * A.shape[3];
    Tensor<T> out(Shape{N, Ca + Cb, A.shape[2], A.shape[3]});
    for (int64_t n = 0; n < N; ++n) {
      std::memcpy(out.ptr() + n * (Ca + Cb) * HW, A.ptr() + n * Ca * HW,
                  sizeof(T) * Ca * HW);
      std::memcpy(out.ptr() + (n * (Ca + Cb) + Ca) * HW, B.ptr() + n * Cb * HW,
                  sizeof(T) * Cb * HW);
    }
    return binary(std::move(out), a, b, [this, a, b, N, Ca, Cb, HW](const std::vector<T>& g) {
      if (node(a.id).needs_grad) {
        auto& ga = grad_buf(a.id);
        for (int64_t n = 0; n < N; ++n)
          for (int64_t i = 0; i < Ca * HW; ++i) ga[n * Ca * HW + i] += g[n * (Ca + Cb) * HW + i];
      }
      if (node(b.id).needs_grad) {
        auto& gb = grad_buf(b.id);
        for (int64_t n = 0; n < N; ++n)
          for (int64_t i = 0; i < Cb * HW; ++i)
            gb[n * Cb * HW + i] += g[(n * (Ca + Cb) + Ca) * HW + i];
      }
    });
  }

  // Cross-correlation of x [N,Cin,H,W] with w [Cout,Cin,K,K], zero padding.
  Value<T> conv2d(Value<T> x, Value<T> w, int stride = 1, int pad = 0);

  // ---- backward -------------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 and runs the recorded graph in reverse. Leaf
  // params receive accumulated gradients. Single use.
  void backward(Value<T> loss) {
    if (consumed_) throw DataError("backward: tape already consumed");
    if (numel(val(loss).shape) != 1) throw DataError("backward needs_grad a scalar loss");
    if (!std::isfinite(static_cast<double>(val(loss).data[0])))
      throw DivergenceError("backward: loss is not finite");
    consumed_ = true;
    grad_buf(loss.id)[0] = T(1);
    for (int32_t i = static_cast<int32_t>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backprop && !n.grad.empty()) n.backprop(n.grad);
    }
    for (Node& n : nodes_)
      if (n.bound && !n.grad.empty()) {
        auto& pg = n.bound->grad_buf();
        for (size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
      }
  }

  bool consumed() const { return consumed_; }

  const Tensor<T>& val(Value<T> v) const { return nodes_[v.id].value; }

  // Gradient of a node after backward (empty if it never received one).
  const std::vector<T>& grad(Value<T> v) const { return nodes_[v.id].grad; }

  std::vector<T>& grad_buf(int32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.data.size(), T(0));
    return n.grad;
  }

  bool needs_grad(Value<T> v) const { return nodes_[v.id].needs_grad; }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    std::function<void(const std::vector<T>&)> backprop;
    bool needs_grad = false;
    Param<T>* bound = nullptr;
  };

  Node& node(int32_t id) { return nodes_[id]; }

  Value<T> push(Tensor<T> v, bool needs_grad, Param<T>* bound,
                std::function<void(const std::vector<T>&)> backprop) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    n.bound = bound;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Value<T>{this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  Value<T> unary(Tensor<T> out, Value<T> a,
                 std::function<void(const std::vector<T>&)> bp) {
    const bool req = node(a.id).needs_grad;
    return push(std::move(out), req, nullptr, req ? std::move(bp) : nullptr);
  }

  Value<T> binary(Tensor<T> out, Value<T> a, Value<T> b,
                  std::function<void(const std::vector<T>&)> bp) {
    const bool req = node(a.id).needs_grad || node(b.id).needs_grad;
    return push(std::move(out), req, nullptr, req ? std::move(bp) : nullptr);
  }

  static void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape != b.shape)
      throw DataError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                      shape_str(b.shape));
  }

  static void axpy(std::vector<T>& y, const std::vector<T>& x, T s) {
    for (size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

template <typename T>
const Shape& Value<T>::shape() const {
  return tape->val(*this).shape;
}

template <typename T>
const Tensor<T>& Value<T>::tensor() const {
  return tape->val(*this);
}

template <typename T>
Value<T> Tape<T>::conv2d(Value<T> x, Value<T> w, int stride, int pad) {
  const Tensor<T>&X = val(x), &W_ = val(w);
  if (X.shape.size() != 4 || W_.shape.size() != 4)
    throw DataError("conv2d expects NCHW input and OIKK kernel");
  if (W_.shape[2] != W_.shape[3]) throw DataError("conv2d expects a square kernel");
  if (X.shape[1] != W_.shape[1])
    throw DataError("conv2d channel mismatch: input " + shape_str(X.shape) + " kernel " +
                    shape_str(W_.shape));
  if (stride < 1 || pad < 0) throw DataError("conv2d: stride must be >=1 and pad >=0");
  const int64_t N = X.shape[0], C = X.shape[1], H = X.shape[2], Wd = X.shape[3];
  const int64_t OC = W_.shape[0], K = W_.shape[2];
  const int64_t Hp = H + 2 * pad, Wp = Wd + 2 * pad;
  if (K > Hp || K > Wp)
    throw DataError("conv2d: kernel " + std::to_string(K) + " larger than padded input " +
                    std::to_string(Hp) + "x" + std::to_string(Wp));
  const int64_t OH = (Hp - K) / stride + 1, OW = (Wp - K) / stride + 1;

  Tensor<T> out(Shape{N, OC, OH, OW});
  std::vector<T> scratch(static_cast<size_t>(C * Hp * Wp));
  for (int64_t n = 0; n < N; ++n) {
    detail::pad_sample(X.ptr() + n * C * H * Wd, C, H, Wd, pad, scratch.data());
    detail::conv_accum(scratch.data(), C, Hp, Wp, W_.ptr(), OC, K, stride,
                       out.ptr() + n * OC * OH * OW, OH, OW);
  }

  auto bp = [this, x, w, stride, pad, N, C, H, Wd, OC, K, Hp, Wp, OH, OW](const std::vector<T>& g) {
    const Tensor<T>&X = val(x), &W_ = val(w);
    const bool need_dx = node(x.id).needs_grad;
    const bool need_dw = node(w.id).needs_grad;
    std::vector<T> in_pad(static_cast<size_t>(C * Hp * Wp));
    std::vector<T> gin_pad;
    std::vector<T> wflip;
    if (need_dx && stride == 1 && pad <= K - 1) {
      // dX = corr(pad(g, K-1-pad), flip-transpose(W)); reuses the fast kernel.
      wflip.resize(static_cast<size_t>(C * OC * K * K));
      for (int64_t oc = 0; oc < OC; ++oc)
        for (int64_t ic = 0; ic < C; ++ic)
          for (int64_t kh = 0; kh < K; ++kh)
            for (int64_t kw = 0; kw < K; ++kw)
              wflip[((ic * OC + oc) * K + (K - 1 - kh)) * K + (K - 1 - kw)] =
                  W_.data[((oc * C + ic) * K + kh) * K + kw];
    }
    if (need_dx && wflip.empty()) gin_pad.resize(static_cast<size_t>(C * Hp * Wp));

    std::vector<T>* gx = need_dx ? &grad_buf(x.id) : nullptr;
    std::vector<T>* gw = need_dw ? &grad_buf(w.id) : nullptr;
    const int64_t padg = K - 1 - pad;
    const int64_t Hg = OH + 2 * padg, Wg = OW + 2 * padg;
    std::vector<T> g_pad, dx;
    if (!wflip.empty()) {
      g_pad.resize(static_cast<size_t>(OC * Hg * Wg));
      dx.resize(static_cast<size_t>(C * H * Wd));
    }
    for (int64_t n = 0; n < N; ++n) {
      const T* gout = g.data() + n * OC * OH * OW;
      if (need_dw || need_dx) detail::pad_sample(X.ptr() + n * C * H * Wd, C, H, Wd, pad, in_pad.data());
      if (need_dw) {
        // dW[oc,ic,kh,kw] += <g row, shifted input row>
        for (int64_t oc = 0; oc < OC; ++oc)
          for (int64_t ic = 0; ic < C; ++ic) {
            const T* inc = in_pad.data() + ic * Hp * Wp;
            T* gk = gw->data() + (oc * C + ic) * K * K;
            if (K == 3 && stride == 1) {
              detail::weight_grad_3x3(gout + oc * OH * OW, inc, Wp, OH, OW, gk);
            } else {
              for (int64_t kh = 0; kh < K; ++kh)
                for (int64_t kw = 0; kw < K; ++kw) {
                  T acc = 0;
                  for (int64_t oh = 0; oh < OH; ++oh) {
                    const T* src = inc + (oh * stride + kh) * Wp + kw;
                    const T* gr = gout + (oc * OH + oh) * OW;
                    acc += stride == 1 ? detail::dot_lanes(gr, src, OW)
                                       : detail::dot_strided(gr, src, OW, stride);
                  }
                  gk[kh * K + kw] += acc;
                }
            }
          }
      }
      if (need_dx) {
        if (!wflip.empty()) {
          detail::pad_sample(gout, OC, OH, OW, static_cast<int>(padg), g_pad.data());
          std::fill(dx.begin(), dx.end(), T(0));
          detail::conv_accum(g_pad.data(), OC, Hg, Wg, wflip.data(), C, K, 1, dx.data(), H, Wd);
          T* gxp = gx->data() + n * C * H * Wd;
          for (int64_t i = 0; i < C * H * Wd; ++i) gxp[i] += dx[i];
        } else {
          std::fill(gin_pad.begin(), gin_pad.end(), T(0));
          for (int64_t oc = 0; oc < OC; ++oc)
            for (int64_t ic = 0; ic < C; ++ic) {
              T* ginc = gin_pad.data() + ic * Hp * Wp;
              const T* kc = W_.ptr() + (oc * C + ic) * K * K;
              for (int64_t kh = 0; kh < K; ++kh)
                for (int64_t kw = 0; kw < K; ++kw) {
                  const T wv = kc[kh * K + kw];
                  for (int64_t oh = 0; oh < OH; ++oh) {
                    T* dst = ginc + (oh * stride + kh) * Wp + kw;
                    const T* gr = gout + (oc * OH + oh) * OW;
                    for (int64_t ow = 0; ow < OW; ++ow) dst[ow * stride] += wv * gr[ow];
                  }
                }
            }
          T* gxp = gx->data() + n * C * H * Wd;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < H; ++i)
              for (int64_t j = 0; j < Wd; ++j)
                gxp[(c * H + i) * Wd + j] += gin_pad[(c * Hp + i + pad) * Wp + j + pad];
        }
      }
    }
  };
  return binary(std::move(out), x, w, std::move(bp));
}

}  // namespace degflow
