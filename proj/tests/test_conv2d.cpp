#include <doctest.h>

#include "degflow/tape.hpp"
#include "fd_check.hpp"

using namespace degflow;

namespace {

// Quadruple-nested-loop reference convolution (cross-correlation), written
// without any of the production kernels' shortcuts.
template <typename T>
Tensor<T> conv2d_reference(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
  const int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t OC = w.shape[0], K = w.shape[2];
  const int64_t OH = (H + 2 * pad - K) / stride + 1;
  const int64_t OW = (W + 2 * pad - K) / stride + 1;
  Tensor<T> out(Shape{N, OC, OH, OW});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t oc = 0; oc < OC; ++oc)
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          double acc = 0.0;
          for (int64_t ic = 0; ic < C; ++ic)
            for (int64_t kh = 0; kh < K; ++kh)
              for (int64_t kw = 0; kw < K; ++kw) {
                const int64_t iy = oh * stride + kh - pad;
                const int64_t ix = ow * stride + kw - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += static_cast<double>(x.data[((n * C + ic) * H + iy) * W + ix]) *
                       w.data[((oc * C + ic) * K + kh) * K + kw];
              }
          out.data[((n * OC + oc) * OH + oh) * OW + ow] = static_cast<T>(acc);
        }
  return out;
}

template <typename T>
Tensor<T> run_conv(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
  Tape<T> tape;
  return tape.conv2d(tape.constant(x), tape.constant(w), stride, pad).tensor();
}

}  // namespace

TEST_CASE("1x1 identity kernel returns the input") {
  Tensor<float> x(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor<float> w(Shape{1, 1, 1, 1}, {1.f});
  const auto y = run_conv(x, w, 1, 0);
  REQUIRE(y.shape == x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("3x3 all-ones kernel on all-ones 3x3 input sums to 9") {
  Tensor<float> x(Shape{1, 1, 3, 3}, std::vector<float>(9, 1.f));
  Tensor<float> w(Shape{1, 1, 3, 3}, std::vector<float>(9, 1.f));
  const auto y = run_conv(x, w, 1, 0);
  REQUIRE(y.shape == Shape{1, 1, 1, 1});
  CHECK(y.data[0] == doctest::Approx(9.f));
}

TEST_CASE("strided padded conv matches the nested-loop reference") {
  Rng rng(31, 0);
  Tensor<float> x(Shape{1, 2, 5, 5});
  for (auto& v : x.data) v = static_cast<float>(rng.next_double() * 2 - 1);
  Tensor<float> w(Shape{3, 2, 3, 3});
  for (auto& v : w.data) v = static_cast<float>(rng.next_double() * 2 - 1);
  const auto got = run_conv(x, w, 2, 1);
  const auto want = conv2d_reference(x, w, 2, 1);
  REQUIRE(got.shape == want.shape);
  for (size_t i = 0; i < got.data.size(); ++i)
    CHECK(std::abs(got.data[i] - want.data[i]) <=
          1e-5f * std::max(1.f, std::abs(want.data[i])));
}

TEST_CASE("randomized shapes agree with the reference to 1e-5 relative") {
  Rng shapes(77, 0);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 1 + static_cast<int>(shapes.next_below(2));
    const int c = 1 + static_cast<int>(shapes.next_below(3));
    const int oc = 1 + static_cast<int>(shapes.next_below(4));
    const int h = 3 + static_cast<int>(shapes.next_below(8));
    const int w = 3 + static_cast<int>(shapes.next_below(8));
    const int k = 1 + 2 * static_cast<int>(shapes.next_below(2));  // 1 or 3
    const int stride = 1 + static_cast<int>(shapes.next_below(2));
    const int pad = static_cast<int>(shapes.next_below(2));
    Tensor<double> x(Shape{n, c, h, w});
    Rng rng(trial + 100, 0);
    for (auto& v : x.data) v = rng.next_double() * 2 - 1;
    Tensor<double> wt(Shape{oc, c, k, k});
    for (auto& v : wt.data) v = rng.next_double() * 2 - 1;
    const auto got = run_conv(x, wt, stride, pad);
    const auto want = conv2d_reference(x, wt, stride, pad);
    REQUIRE(got.shape == want.shape);
    for (size_t i = 0; i < got.data.size(); ++i)
      CHECK(std::abs(got.data[i] - want.data[i]) <= 1e-5 * std::max(1.0, std::abs(want.data[i])));
  }
}

TEST_CASE("kernel larger than the padded input is rejected") {
  Tensor<float> x(Shape{1, 1, 2, 2}, std::vector<float>(4, 1.f));
  Tensor<float> w(Shape{1, 1, 5, 5}, std::vector<float>(25, 1.f));
  Tape<float> tape;
  CHECK_THROWS_AS(tape.conv2d(tape.constant(x), tape.constant(w), 1, 0), DataError);
}

TEST_CASE("channel mismatch is rejected") {
  Tensor<float> x(Shape{1, 2, 4, 4}, std::vector<float>(32, 1.f));
  Tensor<float> w(Shape{1, 3, 3, 3}, std::vector<float>(27, 1.f));
  Tape<float> tape;
  CHECK_THROWS_AS(tape.conv2d(tape.constant(x), tape.constant(w), 1, 1), DataError);
}

TEST_CASE("conv2d gradients match finite differences for both arguments") {
  fd::check_gradients(
      [](Tape<double>& t, const std::vector<Value<double>>& in) {
        Value<double> y = t.conv2d(in[0], in[1], 1, 1);
        return t.mean(t.mul(y, y));
      },
      {fd::smooth_random({2, 2, 4, 4}, 21), fd::smooth_random({2, 2, 3, 3}, 22)});
}
