#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "degflow/errors.hpp"
#include "degflow/rng.hpp"

namespace degflow {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense n-dimensional array. Precision is a template parameter: float for
// training, double for the finite-difference oracles.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty unless gradients were requested and computed
  bool requires_grad = false;

  Tensor() = default;

  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)) {
    check_shape(shape);
    data.assign(static_cast<size_t>(numel(shape)), fill);
  }

  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    check_shape(shape);
    if (static_cast<int64_t>(data.size()) != numel(shape))
      throw DataError("tensor data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  static void check_shape(const Shape& s) {
    if (s.empty()) throw DataError("tensor shape must be non-empty");
    for (int64_t d : s)
      if (d <= 0) throw DataError("tensor shape has non-positive dim: " + shape_str(s));
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape;
}

// Standard-normal tensor; identical (shape, seed) gives bitwise-identical
// output. Draws come from stream `streams::kRandn` of the counter RNG.
template <typename T>
Tensor<T> randn(const Shape& shape, uint64_t seed) {
  Tensor<T> t(shape);
  Rng rng(seed, streams::kRandn);
  for (auto& v : t.data) v = static_cast<T>(rng.next_normal());
  return t;
}

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  if (!t.all_finite()) throw DivergenceError("non-finite values in " + what);
}

}  // namespace degflow
