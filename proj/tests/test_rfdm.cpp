#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "degflow/adam.hpp"
#include "degflow/rfdm.hpp"

using namespace degflow;
namespace fs = std::filesystem;

namespace {

Tensor<float> random_tensor(const Shape& shape, uint64_t seed) {
  Tensor<float> t(shape);
  Rng rng(seed, 0);
  for (auto& v : t.data) v = static_cast<float>(rng.next_double());
  return t;
}

ImageF random_image(int h, int w, int c, uint64_t seed) {
  ImageF img(h, w, c);
  Rng rng(seed, 0);
  for (auto& v : img.data) v = static_cast<float>(rng.next_double());
  return img;
}

}  // namespace

TEST_CASE("flow sample endpoints are exact") {
  const Tensor<float> xb = random_tensor({3, 8, 8}, 1);
  const Tensor<float> x1 = random_tensor({3, 8, 8}, 2);
  const FlowSample s0 = make_flow_sample(xb, x1, 0.0, 0.0, 7);
  CHECK(s0.xt.data == xb.data);
  CHECK(s0.x0.data == xb.data);
  const FlowSample s1 = make_flow_sample(xb, x1, 0.0, 1.0, 7);
  CHECK(s1.xt.data == x1.data);
}

TEST_CASE("midpoint interpolation between zero and one images") {
  const Tensor<float> zeros(Shape{1, 4, 4}, 0.f);
  const Tensor<float> ones(Shape{1, 4, 4}, 1.f);
  const FlowSample s = make_flow_sample(zeros, ones, 0.0, 0.5, 3);
  for (float v : s.xt.data) CHECK(v == doctest::Approx(0.5f));
}

TEST_CASE("noise injection has the configured scale") {
  const Tensor<float> xb(Shape{1, 128, 128}, 0.f);
  const FlowSample s = make_flow_sample(xb, xb, 0.1, 0.0, 99);
  double mean = 0.0;
  for (float v : s.x0.data) mean += v;
  mean /= s.x0.data.size();
  double var = 0.0;
  for (float v : s.x0.data) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / s.x0.data.size());
  CHECK(stddev > 0.095);
  CHECK(stddev < 0.105);
}

TEST_CASE("make_flow_sample validates its inputs") {
  const Tensor<float> a = random_tensor({1, 4, 4}, 1);
  const Tensor<float> b = random_tensor({1, 4, 5}, 2);
  CHECK_THROWS_AS(make_flow_sample(a, b, 0.1, 0.5, 1), DataError);
  CHECK_THROWS_AS(make_flow_sample(a, a, -0.1, 0.5, 1), DataError);
  CHECK_THROWS_AS(make_flow_sample(a, a, 0.1, 1.5, 1), DataError);
}

TEST_CASE("flow loss of the zero-init field") {
  RfdmModel model;
  model.net = VelocityNet<float>(VelocityNetConfig{8, 64}, 1, 5);

  const Tensor<float> x(Shape{1, 8, 8}, 0.3f);
  FlowSample same = make_flow_sample(x, x, 0.0, 0.5, 1);
  CHECK(flow_loss(model, same) == doctest::Approx(0.f));  // x1 == x0

  Tensor<float> x1 = x;
  for (auto& v : x1.data) v += 0.25f;  // x1 - x0 constant c
  FlowSample offs = make_flow_sample(x, x1, 0.0, 0.5, 1);
  CHECK(flow_loss(model, offs) == doctest::Approx(0.25 * 0.25).epsilon(1e-5));
}

TEST_CASE("the loss-minimizing constant field is x1 - x0 with minimum 0") {
  // bias-only velocity: a single learned constant field
  const Tensor<float> x0 = random_tensor({1, 4, 4}, 11);
  Tensor<float> x1 = random_tensor({1, 4, 4}, 12);
  Param<float> c("field", Tensor<float>(x0.shape, 0.f));
  AdamOptimizer<float> opt({&c}, 0.05f);
  for (int step = 0; step < 400; ++step) {
    Tape<float> tape;
    Value<float> pred = tape.param(c);
    Tensor<float> target(x0.shape);
    for (size_t i = 0; i < target.data.size(); ++i) target.data[i] = x1.data[i] - x0.data[i];
    Value<float> d = tape.sub(pred, tape.constant(std::move(target)));
    Value<float> loss = tape.mean(tape.mul(d, d));
    tape.backward(loss);
    opt.step();
  }
  double final_loss = 0.0;
  for (size_t i = 0; i < c.value.data.size(); ++i) {
    const double d = c.value.data[i] - (x1.data[i] - x0.data[i]);
    final_loss += d * d;
  }
  CHECK(final_loss / c.value.data.size() < 1e-6);
}

TEST_CASE("euler is exact for constant fields at any K") {
  const Tensor<float> x0 = random_tensor({1, 4, 4}, 3);
  Tensor<float> c(x0.shape);
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] = 0.37f - 0.01f * i;
  const VelocityField field = [&c](const Tensor<float>&, double) { return c; };
  for (int k : {1, 3, 17}) {
    const Tensor<float> out = euler_integrate(field, x0, k);
    for (size_t i = 0; i < out.data.size(); ++i)
      CHECK(out.data[i] == doctest::Approx(x0.data[i] + c.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("euler shows first-order convergence on the linear field") {
  // v(z) = -z integrates to x0 * e^-1; Euler gives x0 (1 - 1/K)^K
  Tensor<float> x0(Shape{1, 2, 2}, 1.f);
  const VelocityField field = [](const Tensor<float>& z, double) {
    Tensor<float> v = z;
    for (auto& val : v.data) val = -val;
    return v;
  };
  auto err = [&](int k) {
    const Tensor<float> out = euler_integrate(field, x0, k);
    return std::abs(out.data[0] - std::exp(-1.0));
  };
  const double ratio = err(10) / err(20);
  CHECK(ratio > 1.8);
  CHECK(ratio < 2.2);
}

TEST_CASE("single-pair conditional field reaches x1 exactly at every K") {
  const Tensor<float> x0 = random_tensor({1, 4, 4}, 5);
  const Tensor<float> x1 = random_tensor({1, 4, 4}, 6);
  const VelocityField field = [&x1](const Tensor<float>& z, double t) {
    Tensor<float> v(z.shape);
    for (size_t i = 0; i < v.data.size(); ++i)
      v.data[i] = static_cast<float>((x1.data[i] - z.data[i]) / (1.0 - t));
    return v;
  };
  for (int k : {1, 5, 20}) {
    const Tensor<float> out = euler_integrate(field, x0, k);
    for (size_t i = 0; i < out.data.size(); ++i)
      CHECK(std::abs(out.data[i] - x1.data[i]) < 1e-5f);
  }
}

TEST_CASE("euler rejects K < 1 and aborts on non-finite states") {
  const Tensor<float> x0 = random_tensor({1, 2, 2}, 7);
  const VelocityField ok = [](const Tensor<float>& z, double) { return z; };
  CHECK_THROWS_AS(euler_integrate(ok, x0, 0), DataError);
  const VelocityField blows_up = [](const Tensor<float>& z, double) {
    Tensor<float> v = z;
    v.data[0] = std::numeric_limits<float>::infinity();
    return v;
  };
  CHECK_THROWS_AS(euler_integrate(blows_up, x0, 4), DivergenceError);
}

TEST_CASE("oracle reduces to (x1 - z)/(1 - t) for a single pair") {
  Tensor<double> xb(Shape{1, 3, 3});
  Tensor<double> x1(Shape{1, 3, 3});
  Tensor<double> z(Shape{1, 3, 3});
  Rng rng(8, 0);
  for (size_t i = 0; i < 9; ++i) {
    xb.data[i] = rng.next_double();
    x1.data[i] = rng.next_double();
    z.data[i] = rng.next_double();
  }
  for (double t : {0.1, 0.5, 0.9}) {
    const Tensor<double> v = conditional_velocity_oracle({{xb, x1}}, 0.1, z, t);
    for (size_t i = 0; i < 9; ++i)
      CHECK(v.data[i] == doctest::Approx((x1.data[i] - z.data[i]) / (1.0 - t)).epsilon(1e-12));
  }
}

TEST_CASE("oracle weight concentrates on the nearest pair") {
  const double lambda = 0.05;
  Tensor<double> xb0(Shape{1, 2, 2}, 0.0), x10(Shape{1, 2, 2}, 0.2);
  Tensor<double> xb1(Shape{1, 2, 2}, 0.0), x11(Shape{1, 2, 2}, 0.2);
  for (auto& v : xb1.data) v += 20 * lambda * 10;  // >= 20 lambda away
  for (auto& v : x11.data) v += 20 * lambda * 10;
  const double t = 0.5;
  Tensor<double> z(Shape{1, 2, 2});
  for (size_t i = 0; i < 4; ++i) z.data[i] = t * x10.data[i] + (1 - t) * xb0.data[i];
  const Tensor<double> v = conditional_velocity_oracle({{xb0, x10}, {xb1, x11}}, lambda, z, t);
  // on pair 0's mean, E[n]=0 so the velocity is exactly x1 - xb of pair 0
  for (size_t i = 0; i < 4; ++i) CHECK(v.data[i] == doctest::Approx(0.2).epsilon(1e-8));
}

TEST_CASE("oracle is symmetric at the midpoint of two symmetric pairs") {
  Tensor<double> xb0(Shape{1, 2, 2}, -1.0), x10(Shape{1, 2, 2}, -0.5);
  Tensor<double> xb1(Shape{1, 2, 2}, 1.0), x11(Shape{1, 2, 2}, 0.5);
  Tensor<double> z(Shape{1, 2, 2}, 0.0);
  const double t = 0.5, lambda = 0.2;
  const Tensor<double> v = conditional_velocity_oracle({{xb0, x10}, {xb1, x11}}, lambda, z, t);
  const Tensor<double> v0 = conditional_velocity_oracle({{xb0, x10}}, lambda, z, t);
  const Tensor<double> v1 = conditional_velocity_oracle({{xb1, x11}}, lambda, z, t);
  for (size_t i = 0; i < 4; ++i)
    CHECK(v.data[i] == doctest::Approx(0.5 * (v0.data[i] + v1.data[i])).epsilon(1e-9));
}

TEST_CASE("oracle validates t and lambda") {
  Tensor<double> a(Shape{1, 2, 2}, 0.0);
  CHECK_THROWS_AS(conditional_velocity_oracle({{a, a}}, 0.1, a, 1.0), DataError);
  CHECK_THROWS_AS(conditional_velocity_oracle({{a, a}}, 0.0, a, 0.5), DataError);
  CHECK_THROWS_AS(conditional_velocity_oracle({}, 0.1, a, 0.5), DataError);
}

TEST_CASE("untrained pipeline with lambda 0 is the identity on images") {
  RfdmModel model;
  model.net = VelocityNet<float>(VelocityNetConfig{16, 64}, 3, 21);
  const ImageF img = random_image(16, 16, 3, 22);
  const ImageF out = rfdm_apply(img, model, 0.0, 20, 5);
  CHECK(out.data == img.data);
}

TEST_CASE("rfdm_apply is bitwise deterministic per seed") {
  RfdmModel model;
  model.net = VelocityNet<float>(VelocityNetConfig{8, 64}, 3, 23);
  const ImageF img = random_image(8, 8, 3, 24);
  const ImageF a = rfdm_apply(img, model, 0.1, 5, 77);
  const ImageF b = rfdm_apply(img, model, 0.1, 5, 77);
  CHECK(a.data == b.data);
  const ImageF c = rfdm_apply(img, model, 0.1, 5, 78);
  CHECK(a.data != c.data);
}

TEST_CASE("training on fixed pairs drives the loss down deterministically") {
  std::vector<std::pair<Tensor<float>, Tensor<float>>> pairs;
  pairs.emplace_back(random_tensor({1, 8, 8}, 31), random_tensor({1, 8, 8}, 32));
  pairs.emplace_back(random_tensor({1, 8, 8}, 33), random_tensor({1, 8, 8}, 34));
  RfdmTrainConfig tc{150, 4, 1e-3f, 8, 0.05f};
  RfdmTrainResult a = train_velocity_on_pairs(pairs, VelocityNetConfig{8, 64}, tc, 9);
  REQUIRE(a.losses.size() == 150);
  double head = 0, tail = 0;
  for (int i = 0; i < 25; ++i) {
    head += a.losses[i];
    tail += a.losses[150 - 25 + i];
  }
  CHECK(tail < head);

  RfdmTrainResult b = train_velocity_on_pairs(pairs, VelocityNetConfig{8, 64}, tc, 9);
  CHECK(a.losses == b.losses);
  auto pa = a.model.net.params(), pb = b.model.net.params();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);
}

TEST_CASE("checkpoints reload to bitwise-identical velocity fields") {
  std::vector<std::pair<Tensor<float>, Tensor<float>>> pairs;
  pairs.emplace_back(random_tensor({3, 8, 8}, 41), random_tensor({3, 8, 8}, 42));
  RfdmTrainConfig tc{20, 2, 1e-3f, 8, 0.1f};
  RfdmTrainResult res = train_velocity_on_pairs(pairs, VelocityNetConfig{8, 64}, tc, 10);

  const fs::path dir = fs::temp_directory_path() / "degflow_rfdm_tests";
  fs::create_directories(dir);
  const fs::path path = dir / "rfdm_test.dgfw";
  res.model.save(path);
  RfdmModel loaded = RfdmModel::load(path);
  CHECK(loaded.lambda == res.model.lambda);
  CHECK(loaded.trained_steps == 20);

  const Tensor<float> probe = random_tensor({3, 8, 8}, 43);
  const Tensor<float> va = res.model.velocity(probe, 0.3);
  const Tensor<float> vb = loaded.velocity(probe, 0.3);
  CHECK(va.data == vb.data);
}
