#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "degflow/checkpoint.hpp"
#include "degflow/fgdm.hpp"
#include "degflow/nets.hpp"

namespace degflow {

// One rectified-flow training example: x_t = t*x1 + (1-t)*x0 with
// x0 = x_bar + lambda*n. Endpoints are exact: x_t(0) == x0, x_t(1) == x1.
struct FlowSample {
  Tensor<float> x0;
  Tensor<float> x1;
  double t = 0.0;
  Tensor<float> xt;
};

struct VelocityNetConfig {
  int base_channels = 32;
  int time_embed_dim = 64;
};

// Two-level UNet velocity field. The sinusoidal time embedding is injected
// per level by broadcast-add after a learned affine map; the final layer is
// zero-initialized so the untrained field is identically zero.
template <typename T>
struct VelocityNet {
  VelocityNetConfig cfg;
  int in_channels = 3;
  Conv2dLayer<T> stem, stem2;
  Conv2dLayer<T> down1a, down1b, down2a, down2b;
  Conv2dLayer<T> up1a, up1b, up2a, up2b;
  Conv2dLayer<T> head;
  TimeInject<T> inj_stem, inj_d1, inj_d2, inj_u1, inj_u2;

  VelocityNet() = default;

  VelocityNet(const VelocityNetConfig& config, int in_ch, uint64_t seed)
      : cfg(config), in_channels(in_ch) {
    Rng rng(seed, 7002);
    const int c = cfg.base_channels, e = cfg.time_embed_dim;
    stem = Conv2dLayer<T>("rfdm.stem", in_ch, c, 3, 1, rng);
    stem2 = Conv2dLayer<T>("rfdm.stem2", c, c, 3, 1, rng);
    down1a = Conv2dLayer<T>("rfdm.down1a", c, 2 * c, 3, 2, rng);
    down1b = Conv2dLayer<T>("rfdm.down1b", 2 * c, 2 * c, 3, 1, rng);
    down2a = Conv2dLayer<T>("rfdm.down2a", 2 * c, 4 * c, 3, 2, rng);
    down2b = Conv2dLayer<T>("rfdm.down2b", 4 * c, 4 * c, 3, 1, rng);
    up1a = Conv2dLayer<T>("rfdm.up1a", 4 * c, 2 * c, 3, 1, rng);
    up1b = Conv2dLayer<T>("rfdm.up1b", 4 * c, 2 * c, 3, 1, rng);
    up2a = Conv2dLayer<T>("rfdm.up2a", 2 * c, c, 3, 1, rng);
    up2b = Conv2dLayer<T>("rfdm.up2b", 2 * c, c, 3, 1, rng);
    head = Conv2dLayer<T>("rfdm.head", c, in_ch, 3, 1, rng, /*zero_init=*/true);
    inj_stem = TimeInject<T>("rfdm.temb.stem", e, c, rng);
    inj_d1 = TimeInject<T>("rfdm.temb.d1", e, 2 * c, rng);
    inj_d2 = TimeInject<T>("rfdm.temb.d2", e, 4 * c, rng);
    inj_u1 = TimeInject<T>("rfdm.temb.u1", e, 2 * c, rng);
    inj_u2 = TimeInject<T>("rfdm.temb.u2", e, c, rng);
  }

  // x: [N,C,H,W] with H, W divisible by 4; times: one entry per sample.
  Value<T> forward(Tape<T>& tape, Value<T> x, const std::vector<double>& times) {
    Value<T> emb =
        tape.constant(sinusoidal_time_embedding<T>(times, cfg.time_embed_dim));
    Value<T> e0 = tape.leaky_relu(inj_stem(tape, stem(tape, x), emb));
    e0 = tape.leaky_relu(stem2(tape, e0));
    Value<T> e1 = tape.leaky_relu(inj_d1(tape, down1a(tape, e0), emb));
    e1 = tape.leaky_relu(down1b(tape, e1));
    Value<T> bott = tape.leaky_relu(inj_d2(tape, down2a(tape, e1), emb));
    bott = tape.leaky_relu(down2b(tape, bott));
    Value<T> u1 = tape.leaky_relu(inj_u1(tape, up1a(tape, tape.upsample_nearest2(bott)), emb));
    u1 = tape.leaky_relu(up1b(tape, tape.concat_channels(u1, e1)));
    Value<T> u2 = tape.leaky_relu(inj_u2(tape, up2a(tape, tape.upsample_nearest2(u1)), emb));
    u2 = tape.leaky_relu(up2b(tape, tape.concat_channels(u2, e0)));
    return head(tape, u2);
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto* l : {&stem, &stem2, &down1a, &down1b, &down2a, &down2b, &up1a, &up1b, &up2a,
                    &up2b, &head})
      l->collect(out);
    for (auto* i : {&inj_stem, &inj_d1, &inj_d2, &inj_u1, &inj_u2}) i->collect(out);
    return out;
  }
};

struct RfdmTrainConfig {
  int steps = 3000;
  int batch = 8;
  float learning_rate = 1e-4f;
  int patch = 32;
  float lambda = 0.1f;
};

struct RfdmModel {
  VelocityNet<float> net;
  float lambda = 0.1f;
  int64_t trained_steps = 0;
  std::vector<float> loss_tail;

  std::vector<CheckpointEntry> to_entries() const;
  static RfdmModel from_entries(const std::vector<CheckpointEntry>& entries);
  void save(const std::filesystem::path& path) const;
  static RfdmModel load(const std::filesystem::path& path);

  // Velocity field evaluation for one image-shaped tensor [C,H,W].
  Tensor<float> velocity(const Tensor<float>& state, double t);
};

// Builds one flow sample; n ~ N(0,I) comes from the seeded randn stream.
FlowSample make_flow_sample(const Tensor<float>& x_bar, const Tensor<float>& x_real,
                            double lambda, double t, uint64_t seed);

// Mean squared error between (x1 - x0) and vnet(x_t, t).
float flow_loss(RfdmModel& model, const FlowSample& sample);

// Explicit Euler over the unit interval: K steps of size 1/K, velocity
// evaluated at t = i/K. Aborts (naming the step) if the state goes
// non-finite. The field signature is v(state, t) -> same-shape tensor.
using VelocityField = std::function<Tensor<float>(const Tensor<float>&, double)>;
Tensor<float> euler_integrate(const VelocityField& field, const Tensor<float>& x0, int steps);

// Exact causal velocity E[X1 - X0 | X_t = z] for a small discrete set of
// (x_bar, x1) pairs with Gaussian noise of scale lambda on x0. Test oracle;
// errors at t = 1.
Tensor<double> conditional_velocity_oracle(
    const std::vector<std::pair<Tensor<double>, Tensor<double>>>& pairs, double lambda,
    const Tensor<double>& z, double t);

struct RfdmTrainResult {
  RfdmModel model;
  std::vector<float> losses;
};

// Stage-2 training: per step, sample real LR patches x1, run the frozen
// FGDM on them to get x_bar, draw t ~ U[0,1] and noise per sample, and
// minimize the flow matching loss with Adam. Deterministic per seed.
RfdmTrainResult rfdm_train(const std::vector<ImageF>& lr_corpus, FgdmModel& fgdm,
                           const VelocityNetConfig& vnet_cfg, const RfdmTrainConfig& train_cfg,
                           uint64_t seed);

// Generic trainer over a fixed pair set (x_bar, x1); used by rfdm_train's
// toy-scale counterpart and the oracle-equivalence tests.
RfdmTrainResult train_velocity_on_pairs(
    const std::vector<std::pair<Tensor<float>, Tensor<float>>>& pairs,
    const VelocityNetConfig& vnet_cfg, const RfdmTrainConfig& train_cfg, uint64_t seed);

// x0 = lr_bar + lambda*n (seeded), then Euler integration with K steps.
// Output is unclamped.
ImageF rfdm_apply(const ImageF& lr_bar, RfdmModel& model, double lambda, int steps,
                  uint64_t seed);

// Image <-> CHW tensor bridges shared by the flow pipeline.
Tensor<float> image_to_tensor(const ImageF& img);
ImageF tensor_to_image(const Tensor<float>& t);

}  // namespace degflow
