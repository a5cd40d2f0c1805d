#include "degflow/rfdm.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace degflow {

// Training reallocates multi-megabyte activation buffers every step; keeping
// them on the heap instead of per-allocation mmaps avoids refaulting fresh
// zero pages each time.
inline void keep_large_blocks_on_heap() {
#if defined(__GLIBC__)
  static const bool once = [] { return mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024) != -1; }();
  (void)once;
#endif
}


Tensor<float> image_to_tensor(const ImageF& img) {
  Tensor<float> t(Shape{img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.data[(static_cast<size_t>(c) * img.height + y) * img.width + x] = img.at(y, x, c);
  return t;
}

ImageF tensor_to_image(const Tensor<float>& t) {
  if (t.shape.size() != 3) throw DataError("tensor_to_image expects [C,H,W]");
  ImageF img(static_cast<int>(t.shape[1]), static_cast<int>(t.shape[2]),
             static_cast<int>(t.shape[0]));
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        img.at(y, x, c) = t.data[(static_cast<size_t>(c) * img.height + y) * img.width + x];
  return img;
}

FlowSample make_flow_sample(const Tensor<float>& x_bar, const Tensor<float>& x_real,
                            double lambda, double t, uint64_t seed) {
  if (x_bar.shape != x_real.shape)
    throw DataError("make_flow_sample: shape mismatch " + shape_str(x_bar.shape) + " vs " +
                    shape_str(x_real.shape));
  if (lambda < 0.0 || t < 0.0 || t > 1.0)
    throw DataError("make_flow_sample: lambda must be >= 0 and t in [0,1]");
  FlowSample s;
  s.x1 = x_real;
  s.t = t;
  if (lambda == 0.0) {
    s.x0 = x_bar;
  } else {
    const Tensor<float> n = randn<float>(x_bar.shape, seed);
    s.x0 = x_bar;
    for (size_t i = 0; i < s.x0.data.size(); ++i)
      s.x0.data[i] += static_cast<float>(lambda) * n.data[i];
  }
  // exact endpoints
  if (t == 0.0) {
    s.xt = s.x0;
  } else if (t == 1.0) {
    s.xt = s.x1;
  } else {
    s.xt = Tensor<float>(s.x0.shape);
    const float tf = static_cast<float>(t);
    for (size_t i = 0; i < s.xt.data.size(); ++i)
      s.xt.data[i] = tf * s.x1.data[i] + (1.f - tf) * s.x0.data[i];
  }
  return s;
}

namespace {

// pred vs target MSE on a tape; target is constant.
Value<float> mse_against(Tape<float>& tape, Value<float> pred, Tensor<float> target) {
  Value<float> diff = tape.sub(pred, tape.constant(std::move(target)));
  return tape.mean(tape.mul(diff, diff));
}

Tensor<float> as_batch1(const Tensor<float>& chw) {
  Tensor<float> b(Shape{1, chw.shape[0], chw.shape[1], chw.shape[2]});
  b.data = chw.data;
  return b;
}

}  // namespace

float flow_loss(RfdmModel& model, const FlowSample& sample) {
  if (sample.x0.shape != sample.x1.shape || sample.x0.shape != sample.xt.shape)
    throw DataError("flow_loss: inconsistent sample shapes");
  Tape<float> tape;
  Value<float> pred =
      model.net.forward(tape, tape.constant(as_batch1(sample.xt)), {sample.t});
  Tensor<float> target(Shape{1, sample.x0.shape[0], sample.x0.shape[1], sample.x0.shape[2]});
  for (size_t i = 0; i < target.data.size(); ++i)
    target.data[i] = sample.x1.data[i] - sample.x0.data[i];
  return mse_against(tape, pred, std::move(target)).tensor().data[0];
}

Tensor<float> RfdmModel::velocity(const Tensor<float>& state, double t) {
  Tape<float> tape;
  Value<float> out = net.forward(tape, tape.constant(as_batch1(state)), {t});
  Tensor<float> v(state.shape);
  v.data = out.tensor().data;
  return v;
}

Tensor<float> euler_integrate(const VelocityField& field, const Tensor<float>& x0, int steps) {
  if (steps < 1) throw DataError("euler_integrate: K must be >= 1");
  Tensor<float> x = x0;
  const double h = 1.0 / steps;
  for (int i = 0; i < steps; ++i) {
    const Tensor<float> v = field(x, static_cast<double>(i) / steps);
    if (v.shape != x.shape) throw DataError("euler_integrate: field changed shape");
    for (size_t j = 0; j < x.data.size(); ++j)
      x.data[j] += static_cast<float>(h) * v.data[j];
    if (!x.all_finite())
      throw DivergenceError("euler_integrate: non-finite state at step " + std::to_string(i));
  }
  return x;
}

Tensor<double> conditional_velocity_oracle(
    const std::vector<std::pair<Tensor<double>, Tensor<double>>>& pairs, double lambda,
    const Tensor<double>& z, double t) {
  if (pairs.empty() || pairs.size() > 8)
    throw DataError("conditional_velocity_oracle: pair count must be in [1,8]");
  if (t >= 1.0 || t < 0.0) throw DataError("conditional_velocity_oracle: t must be in [0,1)");
  if (lambda <= 0.0) throw DataError("conditional_velocity_oracle: lambda must be > 0");
  const size_t n = z.data.size();
  const double s2 = 2.0 * (1.0 - t) * (1.0 - t) * lambda * lambda;

  std::vector<double> logw(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& [xb, x1] = pairs[i];
    if (xb.shape != z.shape || x1.shape != z.shape)
      throw DataError("conditional_velocity_oracle: shape mismatch in pair " + std::to_string(i));
    double d2 = 0.0;
    for (size_t j = 0; j < n; ++j) {
      const double r = z.data[j] - t * x1.data[j] - (1.0 - t) * xb.data[j];
      d2 += r * r;
    }
    logw[i] = -d2 / s2;
  }
  const double m = *std::max_element(logw.begin(), logw.end());
  double norm = 0.0;
  for (double& lw : logw) {
    lw = std::exp(lw - m);
    norm += lw;
  }

  Tensor<double> v(z.shape);
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& [xb, x1] = pairs[i];
    const double w = logw[i] / norm;
    for (size_t j = 0; j < n; ++j) {
      const double resid = z.data[j] - t * x1.data[j] - (1.0 - t) * xb.data[j];
      // x1 - xb - lambda * E[n | pair, z], with E[n] = resid / ((1-t) lambda)
      v.data[j] += w * (x1.data[j] - xb.data[j] - resid / (1.0 - t));
    }
  }
  return v;
}

namespace {

struct StepBatch {
  Tensor<float> xt;
  Tensor<float> target;
  std::vector<double> times;
};

StepBatch assemble_batch(const std::vector<std::pair<Tensor<float>, Tensor<float>>>& pairs,
                         float lambda, int batch, Rng& rng) {
  const Shape& img_shape = pairs.front().first.shape;  // [C,H,W]
  const int64_t C = img_shape[0], H = img_shape[1], W = img_shape[2];
  const size_t numel_img = static_cast<size_t>(C * H * W);
  StepBatch sb;
  sb.xt = Tensor<float>(Shape{batch, C, H, W});
  sb.target = Tensor<float>(Shape{batch, C, H, W});
  sb.times.resize(batch);
  for (int b = 0; b < batch; ++b) {
    const auto& [xb, x1] = pairs[rng.next_below(pairs.size())];
    const double t = rng.next_double();
    sb.times[b] = t;
    float* xtp = sb.xt.ptr() + static_cast<size_t>(b) * numel_img;
    float* tgt = sb.target.ptr() + static_cast<size_t>(b) * numel_img;
    for (size_t j = 0; j < numel_img; ++j) {
      const float x0 = xb.data[j] + lambda * static_cast<float>(rng.next_normal());
      xtp[j] = static_cast<float>(t) * x1.data[j] + (1.f - static_cast<float>(t)) * x0;
      tgt[j] = x1.data[j] - x0;
    }
  }
  return sb;
}

RfdmTrainResult train_loop(
    const std::function<std::vector<std::pair<Tensor<float>, Tensor<float>>>(int)>& pair_source,
    int in_channels, const VelocityNetConfig& vnet_cfg, const RfdmTrainConfig& train_cfg,
    uint64_t seed) {
  keep_large_blocks_on_heap();
  RfdmTrainResult result;
  result.model.net = VelocityNet<float>(vnet_cfg, in_channels, seed);
  result.model.lambda = train_cfg.lambda;
  auto params = result.model.net.params();
  AdamOptimizer<float> opt(params, train_cfg.learning_rate);
  int divergent_run = 0;

  for (int step = 0; step < train_cfg.steps; ++step) {
    Rng rng(seed, streams::kRfdmTrain + static_cast<uint64_t>(step) * streams::kStreamStride);
    const auto pairs = pair_source(step);
    StepBatch sb = assemble_batch(pairs, train_cfg.lambda, train_cfg.batch, rng);

    Tape<float> tape;
    Value<float> pred =
        result.model.net.forward(tape, tape.constant(std::move(sb.xt)), sb.times);
    Value<float> loss = mse_against(tape, pred, std::move(sb.target));

    const float loss_v = loss.tensor().data[0];
    result.losses.push_back(loss_v);
    if (!std::isfinite(loss_v))
      throw DivergenceError("rfdm_train: non-finite loss at step " + std::to_string(step));
    if (step > 0 && loss_v > 10.f * result.losses.front()) {
      if (++divergent_run >= 100)
        throw DivergenceError("rfdm_train: loss " + std::to_string(loss_v) + " above 10x initial " +
                              std::to_string(result.losses.front()) + " for 100 steps (at step " +
                              std::to_string(step) + ")");
    } else {
      divergent_run = 0;
    }

    tape.backward(loss);
    opt.step();
  }

  result.model.trained_steps = train_cfg.steps;
  const size_t tail = std::min<size_t>(200, result.losses.size());
  if (tail > 0)
    result.model.loss_tail.assign(result.losses.end() - tail, result.losses.end());
  return result;
}

}  // namespace

RfdmTrainResult rfdm_train(const std::vector<ImageF>& lr_corpus, FgdmModel& fgdm,
                           const VelocityNetConfig& vnet_cfg, const RfdmTrainConfig& train_cfg,
                           uint64_t seed) {
  if (lr_corpus.empty()) throw DataError("rfdm_train: empty LR corpus");
  const int channels = lr_corpus.front().channels;
  const int ps = train_cfg.patch;

  // FGDM is frozen, so whole-image x_bar tensors can be cached per index.
  auto cache = std::make_shared<std::vector<std::unique_ptr<std::pair<Tensor<float>, Tensor<float>>>>>(
      lr_corpus.size());
  auto pair_source = [&lr_corpus, &fgdm, &train_cfg, cache, ps, seed](int step) {
    Rng rng(seed,
            streams::kRfdmTrain + 7 + static_cast<uint64_t>(step) * streams::kStreamStride);
    std::vector<std::pair<Tensor<float>, Tensor<float>>> pairs;
    pairs.reserve(train_cfg.batch);
    for (int b = 0; b < train_cfg.batch; ++b) {
      const size_t idx = rng.next_below(lr_corpus.size());
      const uint64_t patch_seed = rng.next_u64();
      const ImageF& img = lr_corpus[idx];
      if (ps == img.height && ps == img.width) {
        auto& slot = (*cache)[idx];
        if (!slot)
          slot = std::make_unique<std::pair<Tensor<float>, Tensor<float>>>(
              image_to_tensor(fgdm_apply(img, fgdm)), image_to_tensor(img));
        pairs.push_back(*slot);
      } else {
        const ImageF x1 = random_patch(img, ps, patch_seed);
        pairs.emplace_back(image_to_tensor(fgdm_apply(x1, fgdm)), image_to_tensor(x1));
      }
    }
    return pairs;
  };
  return train_loop(pair_source, channels, vnet_cfg, train_cfg, seed);
}

RfdmTrainResult train_velocity_on_pairs(
    const std::vector<std::pair<Tensor<float>, Tensor<float>>>& pairs,
    const VelocityNetConfig& vnet_cfg, const RfdmTrainConfig& train_cfg, uint64_t seed) {
  if (pairs.empty()) throw DataError("train_velocity_on_pairs: empty pair set");
  const int channels = static_cast<int>(pairs.front().first.shape[0]);
  auto pair_source = [&pairs](int) { return pairs; };
  return train_loop(pair_source, channels, vnet_cfg, train_cfg, seed);
}

ImageF rfdm_apply(const ImageF& lr_bar, RfdmModel& model, double lambda, int steps,
                  uint64_t seed) {
  Tensor<float> x0 = image_to_tensor(lr_bar);
  if (lambda > 0.0) {
    Rng rng(seed, streams::kSynth);
    for (auto& v : x0.data) v += static_cast<float>(lambda * rng.next_normal());
  }
  const Tensor<float> x1 = euler_integrate(
      [&model](const Tensor<float>& state, double t) { return model.velocity(state, t); }, x0,
      steps);
  return tensor_to_image(x1);
}

std::vector<CheckpointEntry> RfdmModel::to_entries() const {
  std::vector<CheckpointEntry> entries;
  for (const Param<float>* p : const_cast<RfdmModel*>(this)->net.params())
    entries.push_back({p->name, p->value});
  entries.push_back({"rfdm.meta.cfg",
                     Tensor<float>(Shape{3}, {static_cast<float>(net.cfg.base_channels),
                                              static_cast<float>(net.cfg.time_embed_dim),
                                              static_cast<float>(net.in_channels)})});
  entries.push_back({"rfdm.meta.lambda", Tensor<float>(Shape{1}, {lambda})});
  entries.push_back(
      {"rfdm.meta.steps", Tensor<float>(Shape{1}, {static_cast<float>(trained_steps)})});
  if (!loss_tail.empty())
    entries.push_back({"rfdm.meta.loss_tail",
                       Tensor<float>(Shape{static_cast<int64_t>(loss_tail.size())}, loss_tail)});
  return entries;
}

RfdmModel RfdmModel::from_entries(const std::vector<CheckpointEntry>& entries) {
  RfdmModel model;
  const auto& cfg_t = checkpoint_get(entries, "rfdm.meta.cfg");
  VelocityNetConfig cfg{static_cast<int>(cfg_t.data[0]), static_cast<int>(cfg_t.data[1])};
  model.net = VelocityNet<float>(cfg, static_cast<int>(cfg_t.data[2]), 0);
  model.lambda = checkpoint_get(entries, "rfdm.meta.lambda").data[0];
  model.trained_steps = static_cast<int64_t>(checkpoint_get(entries, "rfdm.meta.steps").data[0]);
  if (checkpoint_has(entries, "rfdm.meta.loss_tail"))
    model.loss_tail = checkpoint_get(entries, "rfdm.meta.loss_tail").data;
  for (Param<float>* p : model.net.params()) {
    const Tensor<float>& stored = checkpoint_get(entries, p->name);
    if (stored.shape != p->value.shape)
      throw DataError("checkpoint: shape mismatch for " + p->name);
    p->value = stored;
  }
  return model;
}

void RfdmModel::save(const std::filesystem::path& path) const {
  save_checkpoint(path, to_entries());
}

RfdmModel RfdmModel::load(const std::filesystem::path& path) {
  return from_entries(load_checkpoint(path));
}

}  // namespace degflow
