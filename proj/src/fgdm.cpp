#include "degflow/fgdm.hpp"

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


namespace {

int filter_id(FilterKind f) { return static_cast<int>(f); }
FilterKind filter_from_id(int id) {
  if (id < 0 || id > 2) throw DataError("checkpoint: bad filter id " + std::to_string(id));
  return static_cast<FilterKind>(id);
}

// FFT one image channel; returns the complex plane.
std::vector<std::complex<double>> fft_channel(const ImageF& img, int c) {
  std::vector<std::complex<double>> plane(static_cast<size_t>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      plane[static_cast<size_t>(y) * img.width + x] = {img.at(y, x, c), 0.0};
  fft2_plane(plane.data(), img.height, img.width, false);
  return plane;
}

// Differentiable Re(IFFT(A exp(i phase))) over a batch of [N,1,H,W] planes;
// the fixed phases ride along in the closure.
Value<float> polar_image_op(Tape<float>& tape, Value<float> amp,
                            std::shared_ptr<std::vector<double>> phases, int h, int w) {
  const Shape& s = amp.shape();
  const int64_t n_planes = s[0];
  const size_t plane = static_cast<size_t>(h) * w;
  const Tensor<float>& A = amp.tensor();
  Tensor<float> out(s);
  std::vector<double> amp_d(plane), img_d(plane);
  for (int64_t n = 0; n < n_planes; ++n) {
    const float* src = A.ptr() + n * plane;
    for (size_t i = 0; i < plane; ++i) amp_d[i] = src[i];
    plane_polar_to_image(amp_d.data(), phases->data() + n * plane, h, w, img_d.data());
    float* dst = out.ptr() + n * plane;
    for (size_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(img_d[i]);
  }
  return tape.custom(std::move(out), {amp},
                     [amp, phases, n_planes, plane, h, w](Tape<float>& t,
                                                          const std::vector<float>& g) {
                       if (!t.needs_grad(amp)) return;
                       auto& ga = t.grad_buf(amp.id);
                       std::vector<double> g_d(plane), da(plane);
                       for (int64_t n = 0; n < n_planes; ++n) {
                         for (size_t i = 0; i < plane; ++i) g_d[i] = g[n * plane + i];
                         plane_polar_amp_grad(g_d.data(), phases->data() + n * plane, h, w,
                                              da.data());
                         for (size_t i = 0; i < plane; ++i)
                           ga[n * plane + i] += static_cast<float>(da[i]);
                       }
                     });
}

}  // namespace

Tensor<float> aenet_forward(AENet<float>& net, const Tensor<float>& amplitude) {
  if (amplitude.shape.size() != 4 || amplitude.shape[1] != 1)
    throw DataError("aenet_forward expects [N,1,H,W] amplitude planes");
  for (float v : amplitude.data)
    if (v < 0.f) throw DataError("aenet_forward: negative amplitude input");
  Tensor<float> log_amp(amplitude.shape);
  for (size_t i = 0; i < amplitude.data.size(); ++i)
    log_amp.data[i] = std::log1p(amplitude.data[i]);
  Tape<float> tape;
  Value<float> out = net.enhance(tape, tape.constant(std::move(log_amp)));
  return out.tensor();
}

FgdmTrainResult fgdm_train(const std::vector<ImageF>& lr_corpus, const DtlrSpec& dtlr_spec,
                           const AENetConfig& aenet_cfg, const FgdmTrainConfig& train_cfg,
                           uint64_t seed) {
  if (lr_corpus.empty()) throw DataError("fgdm_train: empty LR corpus");
  keep_large_blocks_on_heap();
  const int ps = train_cfg.patch;
  const int channels = lr_corpus.front().channels;
  const size_t plane = static_cast<size_t>(ps) * ps;

  FgdmTrainResult result;
  result.model.net = AENet<float>(aenet_cfg, seed);
  result.model.dtlr_spec = dtlr_spec;
  auto params = result.model.net.params();
  AdamOptimizer<float> opt(params, train_cfg.learning_rate);

  const int64_t n_planes = static_cast<int64_t>(train_cfg.batch) * channels;
  int divergent_run = 0;

  // per-patch constants: log-amplitude of the DT-LR spectrum, the patch's
  // own phase, and the patch pixels (the L1 target)
  struct PatchPlanes {
    std::vector<float> log_amp;
    std::vector<double> phase;
    std::vector<float> target;
    double dtlr_l1 = 0.0;  // sum |d - x| over the patch
  };
  auto build_planes = [&](const ImageF& patch) {
    PatchPlanes pp;
    pp.log_amp.resize(channels * plane);
    pp.phase.resize(channels * plane);
    pp.target.resize(channels * plane);
    const ImageF d = dtlr(patch, dtlr_spec);
    for (int c = 0; c < channels; ++c) {
      const auto spec_d = fft_channel(d, c);
      const auto spec_x = fft_channel(patch, c);
      for (size_t i = 0; i < plane; ++i) {
        pp.log_amp[c * plane + i] = static_cast<float>(std::log1p(std::abs(spec_d[i])));
        const double a = std::abs(spec_x[i]);
        pp.phase[c * plane + i] =
            a == 0.0 ? 0.0 : std::atan2(spec_x[i].imag(), spec_x[i].real());
      }
      for (int y = 0; y < ps; ++y)
        for (int x = 0; x < ps; ++x) {
          pp.target[c * plane + y * ps + x] = patch.at(y, x, c);
          pp.dtlr_l1 += std::abs(d.at(y, x, c) - patch.at(y, x, c));
        }
    }
    return pp;
  };
  // whole-image patches are identical across steps, so their planes are
  // cacheable (the common case at desk scale where patch == LR size)
  std::vector<std::unique_ptr<PatchPlanes>> cache(lr_corpus.size());

  for (int step = 0; step < train_cfg.steps; ++step) {
    Rng rng(seed, streams::kFgdmTrain + static_cast<uint64_t>(step) * streams::kStreamStride);

    Tensor<float> log_amp(Shape{n_planes, 1, ps, ps});
    Tensor<float> target(Shape{n_planes, 1, ps, ps});
    auto phases = std::make_shared<std::vector<double>>(n_planes * plane);

    double init_l1 = 0.0;
    for (int b = 0; b < train_cfg.batch; ++b) {
      const size_t idx = rng.next_below(lr_corpus.size());
      const uint64_t patch_seed = rng.next_u64();
      const ImageF& img = lr_corpus[idx];
      const bool whole_image = ps == img.height && ps == img.width;

      PatchPlanes scratch;
      const PatchPlanes* pp;
      if (whole_image) {
        if (!cache[idx]) cache[idx] = std::make_unique<PatchPlanes>(build_planes(img));
        pp = cache[idx].get();
      } else {
        scratch = build_planes(random_patch(img, ps, patch_seed));
        pp = &scratch;
      }
      const int64_t p0 = static_cast<int64_t>(b) * channels;
      std::copy(pp->log_amp.begin(), pp->log_amp.end(), log_amp.ptr() + p0 * plane);
      std::copy(pp->phase.begin(), pp->phase.end(), phases->data() + p0 * plane);
      std::copy(pp->target.begin(), pp->target.end(), target.ptr() + p0 * plane);
      if (step == 0) init_l1 += pp->dtlr_l1;
    }
    if (step == 0) result.init_dtlr_l1 = static_cast<float>(init_l1 / (n_planes * plane));

    Tape<float> tape;
    Value<float> la = tape.constant(std::move(log_amp));
    Value<float> enhanced = result.model.net.enhance(tape, la);
    Value<float> recon = polar_image_op(tape, enhanced, phases, ps, ps);
    Value<float> loss = tape.mean(tape.abs_(tape.sub(recon, tape.constant(std::move(target)))));

    const float loss_v = loss.tensor().data[0];
    result.losses.push_back(loss_v);
    if (!std::isfinite(loss_v))
      throw DivergenceError("fgdm_train: non-finite loss at step " + std::to_string(step));
    if (step > 0 && loss_v > 10.f * result.losses.front()) {
      if (++divergent_run >= 100)
        throw DivergenceError("fgdm_train: loss " + std::to_string(loss_v) + " above 10x initial " +
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
  result.model.loss_tail.assign(result.losses.end() - tail, result.losses.end());
  return result;
}

ImageF fgdm_apply(const ImageF& lr_input, FgdmModel& model) {
  const ImageF d = dtlr(lr_input, model.dtlr_spec);
  const int h = lr_input.height, w = lr_input.width, channels = lr_input.channels;
  const size_t plane = static_cast<size_t>(h) * w;

  Tensor<float> amp(Shape{channels, 1, h, w});
  std::vector<double> phases(static_cast<size_t>(channels) * plane);
  for (int c = 0; c < channels; ++c) {
    const auto spec_d = fft_channel(d, c);
    const auto spec_x = fft_channel(lr_input, c);
    float* arow = amp.ptr() + static_cast<size_t>(c) * plane;
    double* prow = phases.data() + static_cast<size_t>(c) * plane;
    for (size_t i = 0; i < plane; ++i) {
      arow[i] = static_cast<float>(std::abs(spec_d[i]));
      const double a = std::abs(spec_x[i]);
      prow[i] = a == 0.0 ? 0.0 : std::atan2(spec_x[i].imag(), spec_x[i].real());
    }
  }

  const Tensor<float> enhanced = aenet_forward(model.net, amp);

  ImageF out(h, w, channels);
  std::vector<double> amp_d(plane), img_d(plane);
  for (int c = 0; c < channels; ++c) {
    const float* src = enhanced.ptr() + static_cast<size_t>(c) * plane;
    for (size_t i = 0; i < plane; ++i) amp_d[i] = src[i];
    plane_polar_to_image(amp_d.data(), phases.data() + c * plane, h, w, img_d.data());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(y, x, c) = static_cast<float>(img_d[y * w + x]);
  }
  return out;
}

std::vector<CheckpointEntry> FgdmModel::to_entries() const {
  std::vector<CheckpointEntry> entries;
  for (const Param<float>* p : const_cast<FgdmModel*>(this)->net.params())
    entries.push_back({p->name, p->value});
  entries.push_back({"fgdm.meta.cfg",
                     Tensor<float>(Shape{3}, {static_cast<float>(net.cfg.base_channels),
                                              static_cast<float>(net.cfg.residual_blocks),
                                              static_cast<float>(net.cfg.kernel_size)})});
  entries.push_back({"fgdm.meta.dtlr",
                     Tensor<float>(Shape{3}, {static_cast<float>(dtlr_spec.iterations),
                                              static_cast<float>(dtlr_spec.scale),
                                              static_cast<float>(filter_id(dtlr_spec.filter))})});
  entries.push_back(
      {"fgdm.meta.steps", Tensor<float>(Shape{1}, {static_cast<float>(trained_steps)})});
  if (!loss_tail.empty())
    entries.push_back({"fgdm.meta.loss_tail",
                       Tensor<float>(Shape{static_cast<int64_t>(loss_tail.size())}, loss_tail)});
  return entries;
}

FgdmModel FgdmModel::from_entries(const std::vector<CheckpointEntry>& entries) {
  FgdmModel model;
  const auto& cfg_t = checkpoint_get(entries, "fgdm.meta.cfg");
  AENetConfig cfg{static_cast<int>(cfg_t.data[0]), static_cast<int>(cfg_t.data[1]),
                  static_cast<int>(cfg_t.data[2])};
  model.net = AENet<float>(cfg, 0);
  const auto& dt = checkpoint_get(entries, "fgdm.meta.dtlr");
  model.dtlr_spec = DtlrSpec{static_cast<int>(dt.data[0]), static_cast<int>(dt.data[1]),
                             filter_from_id(static_cast<int>(dt.data[2]))};
  model.trained_steps = static_cast<int64_t>(checkpoint_get(entries, "fgdm.meta.steps").data[0]);
  if (checkpoint_has(entries, "fgdm.meta.loss_tail"))
    model.loss_tail = checkpoint_get(entries, "fgdm.meta.loss_tail").data;
  for (Param<float>* p : model.net.params()) {
    const Tensor<float>& stored = checkpoint_get(entries, p->name);
    if (stored.shape != p->value.shape)
      throw DataError("checkpoint: shape mismatch for " + p->name);
    p->value = stored;
  }
  return model;
}

void FgdmModel::save(const std::filesystem::path& path) const {
  save_checkpoint(path, to_entries());
}

FgdmModel FgdmModel::load(const std::filesystem::path& path) {
  return from_entries(load_checkpoint(path));
}

}  // namespace degflow
