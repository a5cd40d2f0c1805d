#pragma once

#include <filesystem>
#include <vector>

#include "degflow/checkpoint.hpp"
#include "degflow/fourier.hpp"
#include "degflow/nets.hpp"
#include "degflow/resample.hpp"

namespace degflow {

struct AENetConfig {
  int base_channels = 32;
  int residual_blocks = 3;
  int kernel_size = 3;
};

// Amplitude enhancement network. Operates on log-compressed amplitude
// L = ln(1+A); the residual trunk predicts f(L) and the enhanced amplitude
// is A' = expm1(max(L + f(L), 0)), which is nonnegative by construction and
// reduces to A exactly when the zero-initialized tail leaves f == 0.
template <typename T>
struct AENet {
  AENetConfig cfg;
  Conv2dLayer<T> head;
  std::vector<Conv2dLayer<T>> block_conv1, block_conv2;
  Conv2dLayer<T> tail;

  AENet() = default;

  AENet(const AENetConfig& config, uint64_t seed) : cfg(config) {
    Rng rng(seed, 7001);
    const int c = cfg.base_channels, k = cfg.kernel_size;
    head = Conv2dLayer<T>("fgdm.head", 1, c, k, 1, rng);
    for (int i = 0; i < cfg.residual_blocks; ++i) {
      const std::string base = "fgdm.block" + std::to_string(i);
      block_conv1.emplace_back(base + ".conv1", c, c, k, 1, rng);
      block_conv2.emplace_back(base + ".conv2", c, c, k, 1, rng);
    }
    tail = Conv2dLayer<T>("fgdm.tail", c, 1, k, 1, rng, /*zero_init=*/true);
  }

  // log_amp: [N,1,H,W] -> residual f(L), same shape
  Value<T> residual(Tape<T>& tape, Value<T> log_amp) {
    Value<T> h = tape.leaky_relu(head(tape, log_amp));
    for (size_t i = 0; i < block_conv1.size(); ++i) {
      Value<T> r = tape.leaky_relu(block_conv1[i](tape, h));
      r = block_conv2[i](tape, r);
      h = tape.add(h, r);
    }
    return tail(tape, h);
  }

  // amplitude [N,1,H,W] (log domain applied internally) -> enhanced amplitude
  Value<T> enhance(Tape<T>& tape, Value<T> log_amp) {
    Value<T> f = residual(tape, log_amp);
    return tape.expm1_(tape.relu_floor(tape.add(log_amp, f)));
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    head.collect(out);
    for (size_t i = 0; i < block_conv1.size(); ++i) {
      block_conv1[i].collect(out);
      block_conv2[i].collect(out);
    }
    tail.collect(out);
    return out;
  }
};

struct FgdmTrainConfig {
  int steps = 2000;
  int batch = 8;
  float learning_rate = 1e-4f;
  int patch = 32;
};

// Trained FGDM: the AENet plus the degradation transform it was trained
// against and a little training metadata.
struct FgdmModel {
  AENet<float> net;
  DtlrSpec dtlr_spec;
  int64_t trained_steps = 0;
  std::vector<float> loss_tail;  // last <=200 training losses

  std::vector<CheckpointEntry> to_entries() const;
  static FgdmModel from_entries(const std::vector<CheckpointEntry>& entries);
  void save(const std::filesystem::path& path) const;
  static FgdmModel load(const std::filesystem::path& path);
};

// Enhances nonnegative amplitude planes [N,1,H,W]. Inference-only wrapper
// around AENet::enhance. Errors on negative input.
Tensor<float> aenet_forward(AENet<float>& net, const Tensor<float>& amplitude);

struct FgdmTrainResult {
  FgdmModel model;
  std::vector<float> losses;       // one entry per step
  float init_dtlr_l1 = 0.f;        // L1(dtlr(x), x) baseline measured at init
};

// Stage-1 training on real LR images only: per step, the DT-LR amplitude of
// a real LR patch is enhanced and recombined with the patch's own phase;
// the L1 error against the patch drives Adam. Deterministic per seed.
FgdmTrainResult fgdm_train(const std::vector<ImageF>& lr_corpus, const DtlrSpec& dtlr_spec,
                           const AENetConfig& aenet_cfg, const FgdmTrainConfig& train_cfg,
                           uint64_t seed);

// d = dtlr(input); enhanced amplitude of d recombined with the input's
// phase. Values are left unclamped (export clamps). Output keeps the input
// dimensions; its spectrum keeps the input phase wherever amplitude > 0.
ImageF fgdm_apply(const ImageF& lr_input, FgdmModel& model);

}  // namespace degflow
