#pragma once

#include <random>
#include <utility>
#include <vector>

#include "srqat/ops.hpp"
#include "srqat/tensor.hpp"

namespace srqat {

/// EMA (momentum 0.9) tracker of a tensor's min/max, used as clipping bounds
/// for the gate's 2-bit activation quantizers.
struct RangeTracker {
  double mn = 0.0;
  double mx = 0.0;
  double momentum = 0.9;
  bool initialized = false;

  void update(const std::vector<double>& values);
  bool usable() const { return initialized && mn < mx; }
};

/// BN parameters folded into the preceding convolution:
/// w' = w * gamma / sqrt(var + eps), b' = (b - mean) * gamma / sqrt(var + eps) + beta.
std::pair<Tensor, Tensor> fold_bn(const Tensor& conv_w, const Tensor& conv_b,
                                  const Tensor& bn_gamma, const Tensor& bn_beta,
                                  const std::vector<double>& running_mean,
                                  const std::vector<double>& running_var, double eps);

/// Per-sample bound-scaling controller: conv 3x3 stride 2 (out = max(C/8, 4)),
/// BN, ReLU, global average pool, conv 1x1 to 2 channels, 2*sigmoid.
struct GateController {
  Tensor conv1_w, conv1_b;
  Tensor bn_gamma, bn_beta;
  BatchNormStats bn_stats;
  Tensor conv2_w, conv2_b;
  bool quantized = false;
  int gate_bits = 2;

  RangeTracker in_range;   // gate input features
  RangeTracker act_range;  // post-ReLU activations

  GateController() = default;
  GateController(int64_t in_channels, std::mt19937_64& rng);

  int64_t in_channels() const { return conv1_w.defined() ? conv1_w.dim(1) : 0; }
  int64_t hidden_channels() const { return conv1_w.defined() ? conv1_w.dim(0) : 0; }
  std::vector<Tensor> parameters();
  int64_t param_count() const;

  /// Folds BN into conv1 using the frozen running stats (deployment form).
  void fold_bn_inplace();
};

/// Per-sample (beta_l, beta_u), each in (0, 2). `training` selects batch vs
/// running BN statistics and enables range tracking.
std::pair<Tensor, Tensor> gate_forward(const Tensor& features, GateController& g,
                                       bool training);

/// Enables 2-bit quantization of gate weights and internal activations.
/// Weight bounds are the tensor min/max; activation bounds come from the
/// range trackers (seeded here from `calib_features` if not yet usable).
void quantize_gate(GateController& g, const std::vector<Tensor>& calib_features);

}  // namespace srqat
