#pragma once

#include <utility>

#include "srqat/tensor.hpp"

namespace srqat {

/// Number of representable levels for a bit-width.
inline double level_count(int bits) {
  return static_cast<double>((1ULL << bits) - 1ULL) + 1.0;
}

// Fake quantization (quantize-then-dequantize in real arithmetic) with
// dual bounds. `lo`/`hi` are [1] or per-sample [N] tensors; elements at or
// above the upper bound route their gradient to `hi`, elements at or below
// the lower bound to `lo`, interior elements pass straight through to `x`.
// With `apply_round` false, rounding is replaced by identity (the clip-only
// forward whose true derivative equals the straight-through masks); used by
// the finite-difference suites.
Tensor fake_quant_dual(const Tensor& x, const Tensor& lo, const Tensor& hi, int bits,
                       bool apply_round = true);

// Symmetric single-bound fake quantizer, s = 2*alpha / (2^(b-1) - 1).
// Gradient routing: x >= alpha contributes +g to alpha, x <= -alpha
// contributes -g, interior passes to x.
Tensor fake_quant_symmetric(const Tensor& x, const Tensor& alpha, int bits,
                            bool apply_round = true);

/// Detached symmetric quantize-dequantize (no graph).
Tensor symmetric_quantize(const Tensor& x, double alpha, int bits);

/// Detached dual-bound quantization: returns (integer codes q, dequantized values).
/// q = round(clip(x, lo, hi)/s) + Z with Z = round(-lo/s), s = (hi-lo)/(2^b-1).
std::pair<Tensor, Tensor> dual_quantize(const Tensor& x, double alpha_l, double alpha_u,
                                        int bits);

/// Trainable symmetric activation quantizer (single clipping bound).
struct SymmetricQuantizer {
  Tensor alpha;  // [1], trainable
  int bits = 8;

  SymmetricQuantizer() = default;
  SymmetricQuantizer(double alpha_init, int bits);

  double scale() const;
  Tensor forward(const Tensor& x, bool apply_round = true) const;
  /// Keeps alpha strictly positive after an optimizer step.
  void clamp_params(double eps = 1e-4);
};

/// Dual trainable bounds activation quantizer.
struct ActQuantizer {
  Tensor alpha_l;  // [1], trainable
  Tensor alpha_u;  // [1], trainable
  int bits = 8;
  bool calibrated = false;

  ActQuantizer() = default;
  ActQuantizer(double alpha_l_init, double alpha_u_init, int bits);

  double scale() const;
  double zero_point() const;

  /// Forward with optional per-sample bound multipliers (gate outputs).
  /// Effective bounds: lo = beta_l * alpha_l, hi = beta_u * alpha_u.
  Tensor forward(const Tensor& x, bool apply_round = true) const;
  Tensor forward_gated(const Tensor& x, const Tensor& beta_l, const Tensor& beta_u,
                       bool apply_round = true) const;

  /// Enforces alpha_u - alpha_l >= eps after an optimizer step.
  void clamp_params(double eps = 1e-4);
};

/// Fixed-bound weight quantizer (1st/99th percentile, not trainable).
struct WeightQuantizer {
  double w_l = 0.0;
  double w_u = 0.0;
  int bits = 8;
  bool calibrated = false;
  bool degenerate = false;  // all-constant weights: pass through untouched

  WeightQuantizer() = default;
  explicit WeightQuantizer(int bits) : bits(bits) {}

  void calibrate(const Tensor& w);
  /// Fake-quantizes w; gradient reaches w only inside the clip range.
  Tensor apply(const Tensor& w, bool apply_round = true) const;
};

}  // namespace srqat
