#pragma once

#include "srqat/tensor.hpp"

namespace srqat {

// Elementwise / scalar ops. Shapes must match exactly, or one operand may be
// a single-element tensor (broadcast to the other's shape).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor relu(const Tensor& x);     // subgradient at 0 is 0
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor reciprocal(const Tensor& x);

// Reductions to a [1] scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Round half away from zero; backward is identity (straight-through).
Tensor ste_round(const Tensor& x);
double round_half_away(double x);

/// [N,C,H,W] -> [N,H,W], sum over the channel axis.
Tensor sum_channels(const Tensor& x);

/// [N,...] -> [N], L2 norm over all non-batch elements of each sample.
Tensor per_sample_l2(const Tensor& x);

/// x[N,...] scaled per sample by s[N].
Tensor mul_per_sample(const Tensor& x, const Tensor& s);

/// [N,C] or [N,C,1,1] -> [N], picks channel c.
Tensor select_channel(const Tensor& x, int64_t c);

/// [N,C,H,W] -> [N,C], spatial average.
Tensor global_avg_pool(const Tensor& x);

/// Same storage order, new shape; numel must match.
Tensor reshape(const Tensor& x, Shape new_shape);

/// Adds a fixed per-channel offset (not trainable); used for mean shift.
Tensor add_channel_offset(const Tensor& x, const std::vector<double>& offset);

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);
Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int padding);

Tensor pixel_shuffle(const Tensor& x, int upscale);
/// Inverse permutation of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& x, int downscale);

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  bool initialized = false;
};

/// Training-mode BN over [N,C,H,W] with batch statistics (population variance).
/// Updates `stats` running averages unless `update_running` is false.
Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       BatchNormStats& stats, bool update_running = true);

/// Inference-mode BN using frozen running statistics.
Tensor batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      const BatchNormStats& stats);

}  // namespace srqat
