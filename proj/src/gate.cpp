#include "srqat/gate.hpp"

#include <algorithm>
#include <cmath>

#include "srqat/quant.hpp"

namespace srqat {

void RangeTracker::update(const std::vector<double>& values) {
  if (values.empty()) return;
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  if (!initialized) {
    mn = *mn_it;
    mx = *mx_it;
    initialized = true;
  } else {
    mn = momentum * mn + (1.0 - momentum) * *mn_it;
    mx = momentum * mx + (1.0 - momentum) * *mx_it;
  }
}

std::pair<Tensor, Tensor> fold_bn(const Tensor& conv_w, const Tensor& conv_b,
                                  const Tensor& bn_gamma, const Tensor& bn_beta,
                                  const std::vector<double>& running_mean,
                                  const std::vector<double>& running_var, double eps) {
  const int64_t O = conv_w.dim(0);
  if (conv_b.numel() != O || bn_gamma.numel() != O || bn_beta.numel() != O ||
      static_cast<int64_t>(running_mean.size()) != O ||
      static_cast<int64_t>(running_var.size()) != O) {
    throw ShapeError("fold_bn: per-channel parameter sizes must equal output channels");
  }
  const int64_t per = conv_w.numel() / O;
  std::vector<double> wf(conv_w.values().size());
  std::vector<double> bf(static_cast<size_t>(O));
  for (int64_t o = 0; o < O; ++o) {
    const double denom = running_var[o] + eps;
    if (!(denom > 0.0)) throw ValueError("fold_bn: running variance + eps must be > 0");
    const double k = bn_gamma.values()[o] / std::sqrt(denom);
    for (int64_t i = 0; i < per; ++i) {
      wf[static_cast<size_t>(o * per + i)] = conv_w.values()[o * per + i] * k;
    }
    bf[o] = (conv_b.values()[o] - running_mean[o]) * k + bn_beta.values()[o];
  }
  return {Tensor::from(conv_w.shape(), std::move(wf)), Tensor::from({O}, std::move(bf))};
}

GateController::GateController(int64_t in_channels, std::mt19937_64& rng) {
  if (in_channels < 1) throw ValueError("GateController: in_channels must be >= 1");
  const int64_t hidden = std::max<int64_t>(in_channels / 8, 4);
  const double s1 = std::sqrt(2.0 / static_cast<double>(in_channels * 9));
  conv1_w = Tensor::randn({hidden, in_channels, 3, 3}, rng, s1, true);
  conv1_b = Tensor::zeros({hidden}, true);
  bn_gamma = Tensor::full({hidden}, 1.0, true);
  bn_beta = Tensor::zeros({hidden}, true);
  // Near-zero head: betas start close to 1 and warmup refines them.
  conv2_w = Tensor::randn({2, hidden, 1, 1}, rng, 0.01, true);
  conv2_b = Tensor::zeros({2}, true);
}

std::vector<Tensor> GateController::parameters() {
  return {conv1_w, conv1_b, bn_gamma, bn_beta, conv2_w, conv2_b};
}

int64_t GateController::param_count() const {
  return conv1_w.numel() + conv1_b.numel() + bn_gamma.numel() + bn_beta.numel() +
         conv2_w.numel() + conv2_b.numel();
}

void GateController::fold_bn_inplace() {
  auto [wf, bf] = fold_bn(conv1_w, conv1_b, bn_gamma, bn_beta, bn_stats.running_mean,
                          bn_stats.running_var, bn_stats.eps);
  conv1_w = wf;
  conv1_b = bf;
  bn_gamma = Tensor::full({hidden_channels()}, 1.0);
  bn_beta = Tensor::zeros({hidden_channels()});
  std::fill(bn_stats.running_mean.begin(), bn_stats.running_mean.end(), 0.0);
  std::fill(bn_stats.running_var.begin(), bn_stats.running_var.end(), 1.0 - bn_stats.eps);
}

namespace {

/// Min/max-bounded fake quantization; constant weights pass through.
Tensor quant_minmax(const Tensor& t, int bits) {
  const auto [mn_it, mx_it] = std::minmax_element(t.values().begin(), t.values().end());
  if (!(*mn_it < *mx_it)) return t;
  return fake_quant_dual(t, Tensor::scalar(*mn_it), Tensor::scalar(*mx_it), bits);
}

Tensor quant_tracked(const Tensor& t, const RangeTracker& r, int bits) {
  if (!r.usable()) return t;
  return fake_quant_dual(t, Tensor::scalar(r.mn), Tensor::scalar(r.mx), bits);
}

}  // namespace

std::pair<Tensor, Tensor> gate_forward(const Tensor& features, GateController& g, bool training) {
  if (features.shape().size() != 4 || features.dim(1) != g.in_channels()) {
    throw ShapeError("gate_forward: expected [N," + std::to_string(g.in_channels()) +
                     ",H,W], got " + shape_str(features.shape()));
  }
  if (training) g.in_range.update(features.values());

  Tensor x = features;
  Tensor w1 = g.conv1_w;
  if (g.quantized) {
    x = quant_tracked(x, g.in_range, g.gate_bits);
    w1 = quant_minmax(w1, g.gate_bits);
  }
  Tensor h = conv2d(x, w1, g.conv1_b, 2, 1);
  h = training ? batchnorm_train(h, g.bn_gamma, g.bn_beta, g.bn_stats)
               : batchnorm_eval(h, g.bn_gamma, g.bn_beta, g.bn_stats);
  h = relu(h);
  if (training) g.act_range.update(h.values());

  Tensor w2 = g.conv2_w;
  if (g.quantized) {
    h = quant_tracked(h, g.act_range, g.gate_bits);
    w2 = quant_minmax(w2, g.gate_bits);
  }
  Tensor pooled = reshape(global_avg_pool(h), {h.dim(0), h.dim(1), 1, 1});
  Tensor z = conv2d(pooled, w2, g.conv2_b, 1, 0);  // [N,2,1,1]
  Tensor beta_l = mul_scalar(sigmoid(select_channel(z, 0)), 2.0);
  Tensor beta_u = mul_scalar(sigmoid(select_channel(z, 1)), 2.0);
  return {beta_l, beta_u};
}

void quantize_gate(GateController& g, const std::vector<Tensor>& calib_features) {
  if (!g.in_range.usable() || !g.act_range.usable()) {
    autograd::NoGradGuard ng;
    for (const auto& f : calib_features) {
      bool saved = g.quantized;
      g.quantized = false;
      gate_forward(f, g, /*training=*/true);
      g.quantized = saved;
    }
  }
  g.quantized = true;
}

}  // namespace srqat
