#include "srqat/quant.hpp"

#include <cmath>
#include <cstdint>
#include <iostream>

#include "srqat/calibration.hpp"
#include "srqat/ops.hpp"

namespace srqat {

namespace {

enum class Branch : uint8_t { kInterior = 0, kUpper = 1, kLower = 2 };

void check_bound_tensor(const Tensor& b, int64_t batch, const char* name) {
  if (b.numel() == 1) return;
  if (b.shape().size() == 1 && b.dim(0) == batch) return;
  throw ShapeError(std::string("fake_quant_dual: ") + name + " must be [1] or [N=" +
                   std::to_string(batch) + "], got " + shape_str(b.shape()));
}

}  // namespace

Tensor fake_quant_dual(const Tensor& x, const Tensor& lo, const Tensor& hi, int bits,
                       bool apply_round) {
  if (bits < 2 || bits > 32) throw ValueError("fake_quant_dual: bits must be in [2,32]");
  const int64_t batch = x.shape().empty() ? 1 : x.dim(0);
  check_bound_tensor(lo, batch, "lo");
  check_bound_tensor(hi, batch, "hi");
  const bool lo_scalar = lo.numel() == 1;
  const bool hi_scalar = hi.numel() == 1;
  const int64_t per = x.numel() / batch;
  const double levels = level_count(bits) - 1.0;  // 2^b - 1 steps

  const size_t n = static_cast<size_t>(x.numel());
  std::vector<double> out(n);
  auto branch = std::make_shared<std::vector<uint8_t>>(n);
  const auto& xv = x.values();
  for (int64_t s_idx = 0; s_idx < batch; ++s_idx) {
    const double l = lo.values()[lo_scalar ? 0 : s_idx];
    const double h = hi.values()[hi_scalar ? 0 : s_idx];
    if (!(l < h)) {
      throw ValueError("fake_quant_dual: lower bound " + std::to_string(l) +
                       " >= upper bound " + std::to_string(h));
    }
    const double s = (h - l) / levels;
    for (int64_t i = 0; i < per; ++i) {
      const size_t idx = static_cast<size_t>(s_idx * per + i);
      const double v = xv[idx];
      double clipped;
      if (v >= h) {
        clipped = h;
        (*branch)[idx] = static_cast<uint8_t>(Branch::kUpper);
      } else if (v <= l) {
        clipped = l;
        (*branch)[idx] = static_cast<uint8_t>(Branch::kLower);
      } else {
        clipped = v;
        (*branch)[idx] = static_cast<uint8_t>(Branch::kInterior);
      }
      if (apply_round) {
        // Clamp the code so it fits in b bits even when both bounds sit on a
        // rounding tie (round half away can overshoot by one level there).
        const double Z = round_half_away(-l / s);
        double r = round_half_away(clipped / s);
        r = std::min(std::max(r, -Z), levels - Z);
        out[idx] = r * s;
      } else {
        out[idx] = clipped;
      }
    }
  }

  auto xn = x.node();
  auto ln = lo.node();
  auto hn = hi.node();
  return Tensor::make_op(
      x.shape(), std::move(out), {x, lo, hi},
      [xn, ln, hn, branch, batch, per, lo_scalar, hi_scalar](Tensor::Node& self) {
        auto& gx = xn->grad_buf();
        auto& gl = ln->grad_buf();
        auto& gh = hn->grad_buf();
        for (int64_t s_idx = 0; s_idx < batch; ++s_idx) {
          double acc_l = 0.0, acc_h = 0.0;
          for (int64_t i = 0; i < per; ++i) {
            const size_t idx = static_cast<size_t>(s_idx * per + i);
            const double g = self.g[idx];
            switch (static_cast<Branch>((*branch)[idx])) {
              case Branch::kInterior:
                gx[idx] += g;
                break;
              case Branch::kUpper:
                acc_h += g;
                break;
              case Branch::kLower:
                acc_l += g;
                break;
            }
          }
          gl[lo_scalar ? 0 : s_idx] += acc_l;
          gh[hi_scalar ? 0 : s_idx] += acc_h;
        }
      });
}

Tensor fake_quant_symmetric(const Tensor& x, const Tensor& alpha, int bits, bool apply_round) {
  if (bits < 2 || bits > 32) throw ValueError("fake_quant_symmetric: bits must be in [2,32]");
  if (alpha.numel() != 1) throw ShapeError("fake_quant_symmetric: alpha must be [1]");
  const double a = alpha.values()[0];
  if (!(a > 0.0)) throw ValueError("fake_quant_symmetric: alpha must be > 0");
  const double s = 2.0 * a / (std::pow(2.0, bits - 1) - 1.0);

  const size_t n = static_cast<size_t>(x.numel());
  std::vector<double> out(n);
  auto branch = std::make_shared<std::vector<uint8_t>>(n);
  for (size_t i = 0; i < n; ++i) {
    const double v = x.values()[i];
    double clipped;
    if (v >= a) {
      clipped = a;
      (*branch)[i] = static_cast<uint8_t>(Branch::kUpper);
    } else if (v <= -a) {
      clipped = -a;
      (*branch)[i] = static_cast<uint8_t>(Branch::kLower);
    } else {
      clipped = v;
      (*branch)[i] = static_cast<uint8_t>(Branch::kInterior);
    }
    out[i] = apply_round ? round_half_away(clipped / s) * s : clipped;
  }
  auto xn = x.node();
  auto an = alpha.node();
  return Tensor::make_op(x.shape(), std::move(out), {x, alpha},
                         [xn, an, branch](Tensor::Node& self) {
                           auto& gx = xn->grad_buf();
                           auto& ga = an->grad_buf();
                           double acc = 0.0;
                           for (size_t i = 0; i < self.g.size(); ++i) {
                             switch (static_cast<Branch>((*branch)[i])) {
                               case Branch::kInterior:
                                 gx[i] += self.g[i];
                                 break;
                               case Branch::kUpper:
                                 acc += self.g[i];
                                 break;
                               case Branch::kLower:
                                 acc -= self.g[i];
                                 break;
                             }
                           }
                           ga[0] += acc;
                         });
}

Tensor symmetric_quantize(const Tensor& x, double alpha, int bits) {
  autograd::NoGradGuard ng;
  return fake_quant_symmetric(x, Tensor::scalar(alpha), bits);
}

std::pair<Tensor, Tensor> dual_quantize(const Tensor& x, double alpha_l, double alpha_u,
                                        int bits) {
  if (!(alpha_l < alpha_u)) {
    throw ValueError("dual_quantize: alpha_l " + std::to_string(alpha_l) + " >= alpha_u " +
                     std::to_string(alpha_u));
  }
  if (bits < 2 || bits > 32) throw ValueError("dual_quantize: bits must be in [2,32]");
  const double s = (alpha_u - alpha_l) / (level_count(bits) - 1.0);
  const double Z = round_half_away(-alpha_l / s);
  std::vector<double> q(x.values().size());
  std::vector<double> deq(x.values().size());
  for (size_t i = 0; i < q.size(); ++i) {
    const double clipped = std::min(std::max(x.values()[i], alpha_l), alpha_u);
    const double levels = level_count(bits) - 1.0;
    q[i] = std::min(std::max(round_half_away(clipped / s) + Z, 0.0), levels);
    deq[i] = (q[i] - Z) * s;
  }
  return {Tensor::from(x.shape(), std::move(q)), Tensor::from(x.shape(), std::move(deq))};
}

SymmetricQuantizer::SymmetricQuantizer(double alpha_init, int b) : bits(b) {
  if (!(alpha_init > 0.0)) throw ValueError("SymmetricQuantizer: alpha must be > 0");
  if (b < 2) throw ValueError("SymmetricQuantizer: bits must be >= 2");
  alpha = Tensor::scalar(alpha_init, /*requires_grad=*/true);
}

double SymmetricQuantizer::scale() const {
  return 2.0 * alpha.values()[0] / (std::pow(2.0, bits - 1) - 1.0);
}

Tensor SymmetricQuantizer::forward(const Tensor& x, bool apply_round) const {
  return fake_quant_symmetric(x, alpha, bits, apply_round);
}

void SymmetricQuantizer::clamp_params(double eps) {
  if (alpha.values()[0] < eps) alpha.values()[0] = eps;
}

ActQuantizer::ActQuantizer(double alpha_l_init, double alpha_u_init, int b) : bits(b) {
  if (!(alpha_l_init < alpha_u_init)) {
    throw ValueError("ActQuantizer: alpha_l must be < alpha_u");
  }
  alpha_l = Tensor::scalar(alpha_l_init, /*requires_grad=*/true);
  alpha_u = Tensor::scalar(alpha_u_init, /*requires_grad=*/true);
  calibrated = true;
}

double ActQuantizer::scale() const {
  return (alpha_u.values()[0] - alpha_l.values()[0]) / (level_count(bits) - 1.0);
}

double ActQuantizer::zero_point() const {
  return round_half_away(-alpha_l.values()[0] / scale());
}

Tensor ActQuantizer::forward(const Tensor& x, bool apply_round) const {
  if (!calibrated) throw StateError("ActQuantizer used before calibration");
  return fake_quant_dual(x, alpha_l, alpha_u, bits, apply_round);
}

Tensor ActQuantizer::forward_gated(const Tensor& x, const Tensor& beta_l, const Tensor& beta_u,
                                   bool apply_round) const {
  if (!calibrated) throw StateError("ActQuantizer used before calibration");
  // Effective bounds alpha' = beta * alpha; the chain rule to beta and alpha
  // falls out of the mul backward.
  Tensor lo = mul(beta_l, alpha_l);
  Tensor hi = mul(beta_u, alpha_u);
  return fake_quant_dual(x, lo, hi, bits, apply_round);
}

void ActQuantizer::clamp_params(double eps) {
  double& l = alpha_l.values()[0];
  double& u = alpha_u.values()[0];
  if (u - l < eps) u = l + eps;
}

void WeightQuantizer::calibrate(const Tensor& w) {
  std::vector<double> sample = w.values();
  w_u = percentile(sample, 99.0);
  w_l = percentile(sample, 1.0);
  degenerate = !(w_l < w_u);
  if (degenerate) {
    std::cerr << "warning: weight tensor has degenerate bounds (" << w_l
              << "); layer left unquantized\n";
  }
  calibrated = true;
}

Tensor WeightQuantizer::apply(const Tensor& w, bool apply_round) const {
  if (!calibrated) throw StateError("WeightQuantizer used before calibration");
  if (degenerate) return w;
  // Fixed bounds: plain constants, so the clip-branch gradients are dropped
  // and only the straight-through path to w survives.
  return fake_quant_dual(w, Tensor::scalar(w_l), Tensor::scalar(w_u), bits, apply_round);
}

}  // namespace srqat
