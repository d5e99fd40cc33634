#include "srqat/ops.hpp"

#include <cmath>
#include <cstring>

namespace srqat {

namespace {

void check_same_or_scalar(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape() || a.numel() == 1 || b.numel() == 1) return;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
}

// Binary elementwise with optional single-element broadcast on either side.
template <typename Fwd, typename Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  check_same_or_scalar(a, b, name);
  const bool a_scalar = a.numel() == 1 && b.numel() > 1;
  const bool b_scalar = b.numel() == 1 && a.numel() > 1;
  const Shape& out_shape = a_scalar ? b.shape() : a.shape();
  const size_t n = static_cast<size_t>(numel_of(out_shape));
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < n; ++i) {
    fwd(out[i], av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor::make_op(
      out_shape, std::move(out), {a, b},
      [an, bn, a_scalar, b_scalar, bwd](Tensor::Node& self) {
        auto& ga = an->grad_buf();
        auto& gb = bn->grad_buf();
        const size_t n = self.g.size();
        for (size_t i = 0; i < n; ++i) {
          double da = 0, db = 0;
          bwd(da, db, an->v[a_scalar ? 0 : i], bn->v[b_scalar ? 0 : i], self.g[i]);
          ga[a_scalar ? 0 : i] += da;
          gb[b_scalar ? 0 : i] += db;
        }
      });
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
  const size_t n = static_cast<size_t>(x.numel());
  std::vector<double> out(n);
  const auto& xv = x.values();
  for (size_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
  auto xn = x.node();
  return Tensor::make_op(x.shape(), std::move(out), {x},
                         [xn, bwd](Tensor::Node& self) {
                           auto& gx = xn->grad_buf();
                           for (size_t i = 0; i < self.g.size(); ++i) {
                             gx[i] += bwd(xn->v[i], self.v[i]) * self.g[i];
                           }
                         });
}

// C[M x N] += A[M x K] * B[K x N], row-major.
void matmul_acc(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    double* Ci = C + i * N;
    const double* Ai = A + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const double a = Ai[k];
      if (a == 0.0) continue;
      const double* Bk = B + k * N;
      for (int64_t j = 0; j < N; ++j) Ci[j] += a * Bk[j];
    }
  }
}

// C[M x N] += A^T (A is [K x M]) * B [K x N]
void matmul_at_acc(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
  for (int64_t k = 0; k < K; ++k) {
    const double* Ak = A + k * M;
    const double* Bk = B + k * N;
    for (int64_t i = 0; i < M; ++i) {
      const double a = Ak[i];
      if (a == 0.0) continue;
      double* Ci = C + i * N;
      for (int64_t j = 0; j < N; ++j) Ci[j] += a * Bk[j];
    }
  }
}

// C[M x N] += A [M x K] * B^T (B is [N x K])
void matmul_bt_acc(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    const double* Ai = A + i * K;
    double* Ci = C + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const double* Bj = B + j * K;
      double acc = 0.0;
      for (int64_t k = 0; k < K; ++k) acc += Ai[k] * Bj[k];
      Ci[j] += acc;
    }
  }
}

void im2col(const double* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, double* col) {
  // col is [C*kh*kw, Ho*Wo]
  const int64_t P = Ho * Wo;
  int64_t row = 0;
  for (int64_t c = 0; c < C; ++c) {
    const double* xc = x + c * H * W;
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j, ++row) {
        double* dst = col + row * P;
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const int64_t ih = oh * stride - pad + i;
          if (ih < 0 || ih >= H) {
            for (int64_t ow = 0; ow < Wo; ++ow) dst[oh * Wo + ow] = 0.0;
            continue;
          }
          const double* src = xc + ih * W;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const int64_t iw = ow * stride - pad + j;
            dst[oh * Wo + ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_acc(const double* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, double* x) {
  const int64_t P = Ho * Wo;
  int64_t row = 0;
  for (int64_t c = 0; c < C; ++c) {
    double* xc = x + c * H * W;
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j, ++row) {
        const double* src = col + row * P;
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const int64_t ih = oh * stride - pad + i;
          if (ih < 0 || ih >= H) continue;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const int64_t iw = ow * stride - pad + j;
            if (iw >= 0 && iw < W) xc[ih * W + iw] += src[oh * Wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "add",
                   [](double& o, double x, double y) { o = x + y; },
                   [](double& da, double& db, double, double, double g) { da = g; db = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "sub",
                   [](double& o, double x, double y) { o = x - y; },
                   [](double& da, double& db, double, double, double g) { da = g; db = -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, "mul",
                   [](double& o, double x, double y) { o = x * y; },
                   [](double& da, double& db, double x, double y, double g) {
                     da = g * y;
                     db = g * x;
                   });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor relu(const Tensor& x) {
  return unary_op(x, [](double v) { return v > 0 ? v : 0.0; },
                  [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& x) {
  return unary_op(x, [](double v) { return std::fabs(v); },
                  [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary_op(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(x, [](double v) { return std::sqrt(v); },
                  [](double, double y) { return 0.5 / (y > 1e-150 ? y : 1e-150); });
}

Tensor reciprocal(const Tensor& x) {
  return unary_op(x, [](double v) { return 1.0 / v; },
                  [](double, double y) { return -y * y; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  auto xn = x.node();
  return Tensor::make_op({1}, {acc}, {x}, [xn](Tensor::Node& self) {
    auto& gx = xn->grad_buf();
    for (auto& g : gx) g += self.g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  auto xn = x.node();
  return Tensor::make_op({1}, {acc * inv}, {x}, [xn, inv](Tensor::Node& self) {
    auto& gx = xn->grad_buf();
    const double g = self.g[0] * inv;
    for (auto& gi : gx) gi += g;
  });
}

double round_half_away(double x) {
  // std::round already rounds halfway cases away from zero.
  return std::round(x);
}

Tensor ste_round(const Tensor& x) {
  return unary_op(x, [](double v) { return round_half_away(v); },
                  [](double, double) { return 1.0; });
}

Tensor sum_channels(const Tensor& x) {
  if (x.shape().size() != 4) {
    throw ShapeError("sum_channels expects NCHW, got " + shape_str(x.shape()));
  }
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t HW = H * W;
  std::vector<double> out(static_cast<size_t>(N * HW), 0.0);
  const auto& xv = x.values();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const double* src = xv.data() + (n * C + c) * HW;
      double* dst = out.data() + n * HW;
      for (int64_t i = 0; i < HW; ++i) dst[i] += src[i];
    }
  }
  auto xn = x.node();
  return Tensor::make_op({N, H, W}, std::move(out), {x}, [xn, N, C, HW](Tensor::Node& self) {
    auto& gx = xn->grad_buf();
    for (int64_t n = 0; n < N; ++n) {
      const double* gs = self.g.data() + n * HW;
      for (int64_t c = 0; c < C; ++c) {
        double* gd = gx.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) gd[i] += gs[i];
      }
    }
  });
}

Tensor per_sample_l2(const Tensor& x) {
  if (x.shape().empty()) throw ShapeError("per_sample_l2 needs a batch axis");
  const int64_t N = x.dim(0);
  const int64_t per = x.numel() / N;
  std::vector<double> out(static_cast<size_t>(N));
  const auto& xv = x.values();
  for (int64_t n = 0; n < N; ++n) {
    double acc = 0.0;
    const double* src = xv.data() + n * per;
    for (int64_t i = 0; i < per; ++i) acc += src[i] * src[i];
    out[n] = std::sqrt(acc);
  }
  auto xn = x.node();
  return Tensor::make_op({N}, std::move(out), {x}, [xn, N, per](Tensor::Node& self) {
    auto& gx = xn->grad_buf();
    for (int64_t n = 0; n < N; ++n) {
      const double y = self.v[n] > 1e-150 ? self.v[n] : 1e-150;
      const double g = self.g[n] / y;
      const double* src = xn->v.data() + n * per;
      double* gd = gx.data() + n * per;
      for (int64_t i = 0; i < per; ++i) gd[i] += g * src[i];
    }
  });
}

Tensor mul_per_sample(const Tensor& x, const Tensor& s) {
  if (x.shape().empty() || s.shape().size() != 1 || s.dim(0) != x.dim(0)) {
    throw ShapeError("mul_per_sample: x " + shape_str(x.shape()) + " vs s " +
                     shape_str(s.shape()));
  }
  const int64_t N = x.dim(0);
  const int64_t per = x.numel() / N;
  std::vector<double> out(x.values().size());
  for (int64_t n = 0; n < N; ++n) {
    const double sn = s.values()[n];
    const double* src = x.values().data() + n * per;
    double* dst = out.data() + n * per;
    for (int64_t i = 0; i < per; ++i) dst[i] = src[i] * sn;
  }
  auto xn = x.node();
  auto sn_node = s.node();
  return Tensor::make_op(x.shape(), std::move(out), {x, s},
                         [xn, sn_node, N, per](Tensor::Node& self) {
                           auto& gx = xn->grad_buf();
                           auto& gs = sn_node->grad_buf();
                           for (int64_t n = 0; n < N; ++n) {
                             const double sv = sn_node->v[n];
                             const double* g = self.g.data() + n * per;
                             const double* xv = xn->v.data() + n * per;
                             double* gd = gx.data() + n * per;
                             double acc = 0.0;
                             for (int64_t i = 0; i < per; ++i) {
                               gd[i] += g[i] * sv;
                               acc += g[i] * xv[i];
                             }
                             gs[n] += acc;
                           }
                         });
}

Tensor select_channel(const Tensor& x, int64_t c) {
  const auto& sh = x.shape();
  bool ok = (sh.size() == 2) || (sh.size() == 4 && sh[2] == 1 && sh[3] == 1);
  if (!ok || c < 0 || c >= sh[1]) {
    throw ShapeError("select_channel(" + std::to_string(c) + ") on " + shape_str(sh));
  }
  const int64_t N = sh[0], C = sh[1];
  std::vector<double> out(static_cast<size_t>(N));
  for (int64_t n = 0; n < N; ++n) out[n] = x.values()[n * C + c];
  auto xn = x.node();
  return Tensor::make_op({N}, std::move(out), {x}, [xn, N, C, c](Tensor::Node& self) {
    auto& gx = xn->grad_buf();
    for (int64_t n = 0; n < N; ++n) gx[n * C + c] += self.g[n];
  });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.shape().size() != 4) {
    throw ShapeError("global_avg_pool expects NCHW, got " + shape_str(x.shape()));
  }
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(HW);
  std::vector<double> out(static_cast<size_t>(N * C));
  for (int64_t nc = 0; nc < N * C; ++nc) {
    double acc = 0.0;
    const double* src = x.values().data() + nc * HW;
    for (int64_t i = 0; i < HW; ++i) acc += src[i];
    out[nc] = acc * inv;
  }
  auto xn = x.node();
  return Tensor::make_op({N, C}, std::move(out), {x}, [xn, N, C, HW, inv](Tensor::Node& self) {
    auto& gx = xn->grad_buf();
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const double g = self.g[nc] * inv;
      double* gd = gx.data() + nc * HW;
      for (int64_t i = 0; i < HW; ++i) gd[i] += g;
    }
  });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel_of(new_shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(new_shape) +
                     " changes element count");
  }
  auto xn = x.node();
  return Tensor::make_op(std::move(new_shape), x.values(), {x}, [xn](Tensor::Node& self) {
    auto& gx = xn->grad_buf();
    for (size_t i = 0; i < self.g.size(); ++i) gx[i] += self.g[i];
  });
}

Tensor add_channel_offset(const Tensor& x, const std::vector<double>& offset) {
  if (x.shape().size() != 4 || x.dim(1) != static_cast<int64_t>(offset.size())) {
    throw ShapeError("add_channel_offset: " + shape_str(x.shape()) + " with " +
                     std::to_string(offset.size()) + " offsets");
  }
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<double> out(x.values().size());
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const double o = offset[static_cast<size_t>(c)];
      const double* src = x.values().data() + (n * C + c) * HW;
      double* dst = out.data() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) dst[i] = src[i] + o;
    }
  }
  auto xn = x.node();
  return Tensor::make_op(x.shape(), std::move(out), {x}, [xn](Tensor::Node& self) {
    auto& gx = xn->grad_buf();
    for (size_t i = 0; i < self.g.size(); ++i) gx[i] += self.g[i];
  });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int padding) {
  return conv2d(input, weight, Tensor(), stride, padding);
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  if (input.shape().size() != 4) {
    throw ShapeError("conv2d: input must be NCHW, got " + shape_str(input.shape()));
  }
  if (weight.shape().size() != 4) {
    throw ShapeError("conv2d: weight must be OIHW, got " + shape_str(weight.shape()));
  }
  const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int64_t O = weight.dim(0), I = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (C != I) {
    throw ShapeError("conv2d: input channel axis (" + std::to_string(C) +
                     ") != weight input axis (" + std::to_string(I) + ")");
  }
  if (stride < 1 || padding < 0) throw ValueError("conv2d: bad stride/padding");
  const int64_t Ho = (H + 2 * padding - kh) / stride + 1;
  const int64_t Wo = (W + 2 * padding - kw) / stride + 1;
  if (H + 2 * padding < kh || W + 2 * padding < kw) {
    throw ShapeError("conv2d: spatial axes " + std::to_string(H) + "x" + std::to_string(W) +
                     " smaller than kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " after padding");
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.shape().size() != 1 || bias.dim(0) != O)) {
    throw ShapeError("conv2d: bias axis " + shape_str(bias.shape()) + " != output channels " +
                     std::to_string(O));
  }

  const int64_t K = C * kh * kw;
  const int64_t P = Ho * Wo;
  std::vector<double> col(static_cast<size_t>(K * P));
  std::vector<double> out(static_cast<size_t>(N * O * P), 0.0);
  for (int64_t n = 0; n < N; ++n) {
    im2col(input.values().data() + n * C * H * W, C, H, W, kh, kw, stride, padding, Ho, Wo,
           col.data());
    matmul_acc(weight.values().data(), col.data(), out.data() + n * O * P, O, K, P);
    if (has_bias) {
      for (int64_t o = 0; o < O; ++o) {
        const double b = bias.values()[o];
        double* dst = out.data() + (n * O + o) * P;
        for (int64_t p = 0; p < P; ++p) dst[p] += b;
      }
    }
  }

  auto xn = input.node();
  auto wn = weight.node();
  auto bn = has_bias ? bias.node() : nullptr;
  std::vector<Tensor> inputs = {input, weight};
  if (has_bias) inputs.push_back(bias);
  return Tensor::make_op(
      {N, O, Ho, Wo}, std::move(out), std::move(inputs),
      [=](Tensor::Node& self) {
        std::vector<double> col(static_cast<size_t>(K * P));
        std::vector<double> gcol(static_cast<size_t>(K * P));
        auto& gx = xn->grad_buf();
        auto& gw = wn->grad_buf();
        for (int64_t n = 0; n < N; ++n) {
          const double* gy = self.g.data() + n * O * P;
          im2col(xn->v.data() + n * C * H * W, C, H, W, kh, kw, stride, padding, Ho, Wo,
                 col.data());
          // dW += gy * col^T
          matmul_bt_acc(gy, col.data(), gw.data(), O, P, K);
          // dcol = W^T * gy, then scatter back
          std::fill(gcol.begin(), gcol.end(), 0.0);
          matmul_at_acc(wn->v.data(), gy, gcol.data(), K, O, P);
          col2im_acc(gcol.data(), C, H, W, kh, kw, stride, padding, Ho, Wo,
                     gx.data() + n * C * H * W);
          if (bn) {
            auto& gb = bn->grad_buf();
            for (int64_t o = 0; o < O; ++o) {
              double acc = 0.0;
              const double* g = gy + o * P;
              for (int64_t p = 0; p < P; ++p) acc += g[p];
              gb[o] += acc;
            }
          }
        }
      });
}

Tensor pixel_shuffle(const Tensor& x, int upscale) {
  if (x.shape().size() != 4) {
    throw ShapeError("pixel_shuffle expects NCHW, got " + shape_str(x.shape()));
  }
  const int64_t r = upscale;
  const int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (r < 1 || Cin % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channel axis " + std::to_string(Cin) +
                     " not divisible by r^2=" + std::to_string(r * r));
  }
  const int64_t C = Cin / (r * r);
  std::vector<double> out(x.values().size());
  const auto& xv = x.values();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < r; ++j) {
          const double* src = xv.data() + (((n * Cin) + c * r * r + i * r + j) * H) * W;
          for (int64_t h = 0; h < H; ++h) {
            for (int64_t w = 0; w < W; ++w) {
              out[((n * C + c) * H * r + h * r + i) * W * r + w * r + j] = src[h * W + w];
            }
          }
        }
      }
    }
  }
  auto xn = x.node();
  return Tensor::make_op({N, C, H * r, W * r}, std::move(out), {x},
                         [xn, N, C, Cin, H, W, r](Tensor::Node& self) {
                           auto& gx = xn->grad_buf();
                           for (int64_t n = 0; n < N; ++n) {
                             for (int64_t c = 0; c < C; ++c) {
                               for (int64_t i = 0; i < r; ++i) {
                                 for (int64_t j = 0; j < r; ++j) {
                                   double* gd = gx.data() +
                                                (((n * Cin) + c * r * r + i * r + j) * H) * W;
                                   for (int64_t h = 0; h < H; ++h) {
                                     for (int64_t w = 0; w < W; ++w) {
                                       gd[h * W + w] += self.g[((n * C + c) * H * r + h * r + i) *
                                                                   W * r + w * r + j];
                                     }
                                   }
                                 }
                               }
                             }
                           }
                         });
}

Tensor pixel_unshuffle(const Tensor& x, int downscale) {
  if (x.shape().size() != 4) {
    throw ShapeError("pixel_unshuffle expects NCHW, got " + shape_str(x.shape()));
  }
  const int64_t r = downscale;
  const int64_t N = x.dim(0), C = x.dim(1), Hr = x.dim(2), Wr = x.dim(3);
  if (r < 1 || Hr % r != 0 || Wr % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial axes not divisible by r");
  }
  const int64_t H = Hr / r, W = Wr / r;
  std::vector<double> out(x.values().size());
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < r; ++j) {
          double* dst = out.data() + (((n * C * r * r) + c * r * r + i * r + j) * H) * W;
          for (int64_t h = 0; h < H; ++h) {
            for (int64_t w = 0; w < W; ++w) {
              dst[h * W + w] = x.values()[((n * C + c) * Hr + h * r + i) * Wr + w * r + j];
            }
          }
        }
      }
    }
  }
  auto xn = x.node();
  return Tensor::make_op({N, C * r * r, H, W}, std::move(out), {x},
                         [xn, N, C, H, W, Hr, Wr, r](Tensor::Node& self) {
                           auto& gx = xn->grad_buf();
                           for (int64_t n = 0; n < N; ++n) {
                             for (int64_t c = 0; c < C; ++c) {
                               for (int64_t i = 0; i < r; ++i) {
                                 for (int64_t j = 0; j < r; ++j) {
                                   const double* gs =
                                       self.g.data() +
                                       (((n * C * r * r) + c * r * r + i * r + j) * H) * W;
                                   for (int64_t h = 0; h < H; ++h) {
                                     for (int64_t w = 0; w < W; ++w) {
                                       gx[((n * C + c) * Hr + h * r + i) * Wr + w * r + j] +=
                                           gs[h * W + w];
                                     }
                                   }
                                 }
                               }
                             }
                           }
                         });
}

Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       BatchNormStats& stats, bool update_running) {
  if (x.shape().size() != 4) {
    throw ShapeError("batchnorm expects NCHW, got " + shape_str(x.shape()));
  }
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const int64_t m = N * HW;
  const double eps = stats.eps;
  if (gamma.numel() != C || beta.numel() != C) {
    throw ShapeError("batchnorm: affine params must have one entry per channel");
  }

  auto mu = std::make_shared<std::vector<double>>(C, 0.0);
  auto inv_sigma = std::make_shared<std::vector<double>>(C, 0.0);
  auto xhat = std::make_shared<std::vector<double>>(x.values().size());
  std::vector<double> var(static_cast<size_t>(C), 0.0);
  const auto& xv = x.values();
  for (int64_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      const double* src = xv.data() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) acc += src[i];
    }
    const double mean_c = acc / m;
    double vacc = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      const double* src = xv.data() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        const double d = src[i] - mean_c;
        vacc += d * d;
      }
    }
    const double var_c = vacc / m;  // population variance
    (*mu)[c] = mean_c;
    var[static_cast<size_t>(c)] = var_c;
    (*inv_sigma)[c] = 1.0 / std::sqrt(var_c + eps);
  }

  if (update_running) {
    if (!stats.initialized) {
      stats.running_mean.assign(mu->begin(), mu->end());
      stats.running_var.assign(var.begin(), var.end());
      stats.initialized = true;
    } else {
      for (int64_t c = 0; c < C; ++c) {
        stats.running_mean[c] =
            (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * (*mu)[c];
        stats.running_var[c] =
            (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * var[c];
      }
    }
  }

  std::vector<double> out(x.values().size());
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const double g = gamma.values()[c], b = beta.values()[c];
      const double mc = (*mu)[c], is = (*inv_sigma)[c];
      const double* src = xv.data() + (n * C + c) * HW;
      double* xh = xhat->data() + (n * C + c) * HW;
      double* dst = out.data() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        xh[i] = (src[i] - mc) * is;
        dst[i] = g * xh[i] + b;
      }
    }
  }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return Tensor::make_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, xhat, inv_sigma, N, C, HW, m](Tensor::Node& self) {
        auto& gx = xn->grad_buf();
        auto& gg = gn->grad_buf();
        auto& gb = bn->grad_buf();
        for (int64_t c = 0; c < C; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int64_t n = 0; n < N; ++n) {
            const double* dy = self.g.data() + (n * C + c) * HW;
            const double* xh = xhat->data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              sum_dy += dy[i];
              sum_dy_xhat += dy[i] * xh[i];
            }
          }
          gb[c] += sum_dy;
          gg[c] += sum_dy_xhat;
          const double gamma_c = gn->v[c];
          const double is = (*inv_sigma)[c];
          const double inv_m = 1.0 / static_cast<double>(m);
          for (int64_t n = 0; n < N; ++n) {
            const double* dy = self.g.data() + (n * C + c) * HW;
            const double* xh = xhat->data() + (n * C + c) * HW;
            double* gd = gx.data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              gd[i] += gamma_c * is * (dy[i] - inv_m * sum_dy - xh[i] * inv_m * sum_dy_xhat);
            }
          }
        }
      });
}

Tensor batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      const BatchNormStats& stats) {
  if (x.shape().size() != 4) {
    throw ShapeError("batchnorm expects NCHW, got " + shape_str(x.shape()));
  }
  if (!stats.initialized) throw StateError("batchnorm_eval: running statistics never collected");
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<double> out(x.values().size());
  std::vector<double> inv_sigma(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    const double denom = stats.running_var[c] + stats.eps;
    if (denom <= 0.0) throw ValueError("batchnorm_eval: non-positive variance + eps");
    inv_sigma[c] = 1.0 / std::sqrt(denom);
  }
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const double scale = gamma.values()[c] * inv_sigma[c];
      const double shift = beta.values()[c] - stats.running_mean[c] * scale;
      const double* src = x.values().data() + (n * C + c) * HW;
      double* dst = out.data() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) dst[i] = src[i] * scale + shift;
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  auto is = std::make_shared<std::vector<double>>(std::move(inv_sigma));
  auto rm = std::make_shared<std::vector<double>>(stats.running_mean);
  return Tensor::make_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, is, rm, N, C, HW](Tensor::Node& self) {
        auto& gx = xn->grad_buf();
        auto& gg = gn->grad_buf();
        auto& gb = bn->grad_buf();
        for (int64_t c = 0; c < C; ++c) {
          const double scale = gn->v[c] * (*is)[c];
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int64_t n = 0; n < N; ++n) {
            const double* dy = self.g.data() + (n * C + c) * HW;
            const double* xv = xn->v.data() + (n * C + c) * HW;
            double* gd = gx.data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              gd[i] += dy[i] * scale;
              sum_dy += dy[i];
              sum_dy_xhat += dy[i] * (xv[i] - (*rm)[c]) * (*is)[c];
            }
          }
          gb[c] += sum_dy;
          gg[c] += sum_dy_xhat;
        }
      });
}

}  // namespace srqat
