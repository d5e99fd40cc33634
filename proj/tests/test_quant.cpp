#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "srqat/ops.hpp"
#include "srqat/quant.hpp"
#include "test_util.hpp"

using namespace srqat;
using namespace srqat::testutil;

TEST_CASE("level_count") {
  CHECK(level_count(2) == 4.0);
  CHECK(level_count(3) == 8.0);
  CHECK(level_count(8) == 256.0);
}

TEST_CASE("dual_quantize worked example") {
  // b=2, bounds [-1, 2]: s = 3/3 = 1, Z = round(1/1) = 1
  auto x = Tensor::from({4}, {0.4, 2.5, -1.7, 1.5});
  auto [q, deq] = dual_quantize(x, -1.0, 2.0, 2);
  CHECK(q.values() == std::vector<double>{1, 3, 0, 3});  // 1.5 rounds away from zero
  CHECK(deq.values() == std::vector<double>{0, 2, -1, 2});

  ActQuantizer aq(-1.0, 2.0, 2);
  CHECK(aq.scale() == doctest::Approx(1.0));
  CHECK(aq.zero_point() == doctest::Approx(1.0));
}

TEST_CASE("dual_quantize rejects bad arguments") {
  auto x = Tensor::from({1}, {0.0});
  CHECK_THROWS_AS(dual_quantize(x, 2.0, -1.0, 2), ValueError);
  CHECK_THROWS_AS(dual_quantize(x, 1.0, 1.0, 2), ValueError);
  CHECK_THROWS_AS(dual_quantize(x, -1.0, 1.0, 1), ValueError);
}

TEST_CASE("fake_quant_dual forward agrees with detached dequantization") {
  std::mt19937_64 rng(11);
  auto xv = random_vec(rng, 64, -3.0, 3.0);
  auto x = Tensor::from({64}, xv);
  for (int bits : {2, 3, 4, 8}) {
    auto y = fake_quant_dual(x, Tensor::scalar(-0.7), Tensor::scalar(1.9), bits);
    auto [q, deq] = dual_quantize(x, -0.7, 1.9, bits);
    for (size_t i = 0; i < xv.size(); ++i) {
      CHECK(y.values()[i] == doctest::Approx(deq.values()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("dual-bound gradient routing") {
  // One element at/above the upper bound, one interior, one at/below the lower.
  auto a = Tensor::from({1, 3}, {5.0, 0.0, -5.0}, true);
  auto lo = Tensor::scalar(-1.0, true);
  auto hi = Tensor::scalar(2.0, true);

  SUBCASE("unit loss") {
    backward(sum(fake_quant_dual(a, lo, hi, 2)));
    CHECK(hi.grad()[0] == doctest::Approx(1.0));
    CHECK(lo.grad()[0] == doctest::Approx(1.0));
    CHECK(a.grad() == std::vector<double>{0.0, 1.0, 0.0});
  }
  SUBCASE("weighted loss") {
    auto w = Tensor::from({1, 3}, {1.0, 2.0, 4.0});
    backward(sum(mul(fake_quant_dual(a, lo, hi, 2), w)));
    CHECK(hi.grad()[0] == doctest::Approx(1.0));
    CHECK(lo.grad()[0] == doctest::Approx(4.0));
    CHECK(a.grad() == std::vector<double>{0.0, 2.0, 0.0});
  }
  SUBCASE("elements exactly on a bound route to the bound") {
    auto b = Tensor::from({1, 2}, {2.0, -1.0}, true);
    auto l2 = Tensor::scalar(-1.0, true);
    auto h2 = Tensor::scalar(2.0, true);
    backward(sum(fake_quant_dual(b, l2, h2, 2)));
    CHECK(h2.grad()[0] == doctest::Approx(1.0));
    CHECK(l2.grad()[0] == doctest::Approx(1.0));
    CHECK(b.grad() == std::vector<double>{0.0, 0.0});
  }
}

TEST_CASE("dual-bound gradients match finite differences in clip-only mode") {
  std::mt19937_64 rng(12);
  auto x = Tensor::from({2, 8}, random_vec(rng, 16, -3.0, 3.0), true);
  auto lo = Tensor::scalar(-0.8, true);
  auto hi = Tensor::scalar(1.7, true);
  auto loss_fn = [&]() { return mean(square(fake_quant_dual(x, lo, hi, 4, false))); };
  backward(loss_fn());
  auto eval = [&]() { return loss_fn().item(); };

  CHECK(rel_err(lo.grad()[0], numeric_grad(eval, &lo.values()[0])) < 1e-5);
  CHECK(rel_err(hi.grad()[0], numeric_grad(eval, &hi.values()[0])) < 1e-5);
  for (size_t i = 0; i < x.values().size(); ++i) {
    // Skip slots too close to a bound: the central difference straddles the kink.
    if (std::fabs(x.values()[i] + 0.8) < 1e-3 || std::fabs(x.values()[i] - 1.7) < 1e-3) continue;
    CHECK(rel_err(x.grad()[i], numeric_grad(eval, &x.values()[i])) < 1e-5);
  }
}

TEST_CASE("per-sample bounds") {
  // Sample 0 clips to [0, 1], sample 1 to [-2, 2].
  auto x = Tensor::from({2, 3}, {-1.0, 0.5, 3.0, -1.0, 0.5, 3.0});
  auto lo = Tensor::from({2}, {0.0, -2.0}, true);
  auto hi = Tensor::from({2}, {1.0, 2.0}, true);
  auto y = fake_quant_dual(x, lo, hi, 8, false);
  CHECK(y.values() == std::vector<double>{0.0, 0.5, 1.0, -1.0, 0.5, 2.0});

  backward(sum(y));
  CHECK(lo.grad() == std::vector<double>{1.0, 0.0});
  CHECK(hi.grad() == std::vector<double>{1.0, 1.0});
}

TEST_CASE("fake_quant_dual argument validation") {
  auto x = Tensor::from({2, 2}, {0, 0, 0, 0});
  CHECK_THROWS_AS(fake_quant_dual(x, Tensor::scalar(1.0), Tensor::scalar(1.0), 2), ValueError);
  CHECK_THROWS_AS(fake_quant_dual(x, Tensor::scalar(2.0), Tensor::scalar(-1.0), 2), ValueError);
  CHECK_THROWS_AS(fake_quant_dual(x, Tensor::from({3}, {0, 0, 0}), Tensor::scalar(1.0), 2),
                  ShapeError);
  CHECK_THROWS_AS(fake_quant_dual(x, Tensor::scalar(0.0), Tensor::scalar(1.0), 1), ValueError);
}

TEST_CASE("gated forward applies per-sample bound multipliers") {
  ActQuantizer aq(-1.0, 2.0, 8);
  // Sample 0: bounds scaled by 0.5 -> [-0.5, 1]; sample 1: by 1.5 -> [-1.5, 3].
  auto x = Tensor::from({2, 2}, {-3.0, 5.0, -3.0, 5.0});
  auto beta = Tensor::from({2}, {0.5, 1.5});
  auto y = aq.forward_gated(x, beta, beta, false);
  CHECK(y.values() == std::vector<double>{-0.5, 1.0, -1.5, 3.0});
}

TEST_CASE("gated forward gradients reach betas and alphas") {
  std::mt19937_64 rng(13);
  ActQuantizer aq(-0.9, 1.8, 4);
  auto x = Tensor::from({2, 8}, random_vec(rng, 16, -4.0, 4.0), true);
  auto beta_l = Tensor::from({2}, {0.8, 1.2}, true);
  auto beta_u = Tensor::from({2}, {1.1, 0.7}, true);

  auto loss_fn = [&]() { return mean(square(aq.forward_gated(x, beta_l, beta_u, false))); };
  backward(loss_fn());
  auto eval = [&]() { return loss_fn().item(); };

  for (int s = 0; s < 2; ++s) {
    CHECK(rel_err(beta_l.grad()[s], numeric_grad(eval, &beta_l.values()[s])) < 1e-5);
    CHECK(rel_err(beta_u.grad()[s], numeric_grad(eval, &beta_u.values()[s])) < 1e-5);
  }
  CHECK(rel_err(aq.alpha_l.grad()[0], numeric_grad(eval, &aq.alpha_l.values()[0])) < 1e-5);
  CHECK(rel_err(aq.alpha_u.grad()[0], numeric_grad(eval, &aq.alpha_u.values()[0])) < 1e-5);
}

TEST_CASE("symmetric quantizer worked examples") {
  // b=3, alpha=1: s = 2/(2^2-1) = 2/3
  SymmetricQuantizer sq(1.0, 3);
  CHECK(sq.scale() == doctest::Approx(2.0 / 3.0));
  auto x = Tensor::from({4}, {0.5, -0.5, 0.2, 5.0});
  auto y = sq.forward(x);
  CHECK(y.values()[0] == doctest::Approx(2.0 / 3.0));   // round(0.75) = 1
  CHECK(y.values()[1] == doctest::Approx(-2.0 / 3.0));  // half away from zero
  CHECK(y.values()[2] == doctest::Approx(0.0));
  CHECK(y.values()[3] == doctest::Approx(4.0 / 3.0));   // clip to 1, round(1.5) = 2
}

TEST_CASE("symmetric gradient routing") {
  auto a = Tensor::from({3}, {5.0, 0.2, -5.0}, true);
  auto alpha = Tensor::scalar(1.0, true);
  auto w = Tensor::from({3}, {1.0, 2.0, 4.0});
  backward(sum(mul(fake_quant_symmetric(a, alpha, 3), w)));
  // upper clip contributes +g, lower clip -g
  CHECK(alpha.grad()[0] == doctest::Approx(1.0 - 4.0));
  CHECK(a.grad() == std::vector<double>{0.0, 2.0, 0.0});
}

TEST_CASE("symmetric gradients match finite differences in clip-only mode") {
  std::mt19937_64 rng(14);
  auto x = Tensor::from({12}, random_vec(rng, 12, -3.0, 3.0), true);
  auto alpha = Tensor::scalar(1.3, true);
  auto loss_fn = [&]() { return mean(square(fake_quant_symmetric(x, alpha, 4, false))); };
  backward(loss_fn());
  auto eval = [&]() { return loss_fn().item(); };
  CHECK(rel_err(alpha.grad()[0], numeric_grad(eval, &alpha.values()[0])) < 1e-5);
  for (size_t i = 0; i < x.values().size(); ++i) {
    if (std::fabs(std::fabs(x.values()[i]) - 1.3) < 1e-3) continue;
    CHECK(rel_err(x.grad()[i], numeric_grad(eval, &x.values()[i])) < 1e-5);
  }
}

TEST_CASE("quantizer parameter validation and clamping") {
  CHECK_THROWS_AS(SymmetricQuantizer(-1.0, 8), ValueError);
  CHECK_THROWS_AS(SymmetricQuantizer(0.0, 8), ValueError);
  CHECK_THROWS_AS(ActQuantizer(2.0, 1.0, 8), ValueError);
  CHECK_THROWS_AS(fake_quant_symmetric(Tensor::scalar(0.0), Tensor::scalar(-1.0), 8),
                  ValueError);

  ActQuantizer aq(0.0, 1.0, 8);
  aq.alpha_l.values()[0] = 0.5;
  aq.alpha_u.values()[0] = 0.4;  // crossed after a hypothetical optimizer step
  aq.clamp_params();
  CHECK(aq.alpha_u.values()[0] - aq.alpha_l.values()[0] == doctest::Approx(1e-4));

  SymmetricQuantizer sq(1.0, 8);
  sq.alpha.values()[0] = -0.3;
  sq.clamp_params();
  CHECK(sq.alpha.values()[0] == doctest::Approx(1e-4));

  ActQuantizer uncal;
  CHECK_THROWS_AS(uncal.forward(Tensor::scalar(0.0)), StateError);
  WeightQuantizer wq(4);
  CHECK_THROWS_AS(wq.apply(Tensor::scalar(0.0)), StateError);
}

TEST_CASE("weight quantizer percentile calibration") {
  // 101 evenly spaced weights in [-1, 1]: 1st/99th percentiles land on -0.98/0.98
  std::vector<double> wv(101);
  for (int i = 0; i <= 100; ++i) wv[i] = -1.0 + 0.02 * i;
  auto w = Tensor::from({101}, wv);
  WeightQuantizer wq(4);
  wq.calibrate(w);
  CHECK(wq.w_l == doctest::Approx(-0.98));
  CHECK(wq.w_u == doctest::Approx(0.98));
  CHECK_FALSE(wq.degenerate);

  auto y = wq.apply(w);
  const double s = 1.96 / 15.0;
  std::set<double> produced;
  for (size_t i = 0; i < wv.size(); ++i) {
    const double clipped = std::min(std::max(wv[i], wq.w_l), wq.w_u);
    CHECK(std::fabs(y.values()[i] - clipped) <= s / 2 + 1e-12);
    produced.insert(y.values()[i]);
  }
  CHECK(produced.size() <= 16);
}

TEST_CASE("degenerate weight tensor passes through unquantized") {
  auto w = Tensor::full({8}, 0.25, true);
  WeightQuantizer wq(2);
  wq.calibrate(w);
  CHECK(wq.degenerate);
  auto y = wq.apply(w);
  for (double v : y.values()) CHECK(v == 0.25);
}

TEST_CASE("weight quantizer straight-through gradient inside the clip range") {
  std::mt19937_64 rng(15);
  auto w = Tensor::from({64}, random_vec(rng, 64, -1.0, 1.0), true);
  WeightQuantizer wq(4);
  wq.calibrate(w);
  backward(sum(wq.apply(w)));
  for (size_t i = 0; i < w.values().size(); ++i) {
    const double v = w.values()[i];
    const double want = (v > wq.w_l && v < wq.w_u) ? 1.0 : 0.0;
    CHECK(w.grad()[i] == doctest::Approx(want));
  }
}

TEST_CASE("quantization invariants hold over random cases") {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> ud(-10.0, 10.0);
  std::uniform_int_distribution<int> bd(0, 3);
  const int kBits[] = {2, 3, 4, 8};
  for (int t = 0; t < 10000; ++t) {
    const double b1 = ud(rng), b2 = ud(rng);
    const double l = std::min(b1, b2), h = std::max(b1, b2);
    if (!(l < h)) continue;
    const int bits = kBits[bd(rng)];
    const double s = (h - l) / (level_count(bits) - 1.0);
    auto x = Tensor::from({2}, {ud(rng), ud(rng)});
    auto [q, deq] = dual_quantize(x, l, h, bits);

    for (size_t i = 0; i < 2; ++i) {
      const double qi = q.values()[i];
      CHECK(qi == std::floor(qi));                     // integer code
      CHECK(qi >= 0.0);
      CHECK(qi <= level_count(bits) - 1.0);            // fits in b bits
      const double clipped = std::min(std::max(x.values()[i], l), h);
      CHECK(std::fabs(deq.values()[i] - clipped) <= s / 2 + 1e-9);  // rounding error bound
    }
    // Monotone: the smaller input never dequantizes above the larger one.
    const bool first_smaller = x.values()[0] <= x.values()[1];
    const double d0 = deq.values()[0], d1 = deq.values()[1];
    CHECK((first_smaller ? d0 <= d1 + 1e-12 : d1 <= d0 + 1e-12));
    // Idempotent: re-quantizing the dequantized values is a fixed point.
    auto [q2, deq2] = dual_quantize(deq, l, h, bits);
    CHECK(deq2.values()[0] == doctest::Approx(d0).epsilon(1e-12));
    CHECK(deq2.values()[1] == doctest::Approx(d1).epsilon(1e-12));
  }
}
