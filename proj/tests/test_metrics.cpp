#include <doctest.h>

#include <cmath>
#include <random>

#include "srqat/complexity.hpp"
#include "srqat/metrics.hpp"
#include "test_util.hpp"

using namespace srqat;
using namespace srqat::testutil;

namespace {

Image random_image(std::mt19937_64& rng, int64_t h, int64_t w) {
  Image img(h, w);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(d(rng));
  return img;
}

Image constant_image(int64_t h, int64_t w, uint8_t v) {
  Image img(h, w);
  std::fill(img.pixels.begin(), img.pixels.end(), v);
  return img;
}

// Flat-loop PSNR oracle: full-range BT.601 Y, crop, 10*log10(255^2/mse).
double psnr_oracle(const Image& a, const Image& b, int crop) {
  double mse = 0.0;
  int64_t n = 0;
  for (int64_t y = crop; y < a.height - crop; ++y)
    for (int64_t x = crop; x < a.width - crop; ++x) {
      const double ya = 0.299 * a.at(y, x, 0) + 0.587 * a.at(y, x, 1) + 0.114 * a.at(y, x, 2);
      const double yb = 0.299 * b.at(y, x, 0) + 0.587 * b.at(y, x, 1) + 0.114 * b.at(y, x, 2);
      mse += (ya - yb) * (ya - yb);
      ++n;
    }
  mse /= static_cast<double>(n);
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace

TEST_CASE("psnr_y") {
  std::mt19937_64 rng(81);
  SUBCASE("identical images hit the sentinel cap") {
    auto img = random_image(rng, 20, 24);
    CHECK(psnr_y(img, img, 2) == doctest::Approx(100.0));
  }
  SUBCASE("unit luma difference gives the closed-form value") {
    auto a = constant_image(16, 16, 128);
    auto b = constant_image(16, 16, 129);
    CHECK(psnr_y(a, b, 2) == doctest::Approx(10.0 * std::log10(255.0 * 255.0)).epsilon(1e-10));
    CHECK(psnr_y(a, b, 2) == doctest::Approx(48.1308).epsilon(1e-4));
  }
  SUBCASE("random pair matches the flat-loop oracle") {
    auto a = random_image(rng, 30, 22);
    auto b = random_image(rng, 30, 22);
    for (int crop : {0, 2, 4}) {
      CHECK(rel_err(psnr_y(a, b, crop), psnr_oracle(a, b, crop)) < 1e-12);
    }
  }
  SUBCASE("dimension mismatch and over-crop rejected") {
    auto a = random_image(rng, 10, 10);
    auto b = random_image(rng, 10, 12);
    CHECK_THROWS_AS(psnr_y(a, b, 2), ShapeError);
    CHECK_THROWS_AS(psnr_y(a, a, 5), ValueError);
  }
  SUBCASE("studio-swing variant differs from full-range") {
    auto a = random_image(rng, 16, 16);
    auto b = random_image(rng, 16, 16);
    CHECK(psnr_y(a, b, 0, true) != doctest::Approx(psnr_y(a, b, 0, false)).epsilon(1e-9));
  }
}

TEST_CASE("ssim_y") {
  std::mt19937_64 rng(82);
  SUBCASE("identical images score 1") {
    auto img = random_image(rng, 24, 24);
    CHECK(ssim_y(img, img, 2) == doctest::Approx(1.0));
  }
  SUBCASE("distinct constant images score below 1 via the luminance term") {
    auto a = constant_image(20, 20, 100);
    auto b = constant_image(20, 20, 120);
    const double got = ssim_y(a, b, 0);
    // closed form: variances and covariance vanish, structure term cancels
    const double c1 = 2.55 * 2.55;
    const double ya = 100.0, yb = 120.0;
    const double want = (2.0 * ya * yb + c1) / (ya * ya + yb * yb + c1);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
    CHECK(got < 1.0);
  }
  SUBCASE("bounded and symmetric") {
    auto a = random_image(rng, 22, 26);
    auto b = random_image(rng, 22, 26);
    const double v = ssim_y(a, b, 2);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
    CHECK(ssim_y(b, a, 2) == doctest::Approx(v));
  }
  SUBCASE("image smaller than the window rejected") {
    auto a = constant_image(10, 10, 50);
    CHECK_THROWS_AS(ssim_y(a, a, 0), ValueError);
  }
}

TEST_CASE("wasted levels") {
  // dense nonnegative sample over [0, 1]
  std::vector<double> dense(1001);
  for (int i = 0; i <= 1000; ++i) dense[i] = i / 1000.0;

  SUBCASE("symmetric 2-bit with alpha = max wastes half the levels") {
    SymmetricQuantizer q(1.0, 2);
    CHECK(wasted_levels(dense, q) == doctest::Approx(0.5));
  }
  SUBCASE("symmetric 3-bit on nonnegative data") {
    // codes reachable for x in [0, alpha] with s = 2a/3 are {0, 1, 2}: 5 of 8
    // levels go unused under this scale convention
    SymmetricQuantizer q(1.0, 3);
    CHECK(wasted_levels(dense, q) == doctest::Approx(0.625));
  }
  SUBCASE("dual bounds at sample min/max waste nothing") {
    for (int bits : {2, 3, 4}) {
      ActQuantizer q(0.0, 1.0, bits);
      CHECK(wasted_levels(dense, q) == doctest::Approx(0.0));
    }
  }
  SUBCASE("fraction stays in [0,1] and single-point samples waste most levels") {
    ActQuantizer q(-1.0, 2.0, 4);
    const double v = wasted_levels({0.5}, q);
    CHECK(v == doctest::Approx(15.0 / 16.0));
    CHECK_THROWS_AS(wasted_levels({}, q), ValueError);
  }
}

TEST_CASE("complexity unit case: one 1x1 conv at one output pixel") {
  ModelDescriptor m;
  m.preset = "unit";
  m.scale = 1;
  LayerDesc l;
  l.kind = LayerKind::kConv;
  l.id = "only";
  l.in_ch = 1;
  l.out_ch = 1;
  l.kernel = 1;
  l.has_bias = false;
  m.layers.push_back(l);
  auto r = complexity(m, 1, 1);
  CHECK(r.layers.size() == 1);
  CHECK(r.layers[0].ops == doctest::Approx(2.0));
  CHECK(r.total_bops == doctest::Approx(2048.0));  // 2 * 32 * 32
  CHECK(r.total_eff_params == doctest::Approx(1.0));
}

TEST_CASE("complexity: full-precision EDSR matches the reference table") {
  auto m = build_model("edsr", 4, "paper");
  auto r = complexity(m, 1080, 1920);
  CHECK(r.total_raw_params == 1517571);
  CHECK(r.total_eff_params == doctest::Approx(1517571.0));
  CHECK(std::fabs(r.total_bops / 532e12 - 1.0) < 0.10);
  CHECK(r.gate_eff_params == 0.0);
}

TEST_CASE("complexity: 2-bit EDSR with 10 gates") {
  auto m = build_model("edsr", 4, "paper");
  apply_quantization(m, 2, 2);
  attach_gate_descs(m, 10, 64);
  auto r = complexity(m, 1080, 1920);
  // 32 body convs: 1,179,648 weights at 2/32 + 2,048 biases = 75,776;
  // 10 gates at 315 effective each; fp remainder 335,875
  CHECK(r.total_eff_params == doctest::Approx(414801.0));
  CHECK(std::fabs(r.total_eff_params / 0.41e6 - 1.0) < 0.05);
  CHECK(r.highlevel_eff_params == doctest::Approx(78926.0));
  CHECK(r.gate_eff_params == doctest::Approx(3150.0));
  CHECK(r.gate_param_ratio < 0.01);
  CHECK(r.gate_bops_ratio < 0.01);
  CHECK(r.total_bops < 532e12);  // quantization shrinks compute
}

TEST_CASE("complexity: RDN presets") {
  auto m = build_model("rdn", 4, "paper");
  auto r = complexity(m, 1080, 1920);
  CHECK(r.total_raw_params == 22271107);
  CHECK(std::fabs(r.total_raw_params / 22.3e6 - 1.0) < 0.02);

  apply_quantization(m, 2, 2);
  // P=50 over 144 sites, gates tap the 64-channel block input
  attach_gate_descs(m, 72, 64);
  auto rq = complexity(m, 1080, 1920);
  CHECK(std::fabs(rq.total_eff_params / 1.76e6 - 1.0) < 0.05);
}

TEST_CASE("complexity invariants") {
  auto m = build_model("edsr", 4, "paper");
  SUBCASE("totals equal the sum of per-layer entries") {
    auto r = complexity(m, 480, 480);
    double eff = 0.0, bops = 0.0;
    for (const auto& l : r.layers) {
      eff += l.eff_params;
      bops += l.bops;
    }
    CHECK(r.total_eff_params == doctest::Approx(eff));
    CHECK(r.total_bops == doctest::Approx(bops));
  }
  SUBCASE("halving both bit-widths quarters quantized-layer bops") {
    auto m4 = build_model("edsr", 4, "paper");
    apply_quantization(m4, 4, 4);
    auto m8 = build_model("edsr", 4, "paper");
    apply_quantization(m8, 8, 8);
    auto r4 = complexity(m4, 480, 480);
    auto r8 = complexity(m8, 480, 480);
    for (size_t i = 0; i < r4.layers.size(); ++i) {
      if (r4.layers[i].bops != r8.layers[i].bops) {
        CHECK(r8.layers[i].bops == doctest::Approx(4.0 * r4.layers[i].bops));
      }
    }
  }
  SUBCASE("indivisible output size rejected") {
    CHECK_THROWS_AS(complexity(m, 1081, 1920), ValueError);
  }
  SUBCASE("json and table render") {
    auto r = complexity(m, 480, 480);
    CHECK(r.to_table().find("total_bops") != std::string::npos);
    CHECK(r.to_json().find("\"total_bops\"") != std::string::npos);
  }
}
