#include <doctest.h>

#include <numeric>
#include <random>
#include <vector>

#include "srqat/calibration.hpp"
#include "srqat/tensor.hpp"
#include "test_util.hpp"

using namespace srqat;
using namespace srqat::testutil;

namespace {

std::vector<double> one_to_hundred() {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  return v;
}

}  // namespace

TEST_CASE("percentile linear interpolation") {
  auto v = one_to_hundred();
  CHECK(percentile(v, 99.0) == doctest::Approx(99.01));
  CHECK(percentile(v, 1.0) == doctest::Approx(1.99));
  CHECK(percentile(v, 0.0) == doctest::Approx(1.0));
  CHECK(percentile(v, 100.0) == doctest::Approx(100.0));
  CHECK(percentile(v, 50.0) == doctest::Approx(50.5));

  CHECK(percentile({42.0}, 37.0) == doctest::Approx(42.0));
  // input order must not matter
  CHECK(percentile({3.0, 1.0, 2.0}, 50.0) == doctest::Approx(2.0));

  CHECK_THROWS_AS(percentile({}, 50.0), ValueError);
  CHECK_THROWS_AS(percentile({1.0}, -0.1), ValueError);
  CHECK_THROWS_AS(percentile({1.0}, 100.1), ValueError);
}

TEST_CASE("percentile is monotone in p") {
  std::mt19937_64 rng(21);
  auto v = random_vec(rng, 257, -5.0, 5.0);
  double prev = percentile(v, 0.0);
  for (double p = 0.5; p <= 100.0; p += 0.5) {
    double cur = percentile(v, p);
    CHECK(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("layer statistics and dynamic intensity") {
  LayerStats ls;
  ls.layer_id = "body.0";
  // batch of 2, two values per sample: maxima {1, 3}, minima {-1, -1}
  ls.observe({1.0, -1.0, 3.0, -1.0}, 2);
  CHECK(ls.sample_max == std::vector<double>{1.0, 3.0});
  CHECK(ls.sample_min == std::vector<double>{-1.0, -1.0});
  CHECK(ls.v_max() == doctest::Approx(1.0));  // population variance of {1, 3}
  CHECK(ls.v_min() == doctest::Approx(0.0));
  CHECK(ls.dynamic_intensity() == doctest::Approx(1.0));

  // a second batch extends the per-sample records
  ls.observe({0.0, 5.0}, 1);
  CHECK(ls.sample_max.size() == 3);
  CHECK(ls.sample_max[2] == doctest::Approx(5.0));

  CHECK_THROWS_AS(ls.observe({}, 1), ValueError);
  CHECK_THROWS_AS(ls.observe({1.0}, 0), ValueError);
}

TEST_CASE("observe pooling stride subsamples the value stream") {
  LayerStats ls;
  ls.observe({10.0, 11.0, 12.0, 13.0, 14.0, 15.0}, 1, 2);
  CHECK(ls.pooled == std::vector<double>{10.0, 12.0, 14.0});
  // min/max still computed over the full stream
  CHECK(ls.sample_max[0] == doctest::Approx(15.0));
  CHECK(ls.sample_min[0] == doctest::Approx(10.0));
}

TEST_CASE("bound initialization from pooled percentiles") {
  LayerStats ls;
  ls.layer_id = "body.3";
  ls.pooled = one_to_hundred();
  auto b = init_bounds(ls, 99.0);
  CHECK(b.alpha_u == doctest::Approx(99.01));
  CHECK(b.alpha_l == doctest::Approx(1.99));
  CHECK_FALSE(b.degenerate);

  auto b95 = init_bounds(ls, 95.0);
  CHECK(b95.alpha_u == doctest::Approx(95.05));
  CHECK(b95.alpha_l == doctest::Approx(5.95));
}

TEST_CASE("degenerate activation sample widens bounds") {
  LayerStats ls;
  ls.layer_id = "dead";
  ls.pooled.assign(32, 5.0);
  auto b = init_bounds(ls, 99.0);
  CHECK(b.degenerate);
  CHECK(b.alpha_l == doctest::Approx(4.999));
  CHECK(b.alpha_u == doctest::Approx(5.001));
  CHECK(b.alpha_l < b.alpha_u);

  LayerStats empty;
  CHECK_THROWS_AS(init_bounds(empty, 99.0), ValueError);
}

TEST_CASE("gated layer selection") {
  SUBCASE("top half by dynamic intensity") {
    auto picked = select_gated_layers({0.5, 2.0, 1.0, 0.1}, 50.0);
    CHECK(picked == std::vector<int>{1, 2});
  }
  SUBCASE("ceil on fractional counts") {
    auto picked = select_gated_layers({0.5, 2.0, 1.0}, 50.0);  // ceil(1.5) = 2
    CHECK(picked == std::vector<int>{1, 2});
  }
  SUBCASE("ties prefer the shallower layer") {
    auto picked = select_gated_layers({1.0, 1.0, 1.0, 1.0}, 50.0);
    CHECK(picked == std::vector<int>{0, 1});
  }
  SUBCASE("extremes") {
    CHECK(select_gated_layers({1.0, 2.0}, 0.0).empty());
    CHECK(select_gated_layers({1.0, 2.0}, 100.0) == std::vector<int>{0, 1});
  }
  SUBCASE("result is ascending regardless of intensity order") {
    auto picked = select_gated_layers({0.1, 9.0, 0.2, 8.0, 0.3, 7.0}, 50.0);
    CHECK(picked == std::vector<int>{1, 3, 5});
  }
  SUBCASE("invalid ratio") {
    CHECK_THROWS_AS(select_gated_layers({1.0}, -1.0), ValueError);
    CHECK_THROWS_AS(select_gated_layers({1.0}, 101.0), ValueError);
  }
}

TEST_CASE("calibration config validation") {
  CalibConfig c;
  c.validate();  // defaults are valid

  CalibConfig bad = c;
  bad.percentile_m = 50.0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = c;
  bad.percentile_m = 100.5;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = c;
  bad.gate_ratio_p = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = c;
  bad.warmup_epochs_k = -1;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = c;
  bad.batch_count = 0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
}

TEST_CASE("stats report lists one line per layer") {
  LayerStats a;
  a.layer_id = "body.0";
  a.observe({1.0, -1.0, 3.0, -1.0}, 2);
  LayerStats b;
  b.layer_id = "body.1";
  b.observe({0.0, 2.0}, 1);
  auto report = format_stats_report({a, b});
  CHECK(report.find("layer\t") == 0);
  CHECK(report.find("body.0") != std::string::npos);
  CHECK(report.find("body.1") != std::string::npos);
}
