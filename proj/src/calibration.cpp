#include "srqat/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "srqat/tensor.hpp"

namespace srqat {

double percentile(std::vector<double> sample, double p) {
  if (sample.empty()) throw ValueError("percentile: empty sample");
  if (p < 0.0 || p > 100.0) throw ValueError("percentile: p out of [0,100]");
  std::sort(sample.begin(), sample.end());
  const size_t n = sample.size();
  if (n == 1) return sample[0];
  const double rank = p / 100.0 * static_cast<double>(n - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = std::min(lo + 1, n - 1);
  const double frac = rank - static_cast<double>(lo);
  return sample[lo] + frac * (sample[hi] - sample[lo]);
}

namespace {

double population_variance(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return acc / xs.size();
}

}  // namespace

void LayerStats::observe(const std::vector<double>& values, int64_t batch, int64_t pool_stride) {
  if (batch <= 0 || values.empty()) throw ValueError("LayerStats::observe: empty batch");
  const int64_t per = static_cast<int64_t>(values.size()) / batch;
  for (int64_t n = 0; n < batch; ++n) {
    double mx = values[n * per];
    double mn = mx;
    for (int64_t i = 1; i < per; ++i) {
      const double v = values[n * per + i];
      mx = std::max(mx, v);
      mn = std::min(mn, v);
    }
    sample_max.push_back(mx);
    sample_min.push_back(mn);
  }
  for (size_t i = 0; i < values.size(); i += static_cast<size_t>(pool_stride)) {
    pooled.push_back(values[i]);
  }
}

double LayerStats::v_max() const { return population_variance(sample_max); }
double LayerStats::v_min() const { return population_variance(sample_min); }

void CalibConfig::validate() const {
  if (!(percentile_m > 50.0 && percentile_m <= 100.0)) {
    throw ValueError("calibration: M must be in (50,100]");
  }
  if (gate_ratio_p < 0.0 || gate_ratio_p > 100.0) {
    throw ValueError("calibration: P must be in [0,100]");
  }
  if (warmup_epochs_k < 0) throw ValueError("calibration: K must be >= 0");
  if (batch_count < 1) throw ValueError("calibration: batch count must be >= 1");
}

BoundInit init_bounds(const LayerStats& stats, double m) {
  if (stats.pooled.empty()) throw ValueError("init_bounds: empty pooled sample");
  double alpha_u = percentile(stats.pooled, m);
  double alpha_l = percentile(stats.pooled, 100.0 - m);
  bool degenerate = !(alpha_l < alpha_u);
  if (degenerate) {
    constexpr double kEps = 1e-3;
    std::cerr << "warning: degenerate activation sample for layer '" << stats.layer_id
              << "', widening bounds by +-" << kEps << "\n";
    alpha_l -= kEps;
    alpha_u += kEps;
  }
  return {alpha_l, alpha_u, degenerate};
}

std::vector<int> select_gated_layers(const std::vector<double>& dynamic_intensity, double p) {
  if (p < 0.0 || p > 100.0) throw ValueError("select_gated_layers: P out of [0,100]");
  const int layer_count = static_cast<int>(dynamic_intensity.size());
  const int want = static_cast<int>(std::ceil(p / 100.0 * layer_count));
  std::vector<int> order(dynamic_intensity.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dynamic_intensity[a] != dynamic_intensity[b]) {
      return dynamic_intensity[a] > dynamic_intensity[b];
    }
    return a < b;  // shallower layer wins ties
  });
  std::vector<int> picked(order.begin(), order.begin() + want);
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::string format_stats_report(const std::vector<LayerStats>& stats) {
  std::ostringstream os;
  os << "layer\tmin\tmax\tv_max\tv_min\tdi\n";
  for (const auto& s : stats) {
    double mn = s.sample_min.empty() ? 0.0
                                     : *std::min_element(s.sample_min.begin(), s.sample_min.end());
    double mx = s.sample_max.empty() ? 0.0
                                     : *std::max_element(s.sample_max.begin(), s.sample_max.end());
    os << s.layer_id << "\t" << mn << "\t" << mx << "\t" << s.v_max() << "\t" << s.v_min()
       << "\t" << s.dynamic_intensity() << "\n";
  }
  return os.str();
}

}  // namespace srqat
