#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace srqat {

/// Percentile with linear interpolation between closest ranks (C = 1):
/// rank = p/100 * (n-1), interpolated between the neighbouring order
/// statistics. `sample` is copied and sorted internally.
double percentile(std::vector<double> sample, double p);

/// Per-layer calibration record collected from the full-precision network.
struct LayerStats {
  std::string layer_id;
  std::vector<double> sample_max;  // one entry per calibration sample
  std::vector<double> sample_min;
  std::vector<double> pooled;  // pooled activation values for percentiles

  void observe(const std::vector<double>& values, int64_t batch, int64_t pool_stride = 1);

  double v_max() const;  // population variance of per-sample maxima
  double v_min() const;
  double dynamic_intensity() const { return v_max() + v_min(); }
};

struct CalibConfig {
  double percentile_m = 99.0;  // bound-init percentile M
  double gate_ratio_p = 30.0;  // top-P% layers receive a gate
  int warmup_epochs_k = 5;
  int batch_count = 1;

  void validate() const;
};

/// Bound initialization from pooled activations: upper = M-th percentile,
/// lower = (100-M)-th. A degenerate (all-equal) sample is widened by +-eps.
struct BoundInit {
  double alpha_l;
  double alpha_u;
  bool degenerate;
};
BoundInit init_bounds(const LayerStats& stats, double m);

/// Indices (0-based, ascending) of the ceil(P/100 * L) layers with largest
/// dynamic intensity; ties broken toward the shallower layer.
std::vector<int> select_gated_layers(const std::vector<double>& dynamic_intensity, double p);

/// Line-oriented text report (layer, min, max, V_max, V_min, DI).
std::string format_stats_report(const std::vector<LayerStats>& stats);

}  // namespace srqat
