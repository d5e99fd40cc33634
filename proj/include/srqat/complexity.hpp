#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srqat/model.hpp"

namespace srqat {

struct LayerComplexity {
  std::string id;
  bool is_gate = false;
  int64_t raw_params = 0;
  double eff_params = 0.0;  // weights scaled by bits/32; biases and BN at fp
  double ops = 0.0;         // 2 per multiply-accumulate
  double bops = 0.0;        // ops * bits_w * bits_a
};

struct ComplexityReport {
  double total_eff_params = 0.0;
  double highlevel_eff_params = 0.0;  // quantized convs + gates
  double gate_eff_params = 0.0;
  double gate_param_ratio = 0.0;
  double total_bops = 0.0;
  double gate_bops = 0.0;
  double gate_bops_ratio = 0.0;
  int64_t total_raw_params = 0;
  std::vector<LayerComplexity> layers;

  std::string to_table() const;
  std::string to_json() const;
};

/// Analytic params/BOPs walk over the descriptor for a given output size.
/// Spatial dimensions start at output/scale and track pixel shuffles; gate
/// convs run on the feature map they tap (stride-2 conv then 1x1 on pooled
/// features).
ComplexityReport complexity(const ModelDescriptor& desc, int64_t out_h, int64_t out_w);

}  // namespace srqat
