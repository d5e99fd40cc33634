#pragma once

#include <string>
#include <utility>

#include "srqat/tensor.hpp"

namespace srqat {

/// Run settings parsed from a flat "[section]\nkey = value" file.
/// Unknown keys are rejected by name.
struct RunConfig {
  // [model]
  std::string preset = "edsr";
  std::string size = "toy";
  int scale = 2;
  int bits_w = 2;
  int bits_a = 2;

  // [quant]
  double gate_ratio_p = 30.0;
  double percentile_m = 99.0;
  int warmup_epochs_k = 5;
  int calib_batches = 1;
  bool quantize_gate = false;

  // [train]
  int epochs = 30;
  int batch = 8;
  int patch = 16;
  double lr = 1e-4;
  int lr_halve_every = 10;
  double gate_lr = 1e-2;
  double lambda = 1000.0;
  uint64_t seed = 1;
  bool augment = true;

  // [data]
  std::string data_dir;
  int val_count = 2;

  // [eval]
  bool studio_swing = false;

  void validate() const;  // throws ValueError naming the offending key
  std::string serialize() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Per-preset (gate_ratio_p, percentile_m) defaults, applied when the config
/// file leaves those keys unset.
std::pair<double, double> quant_preset_defaults(const std::string& preset);

}  // namespace srqat
