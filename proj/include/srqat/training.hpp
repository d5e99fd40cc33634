#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "srqat/config.hpp"
#include "srqat/image.hpp"
#include "srqat/model.hpp"

namespace srqat {

/// Mean absolute error between network output and target.
Tensor l1_loss(const Tensor& sr, const Tensor& hr);

/// Structure-transfer loss: per-image channel-energy maps sum_c F_c^2,
/// L2-normalized (plus 1e-12), mean L2 distance over the batch. The teacher
/// side is detached.
Tensor structure_loss(const Tensor& student_feat, const Tensor& teacher_feat);

/// Mean of (beta - 1)^2 over all gate outputs (warmup target).
Tensor gate_warmup_loss(const std::vector<std::pair<Tensor, Tensor>>& betas);

/// lr(e) = lr0 * 0.5^floor(e / halve_every), epochs counted from 1.
double lr_at_epoch(double lr0, int epoch, int halve_every);

/// Adam with bias correction over shared-handle parameter tensors.
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void zero_grad();
  void step(double lr);
  size_t param_count() const { return params_.size(); }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0;
};

struct Dataset {
  std::vector<ImagePair> train_pairs;
  std::vector<ImagePair> val_pairs;
  std::vector<double> rgb_mean;  // over training HR images
};

/// Loads every .ppm under `dir` (sorted by name); the last `val_count` become
/// the validation split.
Dataset load_dataset(const std::string& dir, int scale, int val_count);

/// Draws an augmented batch of aligned patches; returns (lr, hr) tensors.
std::pair<Tensor, Tensor> draw_batch(const Dataset& data, int patch, int batch,
                                     bool augment_patches, std::mt19937_64& rng);

/// Runs fp statistics collection over calibration batches, initializes the
/// activation/weight quantizers, ranks sites by dynamic intensity, and
/// attaches gates to the top P% sites.
void calibrate_network(SRNetwork& net, const std::vector<Tensor>& calib_batches,
                       const RunConfig& cfg, std::mt19937_64& rng);

/// Mean validation PSNR over full images.
double validate_psnr(SRNetwork& net, const std::vector<ImagePair>& pairs, bool quantized,
                     bool studio_swing = false);

struct EpochLog {
  int epoch = 0;
  double l1 = 0, distill = 0, total = 0, lr = 0, val_psnr = 0;
  bool gate_scaling_active = false;
  double mean_beta_dev = 0;  // mean |beta - 1| over the epoch's gate outputs
};

struct TrainResult {
  std::vector<EpochLog> log;
  bool aborted = false;
  std::string abort_reason;
  double final_val_psnr = 0.0;
};

/// Full-precision L1 pretraining (produces the distillation teacher).
TrainResult train_fp(SRNetwork& net, const Dataset& data, const RunConfig& cfg, int epochs,
                     std::mt19937_64& rng);

/// Quantization-aware training with distillation: warmup epochs train the
/// gates toward 1 without applying bound scaling; afterwards scaling is
/// active and everything trains jointly. Appends one CSV row per epoch to
/// `csv_path` when non-empty.
TrainResult train_qat(SRNetwork& student, SRNetwork& teacher, const Dataset& data,
                      const RunConfig& cfg, std::mt19937_64& rng,
                      const std::string& csv_path = "");

}  // namespace srqat
