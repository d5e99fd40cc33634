#include "srqat/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "srqat/metrics.hpp"
#include "srqat/ops.hpp"

namespace srqat {

Tensor l1_loss(const Tensor& sr, const Tensor& hr) { return mean(abs(sub(sr, hr))); }

namespace {

Tensor energy_map(const Tensor& feat) {
  Tensor e = sum_channels(square(feat));                       // [N,H,W]
  Tensor norm = add_scalar(per_sample_l2(e), 1e-12);           // [N]
  return mul_per_sample(e, reciprocal(norm));
}

}  // namespace

Tensor structure_loss(const Tensor& student_feat, const Tensor& teacher_feat) {
  Tensor t_map;
  {
    autograd::NoGradGuard ng;
    t_map = energy_map(teacher_feat);
  }
  Tensor s_map = energy_map(student_feat);
  return mean(per_sample_l2(sub(s_map, t_map)));
}

Tensor gate_warmup_loss(const std::vector<std::pair<Tensor, Tensor>>& betas) {
  if (betas.empty()) return Tensor::scalar(0.0);
  Tensor total = Tensor::scalar(0.0);
  int64_t count = 0;
  for (const auto& [bl, bu] : betas) {
    total = add(total, sum(square(add_scalar(bl, -1.0))));
    total = add(total, sum(square(add_scalar(bu, -1.0))));
    count += bl.numel() + bu.numel();
  }
  return mul_scalar(total, 1.0 / static_cast<double>(count));
}

double lr_at_epoch(double lr0, int epoch, int halve_every) {
  if (halve_every <= 0) return lr0;
  return lr0 * std::pow(0.5, std::floor(static_cast<double>(epoch) / halve_every));
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& val = params_[i].values();
    const auto& g = params_[i].grad();
    for (size_t j = 0; j < val.size(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      val[j] -= lr * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
    }
  }
}

namespace {

std::vector<std::string> sorted_ppms(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".ppm") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

Dataset load_dataset(const std::string& dir, int scale, int val_count) {
  // flat directory of HR images, or HR/ + LR_bicubic/X<scale>/ with
  // pre-rendered low-resolution counterparts
  std::string hr_dir = dir;
  std::string lr_dir;
  if (std::filesystem::is_directory(std::filesystem::path(dir) / "HR")) {
    hr_dir = (std::filesystem::path(dir) / "HR").string();
    const auto lr = std::filesystem::path(dir) / "LR_bicubic" / ("X" + std::to_string(scale));
    if (std::filesystem::is_directory(lr)) lr_dir = lr.string();
  }
  std::vector<std::string> files = sorted_ppms(hr_dir);
  if (static_cast<int>(files.size()) <= val_count) {
    throw IOError("dataset '" + dir + "' needs more than " + std::to_string(val_count) +
                  " .ppm images");
  }
  std::vector<std::string> lr_files;
  if (!lr_dir.empty()) {
    lr_files = sorted_ppms(lr_dir);
    if (lr_files.size() != files.size()) {
      throw IOError("dataset '" + dir + "': HR and LR image counts differ");
    }
  }
  Dataset data;
  std::vector<Image> train_hr;
  const size_t train_n = files.size() - static_cast<size_t>(val_count);
  for (size_t i = 0; i < files.size(); ++i) {
    ImagePair pair;
    if (lr_files.empty()) {
      pair = make_pair(load_ppm(files[i]), scale);
    } else {
      pair.hr = crop_to_multiple(load_ppm(files[i]), scale);
      pair.lr = load_ppm(lr_files[i]);
      pair.scale = scale;
      if (pair.hr.height != pair.lr.height * scale || pair.hr.width != pair.lr.width * scale) {
        throw IOError("dataset '" + dir + "': LR dims do not match HR/" +
                      std::filesystem::path(files[i]).filename().string());
      }
    }
    if (i < train_n) {
      train_hr.push_back(pair.hr);
      data.train_pairs.push_back(std::move(pair));
    } else {
      data.val_pairs.push_back(std::move(pair));
    }
  }
  data.rgb_mean = channel_means(train_hr);
  return data;
}

std::pair<Tensor, Tensor> draw_batch(const Dataset& data, int patch, int batch,
                                     bool augment_patches, std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> pick(0, data.train_pairs.size() - 1);
  std::vector<Image> lr, hr;
  for (int i = 0; i < batch; ++i) {
    const ImagePair& pair = data.train_pairs[pick(rng)];
    PatchPair p = sample_patches(pair, patch, 1, rng)[0];
    if (augment_patches) p = augment(p, rng);
    lr.push_back(std::move(p.lr));
    hr.push_back(std::move(p.hr));
  }
  return {images_to_tensor(lr), images_to_tensor(hr)};
}

void calibrate_network(SRNetwork& net, const std::vector<Tensor>& calib_batches,
                       const RunConfig& cfg, std::mt19937_64& rng) {
  std::vector<LayerStats> stats;
  {
    autograd::NoGradGuard ng;
    ForwardHooks hooks;
    hooks.stats = &stats;
    for (const auto& batch : calib_batches) net.forward(batch, false, false, hooks);
  }
  std::vector<BoundInit> bounds;
  std::vector<double> di;
  for (const auto& ls : stats) {
    bounds.push_back(init_bounds(ls, cfg.percentile_m));
    di.push_back(ls.dynamic_intensity());
  }
  net.setup_quantizers(cfg.bits_w, cfg.bits_a, bounds);
  net.attach_gates(select_gated_layers(di, cfg.gate_ratio_p), rng);
  if (!net.gates.empty()) {
    // seed gate batch-norm running stats and range trackers
    autograd::NoGradGuard ng;
    for (const auto& batch : calib_batches) net.forward(batch, true, true);
    if (cfg.quantize_gate) {
      for (auto& g : net.gates) g.quantized = true;
    }
  }
}

double validate_psnr(SRNetwork& net, const std::vector<ImagePair>& pairs, bool quantized,
                     bool studio_swing) {
  autograd::NoGradGuard ng;
  double total = 0.0;
  for (const auto& pair : pairs) {
    Tensor out = net.forward(image_to_tensor(pair.lr), quantized, false);
    total += psnr_y(tensor_to_image(out), pair.hr, pair.scale, studio_swing);
  }
  return pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size());
}

namespace {

constexpr int kStepsPerEpoch = 4;

void append_csv(const std::string& path, const EpochLog& e, bool header) {
  std::ofstream out(path, header ? std::ios::trunc : std::ios::app);
  if (!out) throw IOError("cannot write log: " + path);
  if (header) out << "epoch,l1,distill,total,lr,val_psnr\n";
  out << e.epoch << ',' << e.l1 << ',' << e.distill << ',' << e.total << ',' << e.lr << ','
      << e.val_psnr << '\n';
}

}  // namespace

TrainResult train_fp(SRNetwork& net, const Dataset& data, const RunConfig& cfg, int epochs,
                     std::mt19937_64& rng) {
  TrainResult result;
  Adam opt(net.parameters());
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg.lr, epoch, cfg.lr_halve_every);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    for (int step = 0; step < kStepsPerEpoch; ++step) {
      auto [lr_batch, hr_batch] = draw_batch(data, cfg.patch, cfg.batch, cfg.augment, rng);
      Tensor out = net.forward(lr_batch, false, true);
      Tensor loss = l1_loss(out, hr_batch);
      if (!std::isfinite(loss.item())) {
        result.aborted = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
        result.log.push_back(log);
        return result;
      }
      opt.zero_grad();
      backward(loss);
      opt.step(lr);
      log.l1 += loss.item() / kStepsPerEpoch;
    }
    log.total = log.l1;
    log.val_psnr = validate_psnr(net, data.val_pairs, false, cfg.studio_swing);
    result.log.push_back(log);
  }
  if (!result.log.empty()) result.final_val_psnr = result.log.back().val_psnr;
  return result;
}

TrainResult train_qat(SRNetwork& student, SRNetwork& teacher, const Dataset& data,
                      const RunConfig& cfg, std::mt19937_64& rng, const std::string& csv_path) {
  TrainResult result;
  Adam opt(student.parameters());
  Adam gate_opt(student.gate_parameters());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const bool warmup = epoch <= cfg.warmup_epochs_k;
    const double lr = lr_at_epoch(cfg.lr, epoch, cfg.lr_halve_every);
    const double glr = lr_at_epoch(cfg.gate_lr, epoch, cfg.lr_halve_every);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.gate_scaling_active = !warmup;
    double beta_dev_sum = 0.0;
    int64_t beta_count = 0;
    for (int step = 0; step < kStepsPerEpoch; ++step) {
      auto [lr_batch, hr_batch] = draw_batch(data, cfg.patch, cfg.batch, cfg.augment, rng);

      Tensor teacher_feat;
      {
        autograd::NoGradGuard ng;
        ForwardHooks thooks;
        thooks.distill_feature = &teacher_feat;
        teacher.forward(lr_batch, false, false, thooks);
      }

      Tensor student_feat;
      std::vector<std::pair<Tensor, Tensor>> betas;
      ForwardHooks hooks;
      hooks.distill_feature = &student_feat;
      hooks.betas = &betas;
      hooks.apply_gates = !warmup;
      Tensor out = student.forward(lr_batch, true, true, hooks);

      Tensor l1 = l1_loss(out, hr_batch);
      Tensor distill = structure_loss(student_feat, teacher_feat);
      Tensor total = add(l1, mul_scalar(distill, cfg.lambda));
      if (warmup && !betas.empty()) total = add(total, gate_warmup_loss(betas));

      for (const auto& [bl, bu] : betas) {
        for (double v : bl.values()) beta_dev_sum += std::fabs(v - 1.0);
        for (double v : bu.values()) beta_dev_sum += std::fabs(v - 1.0);
        beta_count += bl.numel() + bu.numel();
      }

      if (!std::isfinite(total.item())) {
        result.aborted = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
        result.log.push_back(log);
        return result;
      }
      opt.zero_grad();
      gate_opt.zero_grad();
      backward(total);
      opt.step(lr);
      gate_opt.step(glr);
      student.clamp_quantizer_params();

      log.l1 += l1.item() / kStepsPerEpoch;
      log.distill += distill.item() / kStepsPerEpoch;
      log.total += total.item() / kStepsPerEpoch;
    }
    log.mean_beta_dev = beta_count > 0 ? beta_dev_sum / static_cast<double>(beta_count) : 0.0;
    log.val_psnr = validate_psnr(student, data.val_pairs, true, cfg.studio_swing);
    result.log.push_back(log);
    if (!csv_path.empty()) append_csv(csv_path, log, epoch == 1);
  }
  if (!result.log.empty()) result.final_val_psnr = result.log.back().val_psnr;
  return result;
}

}  // namespace srqat
