#include "srqat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "srqat/ops.hpp"

namespace srqat {

std::vector<double> luma(const Image& img, bool studio_swing) {
  std::vector<double> y(static_cast<size_t>(img.height * img.width));
  for (int64_t i = 0; i < img.height * img.width; ++i) {
    const double r = img.pixels[i * 3], g = img.pixels[i * 3 + 1], b = img.pixels[i * 3 + 2];
    y[static_cast<size_t>(i)] = studio_swing
                                    ? 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0
                                    : 0.299 * r + 0.587 * g + 0.114 * b;
  }
  return y;
}

namespace {

void check_same_dims(const Image& a, const Image& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(op) + ": image dimensions differ");
  }
}

struct CroppedY {
  std::vector<double> y;
  int64_t h, w;
};

CroppedY cropped_luma(const Image& img, int crop, bool studio_swing) {
  const int64_t h = img.height - 2 * crop, w = img.width - 2 * crop;
  if (h <= 0 || w <= 0) throw ValueError("border crop leaves an empty image");
  auto full = luma(img, studio_swing);
  CroppedY out{std::vector<double>(static_cast<size_t>(h * w)), h, w};
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      out.y[y * w + x] = full[(y + crop) * img.width + (x + crop)];
    }
  return out;
}

}  // namespace

double psnr_y(const Image& sr, const Image& hr, int scale, bool studio_swing) {
  check_same_dims(sr, hr, "psnr_y");
  auto a = cropped_luma(sr, scale, studio_swing);
  auto b = cropped_luma(hr, scale, studio_swing);
  double mse = 0.0;
  for (size_t i = 0; i < a.y.size(); ++i) {
    const double d = a.y[i] - b.y[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.y.size());
  if (mse <= 0.0) return 100.0;
  return std::min(10.0 * std::log10(255.0 * 255.0 / mse), 100.0);
}

double ssim_y(const Image& sr, const Image& hr, int scale, bool studio_swing) {
  check_same_dims(sr, hr, "ssim_y");
  auto a = cropped_luma(sr, scale, studio_swing);
  auto b = cropped_luma(hr, scale, studio_swing);
  constexpr int kWin = 11;
  if (a.h < kWin || a.w < kWin) throw ValueError("ssim_y: image smaller than the 11x11 window");

  double win[kWin][kWin];
  double total = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double dy = i - 5.0, dx = j - 5.0;
      win[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
      total += win[i][j];
    }
  for (auto& row : win)
    for (auto& v : row) v /= total;

  constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
  double acc = 0.0;
  int64_t count = 0;
  for (int64_t y = 0; y + kWin <= a.h; ++y)
    for (int64_t x = 0; x + kWin <= a.w; ++x) {
      double mu_a = 0, mu_b = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          mu_a += win[i][j] * a.y[(y + i) * a.w + (x + j)];
          mu_b += win[i][j] * b.y[(y + i) * b.w + (x + j)];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double da = a.y[(y + i) * a.w + (x + j)] - mu_a;
          const double db = b.y[(y + i) * b.w + (x + j)] - mu_b;
          va += win[i][j] * da * da;
          vb += win[i][j] * db * db;
          cov += win[i][j] * da * db;
        }
      acc += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
             ((mu_a * mu_a + mu_b * mu_b + kC1) * (va + vb + kC2));
      ++count;
    }
  return acc / static_cast<double>(count);
}

namespace {

double wasted_fraction(const std::set<long long>& produced, int bits) {
  const double total = level_count(bits);
  return (total - static_cast<double>(produced.size())) / total;
}

}  // namespace

double wasted_levels(const std::vector<double>& sample, const SymmetricQuantizer& q) {
  if (sample.empty()) throw ValueError("wasted_levels: empty sample");
  const double alpha = q.alpha.values()[0];
  const double s = q.scale();
  std::set<long long> produced;
  for (double v : sample) {
    const double clipped = std::clamp(v, -alpha, alpha);
    produced.insert(static_cast<long long>(round_half_away(clipped / s)));
  }
  return wasted_fraction(produced, q.bits);
}

double wasted_levels(const std::vector<double>& sample, const ActQuantizer& q) {
  if (sample.empty()) throw ValueError("wasted_levels: empty sample");
  auto [codes, deq] = dual_quantize(Tensor::from({static_cast<int64_t>(sample.size())}, sample),
                                    q.alpha_l.values()[0], q.alpha_u.values()[0], q.bits);
  std::set<long long> produced;
  for (double c : codes.values()) produced.insert(static_cast<long long>(c));
  return wasted_fraction(produced, q.bits);
}

}  // namespace srqat
