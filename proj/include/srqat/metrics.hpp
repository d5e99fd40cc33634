#pragma once

#include <vector>

#include "srqat/image.hpp"
#include "srqat/quant.hpp"

namespace srqat {

/// BT.601 luma. Full-range: Y = 0.299R + 0.587G + 0.114B on [0,255].
/// Studio-swing: Y = 16 + (65.481R + 128.553G + 24.966B)/255.
std::vector<double> luma(const Image& img, bool studio_swing = false);

/// PSNR on the Y channel after cropping `scale` pixels from each border;
/// zero MSE reports the 100 dB sentinel.
double psnr_y(const Image& sr, const Image& hr, int scale, bool studio_swing = false);

/// Single-scale SSIM on Y: 11x11 Gaussian window (sigma 1.5), K1=0.01,
/// K2=0.03, L=255, after the same border crop as psnr_y.
double ssim_y(const Image& sr, const Image& hr, int scale, bool studio_swing = false);

/// Fraction of the 2^b representable levels never produced when quantizing
/// the sample.
double wasted_levels(const std::vector<double>& sample, const SymmetricQuantizer& q);
double wasted_levels(const std::vector<double>& sample, const ActQuantizer& q);

}  // namespace srqat
