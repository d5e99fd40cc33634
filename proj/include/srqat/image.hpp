#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "srqat/tensor.hpp"

namespace srqat {

class IOError : public std::runtime_error {
 public:
  explicit IOError(const std::string& what) : std::runtime_error(what) {}
};

/// 8-bit interleaved RGB image.
struct Image {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;  // height * width * 3, row-major RGB

  Image() = default;
  Image(int64_t h, int64_t w) : height(h), width(w), pixels(static_cast<size_t>(h * w * 3)) {}

  uint8_t& at(int64_t y, int64_t x, int c) { return pixels[(y * width + x) * 3 + c]; }
  uint8_t at(int64_t y, int64_t x, int c) const { return pixels[(y * width + x) * 3 + c]; }
};

/// Binary PPM (P6, maxval 255), bit-exact round-trip.
Image load_ppm(const std::string& path);
void save_ppm(const Image& img, const std::string& path);

/// [1,3,H,W] tensor with values in [0,255].
Tensor image_to_tensor(const Image& img);
/// Batch of images -> [N,3,H,W]; all images must share dimensions.
Tensor images_to_tensor(const std::vector<Image>& imgs);
/// Rounds (half away from zero) and clamps to [0,255]; expects [1,3,H,W] or [3,H,W].
Image tensor_to_image(const Tensor& t);

/// Antialiased bicubic (a = -0.5) downsample; dims must divide by scale
/// (crop beforehand). scale=1 is the identity.
Image bicubic_downsample(const Image& hr, int scale);

/// Crops so both dims are multiples of scale (anchored top-left).
Image crop_to_multiple(const Image& img, int scale);

struct ImagePair {
  Image lr, hr;
  int scale = 1;
};

/// Builds the pair by cropping HR to a multiple of scale and synthesizing LR.
ImagePair make_pair(const Image& hr, int scale);

struct PatchPair {
  Image lr, hr;
};

/// n aligned LR/HR patch pairs; `patch` is the LR patch side.
std::vector<PatchPair> sample_patches(const ImagePair& pair, int patch, int n,
                                      std::mt19937_64& rng);

/// Random draw from {identity, h-flip} x {0, 90, 180, 270} degrees, applied
/// identically to both patches.
PatchPair augment(const PatchPair& p, std::mt19937_64& rng);

/// Per-channel mean of a set of images, in [0,255].
std::vector<double> channel_means(const std::vector<Image>& imgs);

}  // namespace srqat
