#include "srqat/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "srqat/ops.hpp"

namespace srqat {

namespace {

int read_ppm_int(std::istream& in, const std::string& path) {
  // skips whitespace and '#' comments per the PPM grammar
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw IOError("malformed PPM header: " + path);
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace

Image load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open image: " + path);
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') {
    throw IOError("unsupported image format (want PPM P6): " + path);
  }
  const int w = read_ppm_int(in, path);
  const int h = read_ppm_int(in, path);
  const int maxval = read_ppm_int(in, path);
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw IOError("unsupported PPM dimensions or maxval: " + path);
  }
  Image img(h, w);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw IOError("truncated PPM payload: " + path);
  }
  return img;
}

void save_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write image: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IOError("failed writing image payload: " + path);
}

Tensor image_to_tensor(const Image& img) { return images_to_tensor({img}); }

Tensor images_to_tensor(const std::vector<Image>& imgs) {
  if (imgs.empty()) throw ValueError("images_to_tensor: empty batch");
  const int64_t h = imgs[0].height, w = imgs[0].width;
  const int64_t n = static_cast<int64_t>(imgs.size());
  std::vector<double> v(static_cast<size_t>(n * 3 * h * w));
  for (int64_t i = 0; i < n; ++i) {
    const auto& img = imgs[static_cast<size_t>(i)];
    if (img.height != h || img.width != w) {
      throw ShapeError("images_to_tensor: mixed image dimensions in batch");
    }
    for (int c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          v[((i * 3 + c) * h + y) * w + x] = static_cast<double>(img.at(y, x, c));
        }
  }
  return Tensor::from({n, 3, h, w}, std::move(v));
}

Image tensor_to_image(const Tensor& t) {
  Shape s = t.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || s[0] != 3) {
    throw ShapeError("tensor_to_image expects [1,3,H,W] or [3,H,W], got " +
                     shape_str(t.shape()));
  }
  const int64_t h = s[1], w = s[2];
  Image img(h, w);
  for (int c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double v = round_half_away(t.values()[(c * h + y) * w + x]);
        img.at(y, x, c) = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

namespace {

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x < 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
  if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
  return 0.0;
}

/// Antialiased 1-D resampling weights for one output coordinate.
struct TapSet {
  int64_t first;
  std::vector<double> w;
};

TapSet taps_for(int64_t out_idx, int scale, int64_t in_size) {
  const double s = static_cast<double>(scale);
  const double center = (static_cast<double>(out_idx) + 0.5) * s - 0.5;
  const double support = 2.0 * s;
  const int64_t lo = static_cast<int64_t>(std::floor(center - support)) + 1;
  const int64_t hi = static_cast<int64_t>(std::floor(center + support));
  TapSet t;
  t.first = lo;
  double total = 0.0;
  for (int64_t i = lo; i <= hi; ++i) {
    const double wv = cubic_kernel((center - static_cast<double>(i)) / s) / s;
    t.w.push_back(wv);
    total += wv;
  }
  for (auto& wv : t.w) wv /= total;
  return t;
}

int64_t clamp_idx(int64_t i, int64_t n) { return std::clamp<int64_t>(i, 0, n - 1); }

}  // namespace

Image bicubic_downsample(const Image& hr, int scale) {
  if (scale < 1) throw ValueError("bicubic_downsample: scale must be >= 1");
  if (scale == 1) return hr;
  if (hr.height % scale != 0 || hr.width % scale != 0) {
    throw ValueError("bicubic_downsample: dimensions must divide by scale; crop first");
  }
  const int64_t oh = hr.height / scale, ow = hr.width / scale;

  // horizontal pass
  std::vector<double> tmp(static_cast<size_t>(hr.height * ow * 3));
  for (int64_t ox = 0; ox < ow; ++ox) {
    const TapSet t = taps_for(ox, scale, hr.width);
    for (int64_t y = 0; y < hr.height; ++y)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (size_t k = 0; k < t.w.size(); ++k) {
          acc += t.w[k] * hr.at(y, clamp_idx(t.first + static_cast<int64_t>(k), hr.width), c);
        }
        tmp[(y * ow + ox) * 3 + c] = acc;
      }
  }
  // vertical pass
  Image out(oh, ow);
  for (int64_t oy = 0; oy < oh; ++oy) {
    const TapSet t = taps_for(oy, scale, hr.height);
    for (int64_t x = 0; x < ow; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (size_t k = 0; k < t.w.size(); ++k) {
          acc += t.w[k] * tmp[(clamp_idx(t.first + static_cast<int64_t>(k), hr.height) * ow + x) *
                                  3 +
                              c];
        }
        out.at(oy, x, c) = static_cast<uint8_t>(std::clamp(round_half_away(acc), 0.0, 255.0));
      }
  }
  return out;
}

Image crop_to_multiple(const Image& img, int scale) {
  const int64_t h = img.height - img.height % scale;
  const int64_t w = img.width - img.width % scale;
  if (h == img.height && w == img.width) return img;
  Image out(h, w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c);
  return out;
}

ImagePair make_pair(const Image& hr, int scale) {
  ImagePair p;
  p.scale = scale;
  p.hr = crop_to_multiple(hr, scale);
  p.lr = bicubic_downsample(p.hr, scale);
  return p;
}

std::vector<PatchPair> sample_patches(const ImagePair& pair, int patch, int n,
                                      std::mt19937_64& rng) {
  if (patch > pair.lr.height || patch > pair.lr.width) {
    throw ValueError("sample_patches: patch size exceeds LR dimensions");
  }
  std::uniform_int_distribution<int64_t> dy(0, pair.lr.height - patch);
  std::uniform_int_distribution<int64_t> dx(0, pair.lr.width - patch);
  std::vector<PatchPair> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int64_t y0 = dy(rng), x0 = dx(rng);
    PatchPair pp;
    pp.lr = Image(patch, patch);
    pp.hr = Image(static_cast<int64_t>(patch) * pair.scale,
                  static_cast<int64_t>(patch) * pair.scale);
    for (int64_t y = 0; y < patch; ++y)
      for (int64_t x = 0; x < patch; ++x)
        for (int c = 0; c < 3; ++c) pp.lr.at(y, x, c) = pair.lr.at(y0 + y, x0 + x, c);
    for (int64_t y = 0; y < pp.hr.height; ++y)
      for (int64_t x = 0; x < pp.hr.width; ++x)
        for (int c = 0; c < 3; ++c) {
          pp.hr.at(y, x, c) = pair.hr.at(y0 * pair.scale + y, x0 * pair.scale + x, c);
        }
    out.push_back(std::move(pp));
  }
  return out;
}

namespace {

Image hflip(const Image& img) {
  Image out(img.height, img.width);
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Image rot90(const Image& img) {  // counter-clockwise
  Image out(img.width, img.height);
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(img.width - 1 - x, y, c) = img.at(y, x, c);
  return out;
}

Image transform(const Image& img, bool flip, int quarter_turns) {
  Image out = flip ? hflip(img) : img;
  for (int i = 0; i < quarter_turns; ++i) out = rot90(out);
  return out;
}

}  // namespace

PatchPair augment(const PatchPair& p, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> turns(0, 3);
  const bool flip = coin(rng) == 1;
  const int q = turns(rng);
  return {transform(p.lr, flip, q), transform(p.hr, flip, q)};
}

std::vector<double> channel_means(const std::vector<Image>& imgs) {
  std::vector<double> mean(3, 0.0);
  int64_t count = 0;
  for (const auto& img : imgs) {
    for (int64_t y = 0; y < img.height; ++y)
      for (int64_t x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) mean[static_cast<size_t>(c)] += img.at(y, x, c);
    count += img.height * img.width;
  }
  if (count == 0) throw ValueError("channel_means: no pixels");
  for (auto& m : mean) m /= static_cast<double>(count);
  return mean;
}

}  // namespace srqat
