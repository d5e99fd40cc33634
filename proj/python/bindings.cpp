#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>

#include "srqat/calibration.hpp"
#include "srqat/complexity.hpp"
#include "srqat/metrics.hpp"
#include "srqat/quant.hpp"

namespace py = pybind11;
using namespace srqat;

namespace {

Image image_from(const std::vector<uint8_t>& rgb, int64_t height, int64_t width) {
  if (static_cast<int64_t>(rgb.size()) != height * width * 3) {
    throw ValueError("pixel buffer must hold height*width*3 bytes");
  }
  Image img(height, width);
  img.pixels = rgb;
  return img;
}

}  // namespace

PYBIND11_MODULE(_srqat, m) {
  m.doc() = "quantization-aware super-resolution core";

  m.def(
      "percentile",
      [](std::vector<double> sample, double p) { return percentile(std::move(sample), p); },
      py::arg("sample"), py::arg("p"),
      "Percentile with linear interpolation between closest ranks.");

  m.def(
      "dual_quantize",
      [](const std::vector<double>& values, double alpha_l, double alpha_u, int bits) {
        auto [q, deq] = dual_quantize(Tensor::from({static_cast<int64_t>(values.size())},
                                                   std::vector<double>(values)),
                                      alpha_l, alpha_u, bits);
        return py::make_tuple(q.values(), deq.values());
      },
      py::arg("values"), py::arg("alpha_l"), py::arg("alpha_u"), py::arg("bits"),
      "Dual-bound quantization: (integer codes, dequantized values).");

  m.def(
      "symmetric_quantize",
      [](const std::vector<double>& values, double alpha, int bits) {
        return symmetric_quantize(Tensor::from({static_cast<int64_t>(values.size())},
                                               std::vector<double>(values)),
                                  alpha, bits)
            .values();
      },
      py::arg("values"), py::arg("alpha"), py::arg("bits"),
      "Symmetric single-bound quantize-dequantize.");

  m.def(
      "wasted_levels_symmetric",
      [](const std::vector<double>& sample, double alpha, int bits) {
        return wasted_levels(sample, SymmetricQuantizer(alpha, bits));
      },
      py::arg("sample"), py::arg("alpha"), py::arg("bits"),
      "Fraction of representable levels never produced by the symmetric quantizer.");

  m.def(
      "wasted_levels_dual",
      [](const std::vector<double>& sample, double alpha_l, double alpha_u, int bits) {
        return wasted_levels(sample, ActQuantizer(alpha_l, alpha_u, bits));
      },
      py::arg("sample"), py::arg("alpha_l"), py::arg("alpha_u"), py::arg("bits"),
      "Fraction of representable levels never produced by the dual-bound quantizer.");

  m.def("select_gated_layers", &select_gated_layers, py::arg("dynamic_intensity"),
        py::arg("p"), "Indices of the top-P% layers by dynamic intensity, ascending.");

  m.def(
      "psnr",
      [](const std::vector<uint8_t>& sr, const std::vector<uint8_t>& hr, int64_t height,
         int64_t width, int crop, bool studio_swing) {
        return psnr_y(image_from(sr, height, width), image_from(hr, height, width), crop,
                      studio_swing);
      },
      py::arg("sr"), py::arg("hr"), py::arg("height"), py::arg("width"), py::arg("crop") = 0,
      py::arg("studio_swing") = false,
      "Y-channel PSNR over interleaved RGB byte buffers.");

  m.def(
      "ssim",
      [](const std::vector<uint8_t>& sr, const std::vector<uint8_t>& hr, int64_t height,
         int64_t width, int crop, bool studio_swing) {
        return ssim_y(image_from(sr, height, width), image_from(hr, height, width), crop,
                      studio_swing);
      },
      py::arg("sr"), py::arg("hr"), py::arg("height"), py::arg("width"), py::arg("crop") = 0,
      py::arg("studio_swing") = false,
      "Y-channel SSIM over interleaved RGB byte buffers.");

  m.def(
      "analyze",
      [](const std::string& preset, int scale, const std::string& size, int bits,
         int64_t out_h, int64_t out_w, int gates) {
        auto desc = build_model(preset, scale, size);
        if (bits < 32) {
          apply_quantization(desc, bits, bits);
          if (gates > 0) attach_gate_descs(desc, gates, desc.channels);
        }
        return complexity(desc, out_h, out_w).to_json();
      },
      py::arg("preset"), py::arg("scale") = 4, py::arg("size") = "paper", py::arg("bits") = 32,
      py::arg("out_h") = 1080, py::arg("out_w") = 1920, py::arg("gates") = 0,
      "Params/BOPs report as a JSON string.");
}
