#include "srqat/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace srqat {

namespace {

LayerComplexity conv_complexity(const LayerDesc& l, int64_t h, int64_t w) {
  LayerComplexity c;
  c.id = l.id;
  const int64_t weights = l.in_ch * l.out_ch * l.kernel * l.kernel;
  c.raw_params = weights + (l.has_bias ? l.out_ch : 0) + (l.has_bn ? 2 * l.out_ch : 0);
  c.eff_params = static_cast<double>(weights) * (static_cast<double>(l.bits_w) / 32.0) +
                 static_cast<double>(l.has_bias ? l.out_ch : 0) +
                 static_cast<double>(l.has_bn ? 2 * l.out_ch : 0);
  const int64_t oh = h / l.stride, ow = w / l.stride;
  const double macs = static_cast<double>(weights) * static_cast<double>(oh * ow);
  c.ops = 2.0 * macs;
  c.bops = c.ops * static_cast<double>(l.bits_w) * static_cast<double>(l.bits_a);
  return c;
}

LayerComplexity gate_complexity(const LayerDesc& l, int64_t h, int64_t w) {
  LayerComplexity c;
  c.id = l.id;
  c.is_gate = true;
  const int64_t hidden = std::max<int64_t>(l.in_ch / 8, 4);
  const int64_t w1 = hidden * l.in_ch * 9;
  const int64_t w2 = 2 * hidden;
  c.raw_params = w1 + hidden + 2 * hidden + w2 + 2;
  const double bit_scale = static_cast<double>(l.bits_w) / 32.0;
  c.eff_params = static_cast<double>(w1 + w2) * bit_scale +
                 static_cast<double>(hidden + 2 * hidden + 2);
  const int64_t oh = (h + 1) / 2, ow = (w + 1) / 2;  // stride-2 conv, pad 1
  const double macs = static_cast<double>(w1) * static_cast<double>(oh * ow) +
                      static_cast<double>(w2);  // 1x1 head on pooled features
  c.ops = 2.0 * macs;
  c.bops = c.ops * static_cast<double>(l.bits_w) * static_cast<double>(l.bits_a);
  return c;
}

}  // namespace

ComplexityReport complexity(const ModelDescriptor& desc, int64_t out_h, int64_t out_w) {
  if (out_h % desc.scale != 0 || out_w % desc.scale != 0) {
    throw ValueError("complexity: output size must divide by the model scale");
  }
  int64_t h = out_h / desc.scale, w = out_w / desc.scale;
  // feature-map size where the gates tap (body resolution)
  const int64_t body_h = h, body_w = w;

  ComplexityReport r;
  for (const auto& l : desc.layers) {
    switch (l.kind) {
      case LayerKind::kConv: {
        auto c = conv_complexity(l, h, w);
        h /= l.stride;
        w /= l.stride;
        const bool quant = l.tag == ModuleTag::kHighLevel;
        if (quant) r.highlevel_eff_params += c.eff_params;
        r.layers.push_back(std::move(c));
        break;
      }
      case LayerKind::kPixelShuffle:
        h *= l.upscale;
        w *= l.upscale;
        break;
      case LayerKind::kGate: {
        auto c = gate_complexity(l, body_h, body_w);
        r.gate_eff_params += c.eff_params;
        r.gate_bops += c.bops;
        r.highlevel_eff_params += c.eff_params;
        r.layers.push_back(std::move(c));
        break;
      }
      case LayerKind::kRelu:
      case LayerKind::kAdd:
      case LayerKind::kMeanShift:
        break;
    }
  }
  if (h != out_h || w != out_w) {
    throw ValueError("complexity: descriptor dataflow does not reach the requested output size");
  }
  for (const auto& c : r.layers) {
    r.total_eff_params += c.eff_params;
    r.total_raw_params += c.raw_params;
    r.total_bops += c.bops;
  }
  r.gate_param_ratio = r.total_eff_params > 0 ? r.gate_eff_params / r.total_eff_params : 0.0;
  r.gate_bops_ratio = r.total_bops > 0 ? r.gate_bops / r.total_bops : 0.0;
  return r;
}

std::string ComplexityReport::to_table() const {
  std::ostringstream os;
  os << "layer\traw_params\teff_params\tops\tbops\n";
  for (const auto& c : layers) {
    os << c.id << "\t" << c.raw_params << "\t" << c.eff_params << "\t" << c.ops << "\t"
       << c.bops << "\n";
  }
  os << "total_eff_params\t" << total_eff_params << "\n"
     << "highlevel_eff_params\t" << highlevel_eff_params << "\n"
     << "gate_eff_params\t" << gate_eff_params << "\n"
     << "gate_param_ratio\t" << gate_param_ratio << "\n"
     << "total_bops\t" << total_bops << "\n"
     << "gate_bops\t" << gate_bops << "\n"
     << "gate_bops_ratio\t" << gate_bops_ratio << "\n";
  return os.str();
}

std::string ComplexityReport::to_json() const {
  nlohmann::json j;
  j["total_eff_params"] = total_eff_params;
  j["highlevel_eff_params"] = highlevel_eff_params;
  j["gate_eff_params"] = gate_eff_params;
  j["gate_param_ratio"] = gate_param_ratio;
  j["total_bops"] = total_bops;
  j["gate_bops"] = gate_bops;
  j["gate_bops_ratio"] = gate_bops_ratio;
  j["total_raw_params"] = total_raw_params;
  j["layers"] = nlohmann::json::array();
  for (const auto& c : layers) {
    j["layers"].push_back({{"id", c.id},
                           {"is_gate", c.is_gate},
                           {"raw_params", c.raw_params},
                           {"eff_params", c.eff_params},
                           {"ops", c.ops},
                           {"bops", c.bops}});
  }
  return j.dump(2);
}

}  // namespace srqat
