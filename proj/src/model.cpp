#include "srqat/model.hpp"

#include <cmath>

#include "srqat/ops.hpp"

namespace srqat {

namespace {

LayerDesc conv_desc(std::string id, ModuleTag tag, int64_t in_ch, int64_t out_ch, int kernel,
                    bool bn = false) {
  LayerDesc d;
  d.kind = LayerKind::kConv;
  d.id = std::move(id);
  d.tag = tag;
  d.in_ch = in_ch;
  d.out_ch = out_ch;
  d.kernel = kernel;
  d.has_bn = bn;
  return d;
}

LayerDesc simple_desc(LayerKind kind, std::string id, int upscale = 1) {
  LayerDesc d;
  d.kind = kind;
  d.id = std::move(id);
  d.upscale = upscale;
  return d;
}

void append_upsampler(ModelDescriptor& m, int64_t ch, ModuleTag tag, bool srresnet_relu) {
  const int stages = m.scale == 4 ? 2 : 1;
  for (int s = 0; s < stages; ++s) {
    const std::string base = "upsample." + std::to_string(s);
    m.layers.push_back(conv_desc(base + ".conv", tag, ch, ch * 4, 3));
    m.layers.push_back(simple_desc(LayerKind::kPixelShuffle, base + ".shuffle", 2));
    if (srresnet_relu) m.layers.push_back(simple_desc(LayerKind::kRelu, base + ".relu"));
  }
}

ModelDescriptor build_edsr(int scale, const std::string& size) {
  ModelDescriptor m;
  m.preset = "edsr";
  m.size = size;
  m.scale = scale;
  m.channels = size == "toy" ? 16 : 64;
  m.n_blocks = size == "toy" ? 4 : 16;
  const int64_t ch = m.channels;

  m.layers.push_back(simple_desc(LayerKind::kMeanShift, "mean_sub"));
  m.layers.push_back(conv_desc("head", ModuleTag::kLowLevel, 3, ch, 3));
  for (int b = 0; b < m.n_blocks; ++b) {
    const std::string base = "body." + std::to_string(b);
    m.layers.push_back(conv_desc(base + ".conv1", ModuleTag::kHighLevel, ch, ch, 3));
    m.layers.push_back(simple_desc(LayerKind::kRelu, base + ".relu"));
    m.layers.push_back(conv_desc(base + ".conv2", ModuleTag::kHighLevel, ch, ch, 3));
    m.layers.push_back(simple_desc(LayerKind::kAdd, base + ".add"));
  }
  m.layers.push_back(conv_desc("body_end", ModuleTag::kLowLevel, ch, ch, 3));
  m.layers.push_back(simple_desc(LayerKind::kAdd, "global_skip"));
  append_upsampler(m, ch, ModuleTag::kReconstruction, false);
  m.layers.push_back(conv_desc("tail", ModuleTag::kReconstruction, ch, 3, 3));
  m.layers.push_back(simple_desc(LayerKind::kMeanShift, "mean_add"));
  return m;
}

ModelDescriptor build_rdn(int scale) {
  // D=16 dense blocks, C=8 layers per block, growth G=64, base G0=64.
  ModelDescriptor m;
  m.preset = "rdn";
  m.size = "paper";
  m.scale = scale;
  m.channels = 64;
  m.n_blocks = 16;
  const int64_t g0 = 64, g = 64;
  const int layers_per_block = 8;

  m.layers.push_back(simple_desc(LayerKind::kMeanShift, "mean_sub"));
  m.layers.push_back(conv_desc("sfe1", ModuleTag::kLowLevel, 3, g0, 3));
  m.layers.push_back(conv_desc("sfe2", ModuleTag::kLowLevel, g0, g0, 3));
  for (int b = 0; b < m.n_blocks; ++b) {
    const std::string base = "rdb." + std::to_string(b);
    for (int c = 0; c < layers_per_block; ++c) {
      m.layers.push_back(conv_desc(base + ".conv" + std::to_string(c), ModuleTag::kHighLevel,
                                   g0 + c * g, g, 3));
      m.layers.push_back(simple_desc(LayerKind::kRelu, base + ".relu" + std::to_string(c)));
    }
    m.layers.push_back(
        conv_desc(base + ".lff", ModuleTag::kHighLevel, g0 + layers_per_block * g, g0, 1));
    m.layers.push_back(simple_desc(LayerKind::kAdd, base + ".add"));
  }
  m.layers.push_back(
      conv_desc("gff1", ModuleTag::kLowLevel, static_cast<int64_t>(m.n_blocks) * g0, g0, 1));
  m.layers.push_back(conv_desc("gff2", ModuleTag::kLowLevel, g0, g0, 3));
  m.layers.push_back(simple_desc(LayerKind::kAdd, "global_skip"));
  append_upsampler(m, g0, ModuleTag::kReconstruction, false);
  m.layers.push_back(conv_desc("tail", ModuleTag::kReconstruction, g0, 3, 3));
  m.layers.push_back(simple_desc(LayerKind::kMeanShift, "mean_add"));
  return m;
}

ModelDescriptor build_srresnet(int scale) {
  ModelDescriptor m;
  m.preset = "srresnet";
  m.size = "paper";
  m.scale = scale;
  m.channels = 64;
  m.n_blocks = 16;
  const int64_t ch = 64;

  m.layers.push_back(conv_desc("head", ModuleTag::kLowLevel, 3, ch, 9));
  m.layers.push_back(simple_desc(LayerKind::kRelu, "head.relu"));
  for (int b = 0; b < m.n_blocks; ++b) {
    const std::string base = "body." + std::to_string(b);
    m.layers.push_back(conv_desc(base + ".conv1", ModuleTag::kHighLevel, ch, ch, 3, true));
    m.layers.push_back(simple_desc(LayerKind::kRelu, base + ".relu"));
    m.layers.push_back(conv_desc(base + ".conv2", ModuleTag::kHighLevel, ch, ch, 3, true));
    m.layers.push_back(simple_desc(LayerKind::kAdd, base + ".add"));
  }
  m.layers.push_back(conv_desc("body_end", ModuleTag::kLowLevel, ch, ch, 3, true));
  m.layers.push_back(simple_desc(LayerKind::kAdd, "global_skip"));
  append_upsampler(m, ch, ModuleTag::kReconstruction, true);
  m.layers.push_back(conv_desc("tail", ModuleTag::kReconstruction, ch, 3, 9));
  return m;
}

}  // namespace

int64_t ModelDescriptor::param_count() const {
  int64_t total = 0;
  for (const auto& l : layers) {
    if (l.kind != LayerKind::kConv) continue;
    total += l.in_ch * l.out_ch * l.kernel * l.kernel;
    if (l.has_bias) total += l.out_ch;
    if (l.has_bn) total += 2 * l.out_ch;
  }
  for (const auto& l : layers) {
    if (l.kind != LayerKind::kGate) continue;
    const int64_t hidden = std::max<int64_t>(l.in_ch / 8, 4);
    total += hidden * l.in_ch * 9 + hidden;  // conv1
    total += 2 * hidden;                     // bn affine
    total += 2 * hidden + 2;                 // conv2
  }
  return total;
}

int ModelDescriptor::quant_sites() const {
  int n = 0;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::kConv && l.tag == ModuleTag::kHighLevel) ++n;
  }
  return n;
}

ModelDescriptor build_model(const std::string& preset, int scale, const std::string& size) {
  if (scale != 2 && scale != 4) throw ValueError("build_model: scale must be 2 or 4");
  if (size != "toy" && size != "paper") {
    throw ValueError("build_model: size must be 'toy' or 'paper'");
  }
  if (preset == "edsr") return build_edsr(scale, size);
  if (preset == "rdn") return build_rdn(scale);
  if (preset == "srresnet") return build_srresnet(scale);
  throw ValueError("build_model: unknown preset '" + preset + "'");
}

void apply_quantization(ModelDescriptor& desc, int bits_w, int bits_a) {
  if (bits_w < 2 || bits_a < 2) throw ValueError("apply_quantization: bits must be >= 2");
  for (auto& l : desc.layers) {
    if (l.kind == LayerKind::kConv && l.tag == ModuleTag::kHighLevel) {
      l.bits_w = bits_w;
      l.bits_a = bits_a;
    }
  }
}

void attach_gate_descs(ModelDescriptor& desc, int count, int64_t tap_ch, int gate_bits) {
  for (int i = 0; i < count; ++i) {
    LayerDesc d;
    d.kind = LayerKind::kGate;
    d.id = "gate." + std::to_string(i);
    d.tag = ModuleTag::kHighLevel;
    d.in_ch = tap_ch;
    d.out_ch = 2;
    d.bits_w = gate_bits;
    d.bits_a = gate_bits;
    desc.layers.push_back(d);
  }
}

namespace {

ConvParams make_conv(int64_t in_ch, int64_t out_ch, int kernel, std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
  return {Tensor::randn({out_ch, in_ch, kernel, kernel}, rng, stddev, true),
          Tensor::zeros({out_ch}, true)};
}

}  // namespace

SRNetwork::SRNetwork(const ModelDescriptor& d, std::mt19937_64& rng, std::vector<double> mean)
    : desc(d), rgb_mean(std::move(mean)) {
  if (d.preset != "edsr") {
    throw ValueError("SRNetwork: runtime forward implemented for the 'edsr' preset only");
  }
  const int64_t ch = d.channels;
  head = make_conv(3, ch, 3, rng);
  blocks.resize(d.n_blocks);
  for (auto& b : blocks) {
    b.c1.conv = make_conv(ch, ch, 3, rng);
    b.c2.conv = make_conv(ch, ch, 3, rng);
  }
  body_end = make_conv(ch, ch, 3, rng);
  const int stages = d.scale == 4 ? 2 : 1;
  for (int s = 0; s < stages; ++s) upsample.push_back(make_conv(ch, ch * 4, 3, rng));
  tail = make_conv(ch, 3, 3, rng);
}

QuantConvSite& SRNetwork::site(int s) {
  if (s < 0 || s >= site_count()) throw ValueError("SRNetwork: site index out of range");
  return s % 2 == 0 ? blocks[s / 2].c1 : blocks[s / 2].c2;
}

void SRNetwork::setup_quantizers(int bw, int ba, const std::vector<BoundInit>& bounds) {
  if (static_cast<int>(bounds.size()) != site_count()) {
    throw ValueError("setup_quantizers: need one bound init per activation site");
  }
  bits_w = bw;
  bits_a = ba;
  for (int s = 0; s < site_count(); ++s) {
    auto& st = site(s);
    st.aq = ActQuantizer(bounds[s].alpha_l, bounds[s].alpha_u, ba);
    st.wq = WeightQuantizer(bw);
    st.wq.calibrate(st.conv.w);
  }
  apply_quantization(desc, bw, ba);
  quant_ready = true;
}

void SRNetwork::setup_symmetric_quantizers(int bw, int ba, const std::vector<double>& alphas) {
  if (static_cast<int>(alphas.size()) != site_count()) {
    throw ValueError("setup_symmetric_quantizers: need one alpha per activation site");
  }
  bits_w = bw;
  bits_a = ba;
  use_symmetric = true;
  for (int s = 0; s < site_count(); ++s) {
    auto& st = site(s);
    st.sq = SymmetricQuantizer(alphas[static_cast<size_t>(s)], ba);
    st.wq = WeightQuantizer(bw);
    st.wq.calibrate(st.conv.w);
  }
  apply_quantization(desc, bw, ba);
  quant_ready = true;
}

void SRNetwork::attach_gates(const std::vector<int>& sites, std::mt19937_64& rng) {
  for (int s : sites) {
    site(s).gate_index = static_cast<int>(gates.size());
    gates.emplace_back(desc.channels, rng);
  }
  attach_gate_descs(desc, static_cast<int>(sites.size()), desc.channels);
}

std::vector<int> SRNetwork::gated_sites() const {
  std::vector<int> out;
  for (int s = 0; s < site_count(); ++s) {
    const auto& st = s % 2 == 0 ? blocks[s / 2].c1 : blocks[s / 2].c2;
    if (st.gate_index >= 0) out.push_back(s);
  }
  return out;
}

Tensor SRNetwork::forward(const Tensor& x, bool quantized, bool training,
                          const ForwardHooks& hooks) {
  if (x.shape().size() != 4 || x.dim(1) != 3) {
    throw ShapeError("SRNetwork::forward expects [N,3,H,W], got " + shape_str(x.shape()));
  }
  if (quantized && !quant_ready) {
    throw StateError("SRNetwork: quantized forward before quantizer calibration");
  }
  const int64_t batch = x.dim(0);

  std::vector<double> neg_mean(rgb_mean.size());
  for (size_t i = 0; i < rgb_mean.size(); ++i) neg_mean[i] = -rgb_mean[i];
  Tensor f = add_channel_offset(x, neg_mean);
  f = conv2d(f, head.w, head.b, 1, 1);
  Tensor f0 = f;

  for (size_t bi = 0; bi < blocks.size(); ++bi) {
    auto& blk = blocks[bi];
    Tensor block_in = f;
    Tensor h = block_in;
    for (int j = 0; j < 2; ++j) {
      auto& st = j == 0 ? blk.c1 : blk.c2;
      const int s = static_cast<int>(bi) * 2 + j;
      if (hooks.stats) {
        if (static_cast<int>(hooks.stats->size()) <= s) hooks.stats->resize(site_count());
        auto& ls = (*hooks.stats)[s];
        if (ls.layer_id.empty()) {
          ls.layer_id = "body." + std::to_string(bi) + (j == 0 ? ".conv1" : ".conv2");
        }
        ls.observe(h.values(), batch, hooks.pool_stride);
      }
      Tensor conv_in = h;
      Tensor w = st.conv.w;
      const bool round = !hooks.smooth_quant;
      if (quantized && use_symmetric) {
        conv_in = st.sq.forward(conv_in, round);
        w = st.wq.apply(w, round);
      } else if (quantized) {
        if (st.gate_index >= 0) {
          auto [beta_l, beta_u] = gate_forward(block_in, gates[st.gate_index], training);
          if (hooks.betas) hooks.betas->push_back({beta_l, beta_u});
          if (hooks.apply_gates) {
            conv_in = st.aq.forward_gated(conv_in, beta_l, beta_u, round);
          } else {
            conv_in = st.aq.forward(conv_in, round);
          }
        } else {
          conv_in = st.aq.forward(conv_in, round);
        }
        w = st.wq.apply(w, round);
      }
      h = conv2d(conv_in, w, st.conv.b, 1, 1);
      if (j == 0) h = relu(h);
    }
    f = add(block_in, h);
  }
  if (hooks.distill_feature) *hooks.distill_feature = f;

  f = conv2d(f, body_end.w, body_end.b, 1, 1);
  f = add(f, f0);
  for (const auto& up : upsample) {
    f = pixel_shuffle(conv2d(f, up.w, up.b, 1, 1), 2);
  }
  f = conv2d(f, tail.w, tail.b, 1, 1);
  return add_channel_offset(f, rgb_mean);
}

std::vector<Tensor> SRNetwork::parameters() {
  std::vector<Tensor> ps{head.w, head.b};
  for (auto& b : blocks) {
    for (auto* st : {&b.c1, &b.c2}) {
      ps.push_back(st->conv.w);
      ps.push_back(st->conv.b);
      if (use_symmetric) {
        if (st->sq.alpha.defined()) ps.push_back(st->sq.alpha);
      } else if (st->aq.calibrated) {
        ps.push_back(st->aq.alpha_l);
        ps.push_back(st->aq.alpha_u);
      }
    }
  }
  ps.push_back(body_end.w);
  ps.push_back(body_end.b);
  for (auto& up : upsample) {
    ps.push_back(up.w);
    ps.push_back(up.b);
  }
  ps.push_back(tail.w);
  ps.push_back(tail.b);
  return ps;
}

std::vector<Tensor> SRNetwork::gate_parameters() {
  std::vector<Tensor> ps;
  for (auto& g : gates) {
    auto gp = g.parameters();
    ps.insert(ps.end(), gp.begin(), gp.end());
  }
  return ps;
}

std::vector<Tensor> SRNetwork::weight_tensors() {
  std::vector<Tensor> ts{head.w, head.b};
  for (auto& b : blocks) {
    for (auto* st : {&b.c1, &b.c2}) {
      ts.push_back(st->conv.w);
      ts.push_back(st->conv.b);
    }
  }
  ts.push_back(body_end.w);
  ts.push_back(body_end.b);
  for (auto& up : upsample) {
    ts.push_back(up.w);
    ts.push_back(up.b);
  }
  ts.push_back(tail.w);
  ts.push_back(tail.b);
  return ts;
}

void SRNetwork::copy_weights_from(SRNetwork& other) {
  auto dst = weight_tensors();
  auto src = other.weight_tensors();
  if (dst.size() != src.size()) throw ShapeError("copy_weights_from: architecture mismatch");
  for (size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != src[i].shape()) {
      throw ShapeError("copy_weights_from: tensor shape mismatch at index " + std::to_string(i));
    }
    dst[i].values() = src[i].values();
  }
}

void SRNetwork::clamp_quantizer_params(double eps) {
  for (int s = 0; s < site_count(); ++s) {
    auto& st = site(s);
    if (use_symmetric) {
      if (st.sq.alpha.defined()) st.sq.clamp_params(eps);
    } else if (st.aq.calibrated) {
      st.aq.clamp_params(eps);
    }
  }
}

}  // namespace srqat
