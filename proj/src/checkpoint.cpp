#include "srqat/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "srqat/image.hpp"

namespace srqat {

namespace {

constexpr char kMagic[8] = {'S', 'R', 'Q', 'A', 'T', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(b), 8);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IOError("truncated checkpoint: " + path);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw IOError("truncated checkpoint: " + path);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_section(std::ostream& out, const std::string& name, const std::string& payload) {
  write_u32(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(out, payload.size());
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

void append_f32(std::string& blob, const Tensor& t) {
  for (double v : t.values()) {
    const float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

struct BlobReader {
  const std::string& blob;
  size_t pos = 0;
  const std::string& path;

  void read_into(Tensor& t) {
    for (double& v : t.values()) {
      if (pos + 4 > blob.size()) throw IOError("weight blob too short: " + path);
      uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) {
        bits |= static_cast<uint32_t>(static_cast<unsigned char>(blob[pos + i])) << (8 * i);
      }
      pos += 4;
      float f;
      std::memcpy(&f, &bits, 4);
      v = static_cast<double>(f);
    }
  }
};

nlohmann::json tracker_json(const RangeTracker& r) {
  return {{"mn", r.mn}, {"mx", r.mx}, {"momentum", r.momentum}, {"initialized", r.initialized}};
}

void tracker_from_json(const nlohmann::json& j, RangeTracker& r) {
  r.mn = j.at("mn");
  r.mx = j.at("mx");
  r.momentum = j.at("momentum");
  r.initialized = j.at("initialized");
}

}  // namespace

void save_checkpoint(const std::string& path, SRNetwork& net) {
  nlohmann::json meta;
  meta["preset"] = net.desc.preset;
  meta["size"] = net.desc.size;
  meta["scale"] = net.desc.scale;
  meta["bits_w"] = net.bits_w;
  meta["bits_a"] = net.bits_a;
  meta["quant_ready"] = net.quant_ready;
  meta["use_symmetric"] = net.use_symmetric;
  meta["rgb_mean"] = net.rgb_mean;

  meta["sites"] = nlohmann::json::array();
  for (int s = 0; s < net.site_count(); ++s) {
    auto& st = net.site(s);
    nlohmann::json js;
    js["gate"] = st.gate_index;
    if (net.use_symmetric && st.sq.alpha.defined()) {
      js["alpha"] = st.sq.alpha.values()[0];
      js["w_l"] = st.wq.w_l;
      js["w_u"] = st.wq.w_u;
      js["w_degenerate"] = st.wq.degenerate;
    } else if (st.aq.calibrated) {
      js["alpha_l"] = st.aq.alpha_l.values()[0];
      js["alpha_u"] = st.aq.alpha_u.values()[0];
      js["w_l"] = st.wq.w_l;
      js["w_u"] = st.wq.w_u;
      js["w_degenerate"] = st.wq.degenerate;
    }
    meta["sites"].push_back(js);
  }

  meta["gates"] = nlohmann::json::array();
  std::string gate_blob;
  for (auto& g : net.gates) {
    nlohmann::json jg;
    jg["in_ch"] = g.in_channels();
    jg["quantized"] = g.quantized;
    jg["gate_bits"] = g.gate_bits;
    jg["in_range"] = tracker_json(g.in_range);
    jg["act_range"] = tracker_json(g.act_range);
    jg["bn"] = {{"momentum", g.bn_stats.momentum},
                {"eps", g.bn_stats.eps},
                {"initialized", g.bn_stats.initialized},
                {"running_mean", g.bn_stats.running_mean},
                {"running_var", g.bn_stats.running_var}};
    meta["gates"].push_back(jg);
    for (auto& t : g.parameters()) append_f32(gate_blob, t);
  }

  std::string weight_blob;
  for (auto& t : net.weight_tensors()) append_f32(weight_blob, t);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  write_section(out, "meta", meta.dump());
  write_section(out, "weights", weight_blob);
  write_section(out, "gates", gate_blob);
  if (!out) throw IOError("failed writing checkpoint: " + path);
}

SRNetwork load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw IOError("not a checkpoint file: " + path);
  }
  const uint32_t version = read_u32(in, path);
  if (version != kVersion) {
    throw IOError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  }
  std::map<std::string, std::string> sections;
  while (in.peek() != EOF) {
    const uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint64_t payload_len = read_u64(in, path);
    std::string payload(payload_len, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(payload_len));
    if (!in) throw IOError("truncated checkpoint section '" + name + "': " + path);
    sections[name] = std::move(payload);
  }
  if (!sections.count("meta") || !sections.count("weights")) {
    throw IOError("checkpoint missing required sections: " + path);
  }

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(sections["meta"]);
  } catch (const nlohmann::json::exception& e) {
    throw IOError("corrupt checkpoint metadata: " + path + " (" + e.what() + ")");
  }

  auto desc = build_model(meta.at("preset"), meta.at("scale"), meta.at("size"));
  std::mt19937_64 rng(0);
  SRNetwork net(desc, rng, meta.at("rgb_mean").get<std::vector<double>>());

  BlobReader wr{sections["weights"], 0, path};
  for (auto& t : net.weight_tensors()) wr.read_into(t);

  const auto& jsites = meta.at("sites");
  if (static_cast<int>(jsites.size()) != net.site_count()) {
    throw IOError("checkpoint site count mismatch: " + path);
  }
  const bool symmetric = meta.value("use_symmetric", false);
  if (meta.at("quant_ready").get<bool>()) {
    if (symmetric) {
      std::vector<double> alphas;
      for (const auto& js : jsites) alphas.push_back(js.at("alpha"));
      net.setup_symmetric_quantizers(meta.at("bits_w"), meta.at("bits_a"), alphas);
    } else {
      std::vector<BoundInit> bounds;
      for (const auto& js : jsites) {
        bounds.push_back({js.at("alpha_l"), js.at("alpha_u"), false});
      }
      net.setup_quantizers(meta.at("bits_w"), meta.at("bits_a"), bounds);
    }
    for (int s = 0; s < net.site_count(); ++s) {
      const auto& js = jsites[static_cast<size_t>(s)];
      net.site(s).wq.w_l = js.at("w_l");
      net.site(s).wq.w_u = js.at("w_u");
      net.site(s).wq.degenerate = js.at("w_degenerate");
    }
  }

  const auto& jgates = meta.at("gates");
  if (!jgates.empty()) {
    std::vector<int> gated;
    for (int s = 0; s < net.site_count(); ++s) {
      if (jsites[static_cast<size_t>(s)].at("gate").get<int>() >= 0) gated.push_back(s);
    }
    net.attach_gates(gated, rng);
    BlobReader gr{sections["gates"], 0, path};
    for (size_t gi = 0; gi < net.gates.size(); ++gi) {
      auto& g = net.gates[gi];
      const auto& jg = jgates[gi];
      g.quantized = jg.at("quantized");
      g.gate_bits = jg.at("gate_bits");
      tracker_from_json(jg.at("in_range"), g.in_range);
      tracker_from_json(jg.at("act_range"), g.act_range);
      g.bn_stats.momentum = jg.at("bn").at("momentum");
      g.bn_stats.eps = jg.at("bn").at("eps");
      g.bn_stats.initialized = jg.at("bn").at("initialized");
      g.bn_stats.running_mean = jg.at("bn").at("running_mean").get<std::vector<double>>();
      g.bn_stats.running_var = jg.at("bn").at("running_var").get<std::vector<double>>();
      for (auto& t : g.parameters()) gr.read_into(t);
    }
  }
  return net;
}

}  // namespace srqat
