#include "srqat/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "srqat/image.hpp"

namespace srqat {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValueError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out;
  is >> out;
  const bool bad_number = is.fail();
  std::string rest;
  is.clear();
  is >> rest;
  if (bad_number || !rest.empty()) {
    throw ValueError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"model.preset", [&](const std::string& v, const std::string&) { c.preset = v; }},
      {"model.size", [&](const std::string& v, const std::string&) { c.size = v; }},
      {"model.scale", [&](const std::string& v, const std::string& k) { c.scale = parse_num<int>(v, k); }},
      {"model.bits_w", [&](const std::string& v, const std::string& k) { c.bits_w = parse_num<int>(v, k); }},
      {"model.bits_a", [&](const std::string& v, const std::string& k) { c.bits_a = parse_num<int>(v, k); }},
      {"quant.gate_ratio_p", [&](const std::string& v, const std::string& k) { c.gate_ratio_p = parse_num<double>(v, k); }},
      {"quant.percentile_m", [&](const std::string& v, const std::string& k) { c.percentile_m = parse_num<double>(v, k); }},
      {"quant.warmup_epochs_k", [&](const std::string& v, const std::string& k) { c.warmup_epochs_k = parse_num<int>(v, k); }},
      {"quant.calib_batches", [&](const std::string& v, const std::string& k) { c.calib_batches = parse_num<int>(v, k); }},
      {"quant.quantize_gate", [&](const std::string& v, const std::string& k) { c.quantize_gate = parse_bool(v, k); }},
      {"train.epochs", [&](const std::string& v, const std::string& k) { c.epochs = parse_num<int>(v, k); }},
      {"train.batch", [&](const std::string& v, const std::string& k) { c.batch = parse_num<int>(v, k); }},
      {"train.patch", [&](const std::string& v, const std::string& k) { c.patch = parse_num<int>(v, k); }},
      {"train.lr", [&](const std::string& v, const std::string& k) { c.lr = parse_num<double>(v, k); }},
      {"train.lr_halve_every", [&](const std::string& v, const std::string& k) { c.lr_halve_every = parse_num<int>(v, k); }},
      {"train.gate_lr", [&](const std::string& v, const std::string& k) { c.gate_lr = parse_num<double>(v, k); }},
      {"train.lambda", [&](const std::string& v, const std::string& k) { c.lambda = parse_num<double>(v, k); }},
      {"train.seed", [&](const std::string& v, const std::string& k) { c.seed = parse_num<uint64_t>(v, k); }},
      {"train.augment", [&](const std::string& v, const std::string& k) { c.augment = parse_bool(v, k); }},
      {"data.dir", [&](const std::string& v, const std::string&) { c.data_dir = v; }},
      {"data.val_count", [&](const std::string& v, const std::string& k) { c.val_count = parse_num<int>(v, k); }},
      {"eval.studio_swing", [&](const std::string& v, const std::string& k) { c.studio_swing = parse_bool(v, k); }},
  };

  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ValueError("config: malformed section header at line " + std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValueError("config: expected key = value at line " + std::to_string(lineno));
    }
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw ValueError("config: unknown key '" + key + "'");
    it->second(value, key);
    seen.insert(key);
  }
  const auto [p, m] = quant_preset_defaults(c.preset);
  if (!seen.count("quant.gate_ratio_p")) c.gate_ratio_p = p;
  if (!seen.count("quant.percentile_m")) c.percentile_m = m;
  return c;
}

std::pair<double, double> quant_preset_defaults(const std::string& preset) {
  if (preset == "rdn") return {50.0, 95.0};
  if (preset == "srresnet") return {10.0, 99.0};
  return {30.0, 99.0};  // edsr and fallback
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void RunConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ValueError("config: key '" + key + "' " + why);
  };
  if (preset != "edsr" && preset != "rdn" && preset != "srresnet") {
    fail("model.preset", "must be edsr, rdn, or srresnet");
  }
  if (size != "toy" && size != "paper") fail("model.size", "must be toy or paper");
  if (scale != 2 && scale != 4) fail("model.scale", "must be 2 or 4");
  if (bits_w < 2 || bits_w > 32) fail("model.bits_w", "must be in [2,32]");
  if (bits_a < 2 || bits_a > 32) fail("model.bits_a", "must be in [2,32]");
  if (gate_ratio_p < 0.0 || gate_ratio_p > 100.0) fail("quant.gate_ratio_p", "must be in [0,100]");
  if (!(percentile_m > 50.0 && percentile_m <= 100.0)) {
    fail("quant.percentile_m", "must be in (50,100]");
  }
  if (warmup_epochs_k < 0) fail("quant.warmup_epochs_k", "must be >= 0");
  if (warmup_epochs_k > epochs) fail("quant.warmup_epochs_k", "must not exceed train.epochs");
  if (calib_batches < 1) fail("quant.calib_batches", "must be >= 1");
  if (epochs < 1) fail("train.epochs", "must be >= 1");
  if (batch < 1) fail("train.batch", "must be >= 1");
  if (patch < 1) fail("train.patch", "must be >= 1");
  if (!(lr > 0.0)) fail("train.lr", "must be > 0");
  if (lr_halve_every < 1) fail("train.lr_halve_every", "must be >= 1");
  if (!(gate_lr > 0.0)) fail("train.gate_lr", "must be > 0");
  if (lambda < 0.0) fail("train.lambda", "must be >= 0");
  if (val_count < 0) fail("data.val_count", "must be >= 0");
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "[model]\n"
     << "preset = " << preset << "\n"
     << "size = " << size << "\n"
     << "scale = " << scale << "\n"
     << "bits_w = " << bits_w << "\n"
     << "bits_a = " << bits_a << "\n\n"
     << "[quant]\n"
     << "gate_ratio_p = " << gate_ratio_p << "\n"
     << "percentile_m = " << percentile_m << "\n"
     << "warmup_epochs_k = " << warmup_epochs_k << "\n"
     << "calib_batches = " << calib_batches << "\n"
     << "quantize_gate = " << (quantize_gate ? "true" : "false") << "\n\n"
     << "[train]\n"
     << "epochs = " << epochs << "\n"
     << "batch = " << batch << "\n"
     << "patch = " << patch << "\n"
     << "lr = " << lr << "\n"
     << "lr_halve_every = " << lr_halve_every << "\n"
     << "gate_lr = " << gate_lr << "\n"
     << "lambda = " << lambda << "\n"
     << "seed = " << seed << "\n"
     << "augment = " << (augment ? "true" : "false") << "\n\n"
     << "[data]\n"
     << "dir = " << data_dir << "\n"
     << "val_count = " << val_count << "\n\n"
     << "[eval]\n"
     << "studio_swing = " << (studio_swing ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace srqat
