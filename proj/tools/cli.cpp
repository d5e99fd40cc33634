#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "srqat/checkpoint.hpp"
#include "srqat/complexity.hpp"
#include "srqat/config.hpp"
#include "srqat/metrics.hpp"
#include "srqat/training.hpp"

namespace fs = std::filesystem;
using namespace srqat;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::string data_dir;
  std::string out_dir = "run";
  int epochs = -1;
  int64_t seed = -1;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool need_config) {
  auto* opt = cmd->add_option("--config", f.config_path, "run configuration file");
  if (need_config) opt->required();
  cmd->add_option("--data", f.data_dir, "dataset directory (overrides config)");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--epochs", f.epochs, "epoch count (overrides config)");
  cmd->add_option("--seed", f.seed, "RNG seed (overrides config)");
}

RunConfig resolve_config(const ConfigFlags& f) {
  RunConfig cfg = f.config_path.empty() ? RunConfig{} : load_config(f.config_path);
  if (!f.data_dir.empty()) cfg.data_dir = f.data_dir;
  if (f.epochs > 0) {
    cfg.epochs = f.epochs;
    cfg.warmup_epochs_k = std::min(cfg.warmup_epochs_k, cfg.epochs);
  }
  if (f.seed >= 0) cfg.seed = static_cast<uint64_t>(f.seed);
  cfg.validate();
  if (cfg.data_dir.empty()) {
    throw ValueError("config: key 'data.dir' must point at a dataset directory");
  }
  return cfg;
}

std::vector<Tensor> calib_batches_from(const Dataset& data, const RunConfig& cfg,
                                       std::mt19937_64& rng) {
  std::vector<Tensor> batches;
  for (int i = 0; i < cfg.calib_batches; ++i) {
    batches.push_back(draw_batch(data, cfg.patch, cfg.batch, false, rng).first);
  }
  return batches;
}

int cmd_analyze(const std::string& preset, int scale, int bits, const std::string& out_size,
                const std::string& size, bool as_json) {
  int64_t out_w = 0, out_h = 0;
  char sep = 0;
  std::istringstream is(out_size);
  if (!(is >> out_w >> sep >> out_h) || sep != 'x' || out_w <= 0 || out_h <= 0) {
    throw ValueError("--out-size expects WIDTHxHEIGHT, got '" + out_size + "'");
  }
  auto desc = build_model(preset, scale, size);
  if (bits < 32) {
    apply_quantization(desc, bits, bits);
    const double p = quant_preset_defaults(preset).first;
    const int gates = static_cast<int>(std::ceil(p / 100.0 * desc.quant_sites()));
    attach_gate_descs(desc, gates, desc.channels);
  }
  auto report = complexity(desc, out_h, out_w);
  std::cout << (as_json ? report.to_json() : report.to_table()) << "\n";
  return 0;
}

int cmd_calibrate(const ConfigFlags& flags) {
  RunConfig cfg = resolve_config(flags);
  std::mt19937_64 rng(cfg.seed);
  Dataset data = load_dataset(cfg.data_dir, cfg.scale, cfg.val_count);
  auto desc = build_model(cfg.preset, cfg.scale, cfg.size);
  SRNetwork net(desc, rng, data.rgb_mean);

  std::vector<LayerStats> stats;
  {
    autograd::NoGradGuard ng;
    ForwardHooks hooks;
    hooks.stats = &stats;
    for (const auto& b : calib_batches_from(data, cfg, rng)) net.forward(b, false, false, hooks);
  }
  std::cout << format_stats_report(stats);

  std::mt19937_64 calib_rng(cfg.seed);
  calibrate_network(net, calib_batches_from(data, cfg, calib_rng), cfg, calib_rng);
  fs::create_directories(flags.out_dir);
  const std::string ckpt = (fs::path(flags.out_dir) / "calibrated.ckpt").string();
  save_checkpoint(ckpt, net);
  std::cout << "gated sites:";
  for (int s : net.gated_sites()) std::cout << ' ' << s;
  std::cout << "\ncheckpoint: " << ckpt << "\n";
  return 0;
}

int cmd_train(const ConfigFlags& flags) {
  RunConfig cfg = resolve_config(flags);
  std::mt19937_64 rng(cfg.seed);
  Dataset data = load_dataset(cfg.data_dir, cfg.scale, cfg.val_count);
  fs::create_directories(flags.out_dir);

  auto desc = build_model(cfg.preset, cfg.scale, cfg.size);
  SRNetwork teacher(desc, rng, data.rgb_mean);
  TrainResult fp = train_fp(teacher, data, cfg, cfg.epochs, rng);
  if (fp.aborted) {
    std::cerr << "error: teacher pretraining aborted: " << fp.abort_reason << "\n";
    return 1;
  }
  std::cout << "teacher val psnr: " << fp.final_val_psnr << " dB\n";

  SRNetwork student(desc, rng, data.rgb_mean);
  student.copy_weights_from(teacher);
  calibrate_network(student, calib_batches_from(data, cfg, rng), cfg, rng);

  const std::string csv = (fs::path(flags.out_dir) / "train_log.csv").string();
  TrainResult res = train_qat(student, teacher, data, cfg, rng, csv);
  if (res.aborted) {
    std::cerr << "error: training aborted: " << res.abort_reason << "\n";
    return 1;
  }
  const std::string ckpt = (fs::path(flags.out_dir) / "model.ckpt").string();
  save_checkpoint(ckpt, student);
  std::ofstream cfg_out(fs::path(flags.out_dir) / "resolved.cfg");
  cfg_out << cfg.serialize();
  std::cout << "final val psnr: " << res.final_val_psnr << " dB\n"
            << "checkpoint: " << ckpt << "\nlog: " << csv << "\n";
  return 0;
}

std::vector<std::string> ppm_files(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".ppm") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IOError("no .ppm images under: " + dir);
  return files;
}

int cmd_eval(const ConfigFlags& flags, const std::string& sr_dir, const std::string& hr_dir,
             const std::string& ckpt_path, int scale, bool studio_swing) {
  if (!sr_dir.empty()) {
    auto sr_files = ppm_files(sr_dir);
    auto hr_files = ppm_files(hr_dir);
    if (sr_files.size() != hr_files.size()) {
      throw ValueError("--sr and --hr directories hold different image counts");
    }
    double psnr_sum = 0, ssim_sum = 0;
    for (size_t i = 0; i < sr_files.size(); ++i) {
      Image sr = load_ppm(sr_files[i]);
      Image hr = load_ppm(hr_files[i]);
      const double p = psnr_y(sr, hr, scale, studio_swing);
      const double s = ssim_y(sr, hr, scale, studio_swing);
      psnr_sum += p;
      ssim_sum += s;
      std::cout << fs::path(sr_files[i]).filename().string() << " psnr=" << p << " ssim=" << s
                << "\n";
    }
    std::cout << "mean psnr=" << psnr_sum / sr_files.size()
              << " ssim=" << ssim_sum / sr_files.size() << "\n";
    return 0;
  }
  if (ckpt_path.empty()) {
    throw ValueError("eval needs either --sr/--hr directories or --checkpoint with --data");
  }
  RunConfig cfg = resolve_config(flags);
  SRNetwork net = load_checkpoint(ckpt_path);
  Dataset data = load_dataset(cfg.data_dir, net.desc.scale, cfg.val_count);
  const double p = validate_psnr(net, data.val_pairs, net.quant_ready, studio_swing);
  std::cout << "mean val psnr=" << p << " over " << data.val_pairs.size() << " images\n";
  return 0;
}

int cmd_quantfit(const std::string& dump_path, int bits) {
  std::ifstream in(dump_path);
  if (!in) throw IOError("cannot open activation dump: " + dump_path);
  std::vector<double> sample;
  double v;
  while (in >> v) sample.push_back(v);
  if (sample.empty()) throw IOError("activation dump holds no numbers: " + dump_path);

  const double mx = *std::max_element(sample.begin(), sample.end());
  const double mn = *std::min_element(sample.begin(), sample.end());
  const double amax = std::max(std::fabs(mx), std::fabs(mn));
  SymmetricQuantizer sym(amax > 0 ? amax : 1e-3, bits);
  const double lo = mn, hi = mx > mn ? mx : mn + 1e-3;
  ActQuantizer dual(lo, hi, bits);

  std::cout << "samples: " << sample.size() << " range: [" << mn << ", " << mx << "]\n"
            << "symmetric (alpha=max|x|) wasted levels: " << wasted_levels(sample, sym) << "\n"
            << "dual-bound (min,max) wasted levels: " << wasted_levels(sample, dual) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"super-resolution quantization-aware training toolkit"};
  app.require_subcommand(1);

  ConfigFlags calib_f, train_f, eval_f;

  auto* calibrate = app.add_subcommand("calibrate", "collect fp statistics, init quantizers");
  add_config_flags(calibrate, calib_f, true);

  auto* train = app.add_subcommand("train", "full pipeline: fp teacher, calibration, QAT");
  add_config_flags(train, train_f, true);

  auto* eval = app.add_subcommand("eval", "PSNR/SSIM over image dirs or a checkpoint");
  std::string sr_dir, hr_dir, ckpt_path;
  int eval_scale = 0;
  bool studio_swing = false;
  add_config_flags(eval, eval_f, false);
  eval->add_option("--sr", sr_dir, "directory of output images");
  eval->add_option("--hr", hr_dir, "directory of reference images");
  eval->add_option("--checkpoint", ckpt_path, "trained checkpoint to evaluate");
  eval->add_option("--crop", eval_scale, "border crop in pixels");
  eval->add_flag("--studio-swing", studio_swing, "use studio-swing luma");

  auto* analyze = app.add_subcommand("analyze", "analytic params/BOPs report");
  std::string preset = "edsr", out_size = "1920x1080", model_size = "paper";
  int scale = 4, bits = 32;
  bool as_json = false;
  analyze->add_option("--preset", preset, "edsr | rdn | srresnet")->required();
  analyze->add_option("--scale", scale, "upscaling factor");
  analyze->add_option("--bits", bits, "bit-width (32 = full precision)");
  analyze->add_option("--out-size", out_size, "output resolution WIDTHxHEIGHT");
  analyze->add_option("--size", model_size, "toy | paper");
  analyze->add_flag("--json", as_json, "emit JSON instead of a table");

  auto* quantfit = app.add_subcommand("quantfit", "wasted-level diagnostic on a value dump");
  std::string dump_path;
  int qbits = 2;
  quantfit->add_option("--input", dump_path, "whitespace-separated activation values")
      ->required();
  quantfit->add_option("--bits", qbits, "bit-width");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*calibrate) return cmd_calibrate(calib_f);
    if (*train) return cmd_train(train_f);
    if (*eval) return cmd_eval(eval_f, sr_dir, hr_dir, ckpt_path, eval_scale, studio_swing);
    if (*analyze) return cmd_analyze(preset, scale, bits, out_size, model_size, as_json);
    if (*quantfit) return cmd_quantfit(dump_path, qbits);
  } catch (const ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
