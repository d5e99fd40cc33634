#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "srqat/calibration.hpp"
#include "srqat/gate.hpp"
#include "srqat/quant.hpp"
#include "srqat/tensor.hpp"

namespace srqat {

enum class LayerKind { kConv, kRelu, kPixelShuffle, kAdd, kMeanShift, kGate };
enum class ModuleTag { kLowLevel, kHighLevel, kReconstruction };

struct LayerDesc {
  LayerKind kind = LayerKind::kConv;
  std::string id;
  ModuleTag tag = ModuleTag::kLowLevel;
  int64_t in_ch = 0;
  int64_t out_ch = 0;
  int kernel = 0;
  int stride = 1;
  int upscale = 1;      // pixel-shuffle factor
  bool has_bias = true;
  bool has_bn = false;  // adds 2*out_ch affine params (descriptor-only presets)
  int bits_w = 32;
  int bits_a = 32;
};

/// Flat dataflow description of an SR network; drives the complexity
/// calculator and pins the quantization policy.
struct ModelDescriptor {
  std::string preset;  // edsr | rdn | srresnet
  std::string size;    // toy | paper
  int scale = 4;
  int64_t channels = 64;
  int n_blocks = 16;
  std::vector<LayerDesc> layers;

  int64_t param_count() const;
  /// Number of quantizable activation sites (high-level convs).
  int quant_sites() const;
};

/// Builds a descriptor for a known preset. Only "edsr" has a runtime network;
/// "rdn" and "srresnet" are descriptor-only (complexity analysis).
ModelDescriptor build_model(const std::string& preset, int scale, const std::string& size);

/// Marks the high-level convolutions with the given bit-widths; low-level and
/// reconstruction layers always stay at 32 bits.
void apply_quantization(ModelDescriptor& desc, int bits_w, int bits_a);

/// Appends gate entries (one per gated activation site) tapping `tap_ch`
/// channels; descriptor-only, used by the complexity calculator.
void attach_gate_descs(ModelDescriptor& desc, int count, int64_t tap_ch, int gate_bits = 2);

struct ConvParams {
  Tensor w, b;
};

/// One quantized convolution site: activation quantizer in front of the conv,
/// weight quantizer on its kernel, optional per-sample gate.
struct QuantConvSite {
  ConvParams conv;
  WeightQuantizer wq;
  ActQuantizer aq;
  SymmetricQuantizer sq;  // used instead of aq in symmetric mode
  int gate_index = -1;    // into SRNetwork::gates
};

struct ResBlock {
  QuantConvSite c1, c2;
};

struct ForwardHooks {
  Tensor* distill_feature = nullptr;             // body output after the last block
  std::vector<LayerStats>* stats = nullptr;  // one per activation site, site order
  int64_t pool_stride = 7;
  std::vector<std::pair<Tensor, Tensor>>* betas = nullptr;  // per gate, (beta_l, beta_u)
  bool apply_gates = true;  // false during warmup: betas computed, bounds unscaled
  bool smooth_quant = false;  // clip-only quantizers (finite-difference checks)
};

/// Runtime EDSR-style network (head conv, residual body, global skip,
/// sub-pixel upsampler, tail conv) with per-site quantizers.
struct SRNetwork {
  ModelDescriptor desc;
  std::vector<double> rgb_mean;  // subtracted at input, added back at output
  ConvParams head;
  std::vector<ResBlock> blocks;
  ConvParams body_end;
  std::vector<ConvParams> upsample;  // one conv per x2 stage, each followed by shuffle
  ConvParams tail;
  std::vector<GateController> gates;
  int bits_w = 32;
  int bits_a = 32;
  bool quant_ready = false;
  bool use_symmetric = false;  // single-bound baseline instead of dual bounds

  SRNetwork() = default;
  SRNetwork(const ModelDescriptor& d, std::mt19937_64& rng,
            std::vector<double> mean = {0.0, 0.0, 0.0});

  int site_count() const { return static_cast<int>(blocks.size()) * 2; }
  QuantConvSite& site(int s);
  /// Block whose input feature map feeds site `s` (and its gate).
  int site_block(int s) const { return s / 2; }

  /// Installs calibrated activation quantizers (one BoundInit per site, site
  /// order) and calibrates the weight quantizers.
  void setup_quantizers(int bw, int ba, const std::vector<BoundInit>& bounds);
  /// Single trainable clipping bound per site (symmetric baseline).
  void setup_symmetric_quantizers(int bw, int ba, const std::vector<double>& alphas);
  /// Creates one gate per listed site, tapping the enclosing block's input.
  void attach_gates(const std::vector<int>& sites, std::mt19937_64& rng);
  std::vector<int> gated_sites() const;

  Tensor forward(const Tensor& x, bool quantized, bool training,
                 const ForwardHooks& hooks = {});

  std::vector<Tensor> parameters();        // weights + quantizer bounds
  std::vector<Tensor> gate_parameters();   // gate convs + bn affine
  /// Conv weights and biases in a fixed serialization order.
  std::vector<Tensor> weight_tensors();
  /// Copies conv weights and biases from a same-shape network.
  void copy_weights_from(SRNetwork& other);
  void clamp_quantizer_params(double eps = 1e-4);
};

}  // namespace srqat
