#include "anyq/quantize.hpp"

namespace anyq {

QuantizedTensor quantize_fixed(const Eigen::Ref<const Matf>& w, const QuantConfig& cfg) {
  if (cfg.codebook == CodebookKind::AnyN)
    throw ConfigError("quantize_fixed handles fixed codebooks only");
  validate(cfg, w.rows(), w.cols());
  require_finite(w, "quantize_fixed");

  Codebook cb = fixed_codebook(cfg);
  ScaleSet scales = compute_scales(w, cfg, cb.qmin(), cb.qmax());
  Matf ws = scale_weights(w, scales);
  CodeMat codes = round_to_codebook(ws, effective_codebook(cb, cfg.symmetric));

  QuantizedTensor qt;
  qt.rows = w.rows();
  qt.cols = w.cols();
  qt.cfg = cfg;
  qt.codes = pack_codes(codes, cfg.bits);
  qt.scales = std::move(scales);
  return qt;
}

QuantizedTensor quantize(const Eigen::Ref<const Matf>& w, const QuantConfig& cfg,
                         const ActivationStats* stats, const std::string& module_name,
                         int threads) {
  if (cfg.codebook != CodebookKind::AnyN) return quantize_fixed(w, cfg);
  const Vecf* exj = nullptr;
  if (stats) exj = &stats->for_module(module_name, w.cols());
  return quantize_any(w, cfg, exj, threads);
}

void apply_format(QuantConfig& cfg, const std::string& format) {
  auto grid = [&](int bits) {
    cfg.codebook = CodebookKind::IntGrid;
    cfg.bits = bits;
  };
  auto any = [&](int bits) {
    cfg.codebook = CodebookKind::AnyN;
    cfg.bits = bits;
  };
  if (format == "int2") grid(2);
  else if (format == "int3") grid(3);
  else if (format == "int4") grid(4);
  else if (format == "int8") grid(8);
  else if (format == "fp4") { cfg.codebook = CodebookKind::Fp4; cfg.bits = 4; }
  else if (format == "nf4") { cfg.codebook = CodebookKind::Nf4; cfg.bits = 4; }
  else if (format == "any2") any(2);
  else if (format == "any3") any(3);
  else if (format == "any4") any(4);
  else if (format == "any8") any(8);
  else throw ConfigError("unknown format '" + format + "'");
}

std::string format_name(const QuantConfig& cfg) {
  switch (cfg.codebook) {
    case CodebookKind::IntGrid: return "int" + std::to_string(cfg.bits);
    case CodebookKind::Fp4: return "fp4";
    case CodebookKind::Nf4: return "nf4";
    case CodebookKind::AnyN: return "any" + std::to_string(cfg.bits);
  }
  return "?";
}

Granularity parse_granularity(const std::string& name) {
  if (name == "tensorwise") return Granularity::Tensorwise;
  if (name == "rowwise") return Granularity::Rowwise;
  if (name == "columnwise") return Granularity::Columnwise;
  if (name == "groupwise") return Granularity::Groupwise;
  if (name == "blockwise") return Granularity::Blockwise;
  throw ConfigError("unknown granularity '" + name + "'");
}

std::string granularity_name(Granularity g) {
  switch (g) {
    case Granularity::Tensorwise: return "tensorwise";
    case Granularity::Rowwise: return "rowwise";
    case Granularity::Columnwise: return "columnwise";
    case Granularity::Groupwise: return "groupwise";
    case Granularity::Blockwise: return "blockwise";
  }
  return "?";
}

Weighting parse_weighting(const std::string& name) {
  if (name == "weights") return Weighting::WeightsOnly;
  if (name == "weights-activations") return Weighting::WeightsTimesActivations;
  if (name == "full") return Weighting::WeightsTimesActivationsTimesScales;
  throw ConfigError("unknown weighting '" + name + "'");
}

std::string weighting_name(Weighting w) {
  switch (w) {
    case Weighting::WeightsOnly: return "weights";
    case Weighting::WeightsTimesActivations: return "weights-activations";
    case Weighting::WeightsTimesActivationsTimesScales: return "full";
  }
  return "?";
}

LutInit parse_init(const std::string& name) {
  if (name == "kmeans++") return LutInit::KMeansPlusPlus;
  if (name == "random") return LutInit::Random;
  if (name == "int-grid") return LutInit::IntGridSeed;
  if (name == "nf4") return LutInit::Nf4Seed;
  throw ConfigError("unknown init '" + name + "'");
}

std::string init_name(LutInit init) {
  switch (init) {
    case LutInit::KMeansPlusPlus: return "kmeans++";
    case LutInit::Random: return "random";
    case LutInit::IntGridSeed: return "int-grid";
    case LutInit::Nf4Seed: return "nf4";
  }
  return "?";
}

Store16 parse_store(const std::string& name) {
  if (name == "fp16") return Store16::Fp16;
  if (name == "bf16") return Store16::Bf16;
  if (name == "fp32") return Store16::Fp32;
  throw ConfigError("unknown storage precision '" + name + "'");
}

std::string store_name(Store16 s) {
  switch (s) {
    case Store16::Fp16: return "fp16";
    case Store16::Bf16: return "bf16";
    case Store16::Fp32: return "fp32";
  }
  return "?";
}

}  // namespace anyq
