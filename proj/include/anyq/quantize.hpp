#pragma once

// Front door tying the pipeline together: round-to-nearest quantization for
// the fixed formats, dispatch to the learner for the learned ones, and format
// name parsing for the CLI and eval report.

#include "anyq/calibration.hpp"
#include "anyq/codebooks.hpp"
#include "anyq/learner.hpp"
#include "anyq/pack.hpp"

#include <string>

namespace anyq {

// Scale + round onto the fixed table of cfg.codebook (IntGrid/Fp4/Nf4).
QuantizedTensor quantize_fixed(const Eigen::Ref<const Matf>& w, const QuantConfig& cfg);

// Dispatches on cfg.codebook; stats are resolved per `module_name` for the
// learned path and must match the matrix width.
QuantizedTensor quantize(const Eigen::Ref<const Matf>& w, const QuantConfig& cfg,
                         const ActivationStats* stats = nullptr,
                         const std::string& module_name = "", int threads = 1);

// "int4" -> IntGrid/4, "fp4", "nf4", "any4"/"any3"/"any2"... Throws
// ConfigError on unknown names.
void apply_format(QuantConfig& cfg, const std::string& format);
std::string format_name(const QuantConfig& cfg);

Granularity parse_granularity(const std::string& name);
std::string granularity_name(Granularity g);
Weighting parse_weighting(const std::string& name);
std::string weighting_name(Weighting w);
LutInit parse_init(const std::string& name);
std::string init_name(LutInit init);
Store16 parse_store(const std::string& name);
std::string store_name(Store16 s);

}  // namespace anyq
