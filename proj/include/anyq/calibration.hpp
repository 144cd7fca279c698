#pragma once

// Per-channel mean-absolute-activation statistics, collected from the bundled
// toy model or loaded from a stats file exported by an external runtime.

#include "anyq/core.hpp"

#include <map>
#include <string>
#include <vector>

namespace anyq {

struct ActivationStats {
  // module name -> mean |x_j| per input channel (length = that module's K).
  std::map<std::string, Vecf> entries;
  uint64_t token_count = 0;
  std::string source;

  // Stats vector for `name`, checked against the expected channel count.
  const Vecf& for_module(const std::string& name, Index cols) const;
};

enum class Nonlinearity : uint8_t { Identity = 0, Relu = 1, Tanh = 2 };

struct ToyLayer {
  std::string name;
  Matf weight;  // N x K, applied as y = x * W^T
  Nonlinearity act = Nonlinearity::Identity;
};

// A stack of linear layers with elementwise nonlinearities; a desk-scale
// stand-in for the linear modules of a transformer.
struct ToyModel {
  std::vector<ToyLayer> layers;
  Index input_dim = 0;

  void validate() const;
};

// Runs the model over `inputs` (one sample per row) and records, for every
// layer, the mean over samples of |input activation| per channel.
ActivationStats collect_stats(const ToyModel& model, const Eigen::Ref<const Matf>& inputs);

// One-file format: little-endian u32 JSON-header length, JSON header (module
// names, lengths, token_count, source), u64 payload length, then raw
// little-endian fp32 values per module in header order.
void save_stats(const ActivationStats& stats, const std::string& path);
ActivationStats load_stats(const std::string& path);

// The built-in calibration text (fiction/news/code/math/facts segments) for
// embedding in exported tooling. This library does not tokenize it.
std::string default_prompt();

// Toy-model description: {"input_dim":D,"layers":[{"name":..,"rows":N,
// "cols":K,"nonlinearity":"relu","seed":S} ...]}; a layer may carry inline
// "weights" (row-major array) instead of a seed.
ToyModel model_from_json(const std::string& json_text);

}  // namespace anyq
