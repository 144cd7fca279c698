#pragma once

// Quantization quality metrics: weight reconstruction error and the
// output-activation error E||y_hat - y||^2 the learned format targets, plus
// multi-format comparison reports.

#include "anyq/calibration.hpp"
#include "anyq/core.hpp"
#include "anyq/pack.hpp"

#include <string>
#include <vector>

namespace anyq {

struct EvalRow {
  std::string module;
  std::string format;
  double weight_mse = 0;
  double weight_rel_frobenius = 0;
  double output_mse = 0;
  double bits_per_entry = 0;
};

struct EvalReport {
  static constexpr const char* kSchemaVersion = "v1";
  std::vector<EvalRow> rows;

  std::string to_csv() const;
  std::string to_json() const;
};

// mse = mean((w - dequant)^2); rel = ||w - dequant||_F / ||w||_F. For a
// zero-norm w the second value falls back to the absolute Frobenius norm.
std::pair<double, double> weight_error(const Eigen::Ref<const Matf>& w,
                                       const QuantizedTensor& qt);

// Mean over all (sample, output) entries of (y_hat - y)^2, with y the exact
// product and y_hat the product against dequantized weights.
double output_error(const Eigen::Ref<const Matf>& w, const QuantizedTensor& qt,
                    const Eigen::Ref<const Matf>& x);

struct CompareOptions {
  Index eval_rows = 64;      // evaluation batch size
  uint64_t eval_seed = 1;    // activation draw, distinct from the quantizer seed
  int threads = 1;
};

// Evaluation activations: channel j drawn from N(0, sigma_j) with sigma_j
// chosen so E|x_j| matches the calibration stats (standard normal without
// stats).
Matf eval_activations(Index rows, Index cols, const Vecf* exj, uint64_t seed);

// One report row per format name, quantizing w under `base` with the format
// applied; deterministic given seeds.
EvalReport compare_formats(const Eigen::Ref<const Matf>& w,
                           const std::vector<std::string>& formats, const QuantConfig& base,
                           const ActivationStats* stats = nullptr,
                           const std::string& module_name = "w",
                           const CompareOptions& opts = {});

}  // namespace anyq
