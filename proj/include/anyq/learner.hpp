#pragma once

// Per-row lookup-table learning by weighted alternating minimization. Each
// row of the scaled weight matrix gets its own 2^n reproduction values: the
// E-step assigns every scaled weight to its nearest table value, the M-step
// moves each value to the weighted mean of its cluster, with per-sample
// weights alpha_{i,j} * E|x_j| built from group scales and calibration
// statistics.

#include "anyq/calibration.hpp"
#include "anyq/core.hpp"
#include "anyq/pack.hpp"
#include "anyq/scaling.hpp"

#include <span>
#include <vector>

namespace anyq {

// One row's learned dequantization values, sorted ascending. Duplicates occur
// only when the row has fewer distinct scaled values than table entries.
struct RowLut {
  std::vector<Real> values;
  Index row = 0;
};

// A one-dimensional weighted clustering problem: one row of scaled weights
// plus nonnegative per-sample weights (at least one positive).
struct KmProblem {
  std::vector<Real> samples;
  std::vector<Real> weights;

  void validate() const;
};

struct KmResult {
  std::vector<double> centroids;      // optimizer state stays double
  std::vector<uint8_t> assignments;   // per-sample nearest-centroid index
  double loss = 0;                    // sum_i w_i * (x_i - c_{a_i})^2
  int iters = 0;
};

// Per-sample k-means weights for one row. Missing stats behave as E|x_j| = 1.
// Throws StatsError on negative entries or length mismatch.
Vecf build_sample_weights(const ScaleSet& s, Index row, const Vecf* stats, Weighting mode);

// Weighted k-means++ seeding: first centroid drawn with probability
// proportional to weight, later ones proportional to weight * D^2 with D the
// distance to the nearest chosen centroid. When no mass remains (fewer
// distinct values than k), remaining slots cycle through the distinct values.
std::vector<double> kmeans_pp_init(const KmProblem& p, int k, Rng& rng);

// Lloyd alternation until the relative loss decrease drops below
// cfg.rel_tol or cfg.max_iters is reached; best of cfg.restarts runs. Empty
// clusters are reseeded at the sample with the largest weighted squared
// error. Monotone descent is asserted every iteration.
KmResult weighted_kmeans(const KmProblem& p, int k, const LearnerConfig& cfg, Rng& rng);

struct RowQuant {
  RowLut lut;
  std::vector<uint8_t> codes;
  double loss = 0;
};

// Learns a 2^bits-entry table for one scaled row and returns the sorted table
// together with the per-element codes.
RowQuant learn_row_lut(std::span<const Real> ws_row, std::span<const Real> weights,
                       const LearnerConfig& cfg, int bits, Rng& rng);

// Full learned-format quantization: group scales, per-row sample weights, one
// independent table per row (each with its own (seed, row) RNG stream). The
// result is bit-identical for every thread count. `exj` is the per-channel
// mean absolute activation for this matrix, or null.
QuantizedTensor quantize_any(const Eigen::Ref<const Matf>& w, const QuantConfig& cfg,
                             const Vecf* exj = nullptr, int threads = 1);

}  // namespace anyq
