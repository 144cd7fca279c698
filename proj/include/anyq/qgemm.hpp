#pragma once

// Matrix multiplication with quantized weights, y = x * W^T. The reference
// path materializes the dequantized weights; the fused path keeps each row's
// table in a small local array and dequantizes inside the reduction loop.
// Both accumulate in fp32 with k ascending, so they agree bit for bit.

#include "anyq/core.hpp"
#include "anyq/pack.hpp"

#include <string>
#include <vector>

namespace anyq {

struct GemmPlan {
  Index m = 0;  // batch rows of x
  Index n = 0;  // output features / rows of W
  Index k = 0;  // reduction dimension
  Layout layout = Layout::RowMajor;
  int tile_k = 1;
};

GemmPlan make_plan(const Eigen::Ref<const Matf>& x, const QuantizedTensor& qt);

// Dense ground truth with the same fixed loop order (k innermost, ascending,
// fp32 accumulator).
Matf gemm_dense(const Eigen::Ref<const Matf>& x, const Eigen::Ref<const Matf>& w);

// Materializes dequant(W), then runs the dense ground-truth loop.
Matf gemm_reference(const Eigen::Ref<const Matf>& x, const QuantizedTensor& qt);

// Dequantize-on-the-fly lookup-table multiply; never materializes W. At
// m <= 8 the traversal keeps weights outermost, above that activations; both
// orders accumulate identically per element.
Matf gemm_fused(const Eigen::Ref<const Matf>& x, const QuantizedTensor& qt,
                const GemmPlan& plan);

struct BenchShape {
  Index m = 1, n = 0, k = 0;
};

struct BenchRow {
  BenchShape shape;
  std::string format;
  std::string layout;
  double median_ns = 0;
  double p10_ns = 0;
  double p90_ns = 0;
  double bytes_per_weight = 0;
};

// Times gemm_fused per (shape, format) plus a dense fp32 baseline row per
// shape; `repeats` must be >= 1.
std::vector<BenchRow> bench(const std::vector<BenchShape>& shapes,
                            const std::vector<std::string>& formats, int repeats, uint64_t seed);

// Header: shape,format,layout,median_ns,p10_ns,p90_ns,bytes_per_weight
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace anyq
