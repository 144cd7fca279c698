#pragma once

// Fixed dequantization value tables (integer grid, fp4/E2M1, nf4) and
// nearest-value rounding of scaled weights onto any sorted table.

#include "anyq/core.hpp"

#include <vector>

namespace anyq {

// A sorted table of distinct reproduction values. Codes are indices into
// `values`. fp4 carries 15 entries (its two zero encodings collapse to one
// entry); every other kind carries exactly 2^bits.
struct Codebook {
  CodebookKind kind = CodebookKind::IntGrid;
  int bits = 4;
  std::vector<Real> values;

  Real qmin() const { return values.front(); }
  Real qmax() const { return values.back(); }
  int size() const { return static_cast<int>(values.size()); }
};

// Consecutive integers [-2^(n-1), 2^(n-1)-1], or the shifted variant
// [-2^(n-1)+1, 2^(n-1)] when `shifted` is set.
Codebook int_grid(int bits, bool shifted = false);

// The 16 E2M1 values {+-0, +-0.5, +-1, +-1.5, +-2, +-3, +-4, +-6} with the
// two zeros collapsed: 15 distinct entries.
Codebook fp4_table();

// Normal-quantile table in [-1, 1] with an exact zero entry; 16 entries.
Codebook nf4_table();

// Table for a fixed-format config (IntGrid/Fp4/Nf4). AnyN has no fixed table.
Codebook fixed_codebook(const QuantConfig& cfg);

// The table that rounding and dequantization actually use. Symmetric scaling
// keeps the nominal table. Asymmetric scaling shifts it by -qmin: scaled
// weights (w - min)/alpha span [0, qmax - qmin], and alpha*(v - qmin) + beta
// maps the extreme codes back onto the group's min/max exactly. For the int
// grid this is the usual unsigned-code affine quantization.
Codebook effective_codebook(const Codebook& cb, bool symmetric);

// Nearest value by absolute distance; halfway ties break toward the smaller
// index. Inputs outside [qmin, qmax] clamp to the extreme codes.
CodeMat round_to_codebook(const Eigen::Ref<const Matf>& ws, const Codebook& cb);

// Amortized storage cost per weight scalar: n code bits, plus 2x16-bit scale
// metadata per group, plus 2^n x 16-bit per-row LUT entries for AnyN.
double storage_bits_per_entry(const QuantConfig& cfg, Index rows, Index cols);

// Codebook as a JSON document (used by the inspect subcommand).
std::string codebook_json(const Codebook& cb);

}  // namespace anyq
