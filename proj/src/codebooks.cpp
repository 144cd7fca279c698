#include "anyq/codebooks.hpp"

#include <algorithm>
#include <sstream>

namespace anyq {

Codebook int_grid(int bits, bool shifted) {
  if (bits != 2 && bits != 3 && bits != 4 && bits != 8)
    throw ConfigError("int_grid: bits must be one of {2,3,4,8}");
  Codebook cb;
  cb.kind = CodebookKind::IntGrid;
  cb.bits = bits;
  int lo = -(1 << (bits - 1)) + (shifted ? 1 : 0);
  int n = 1 << bits;
  cb.values.resize(n);
  for (int q = 0; q < n; ++q) cb.values[q] = static_cast<Real>(lo + q);
  return cb;
}

Codebook fp4_table() {
  Codebook cb;
  cb.kind = CodebookKind::Fp4;
  cb.bits = 4;
  // E2M1 magnitudes: subnormals {0, 0.5}, then (1 + m/2) * 2^(e-1).
  cb.values = {-6.0f, -4.0f, -3.0f, -2.0f, -1.5f, -1.0f, -0.5f, 0.0f,
               0.5f,  1.0f,  1.5f,  2.0f,  3.0f,  4.0f,  6.0f};
  return cb;
}

Codebook nf4_table() {
  Codebook cb;
  cb.kind = CodebookKind::Nf4;
  cb.bits = 4;
  // Standard-normal quantiles at evenly spaced probabilities between 0.5 and
  // 0.9677083 (8 positive, 7 negative), plus zero, normalized to [-1, 1].
  // Frozen after validation against an independent inverse-CDF oracle.
  cb.values = {-1.0f,
               -0.6961928009986877f,
               -0.5250730514526367f,
               -0.39491748809814453f,
               -0.28444138169288635f,
               -0.18477343022823334f,
               -0.09105003625154495f,
               0.0f,
               0.07958029955625534f,
               0.16093020141124725f,
               0.24611230194568634f,
               0.33791524171829224f,
               0.44070982933044434f,
               0.5626170039176941f,
               0.7229568362236023f,
               1.0f};
  return cb;
}

Codebook fixed_codebook(const QuantConfig& cfg) {
  switch (cfg.codebook) {
    case CodebookKind::IntGrid: return int_grid(cfg.bits, cfg.int_range_shifted);
    case CodebookKind::Fp4: return fp4_table();
    case CodebookKind::Nf4: return nf4_table();
    case CodebookKind::AnyN: throw ConfigError("AnyN has no fixed codebook");
  }
  throw ConfigError("unknown codebook kind");
}

Codebook effective_codebook(const Codebook& cb, bool symmetric) {
  if (symmetric) return cb;
  Codebook out = cb;
  Real lo = cb.values.front();
  for (auto& v : out.values) v -= lo;
  return out;
}

CodeMat round_to_codebook(const Eigen::Ref<const Matf>& ws, const Codebook& cb) {
  require_finite(ws, "round_to_codebook");
  const auto& v = cb.values;
  CodeMat codes(ws.rows(), ws.cols());
  for (Index i = 0; i < ws.rows(); ++i) {
    for (Index j = 0; j < ws.cols(); ++j) {
      Real x = ws(i, j);
      auto it = std::lower_bound(v.begin(), v.end(), x);
      size_t hi = static_cast<size_t>(it - v.begin());
      size_t q;
      if (hi == 0) {
        q = 0;
      } else if (hi == v.size()) {
        q = v.size() - 1;
      } else {
        // Tie (equal distance) keeps the smaller index.
        q = (x - v[hi - 1] <= v[hi] - x) ? hi - 1 : hi;
      }
      codes(i, j) = static_cast<uint8_t>(q);
    }
  }
  return codes;
}

double storage_bits_per_entry(const QuantConfig& cfg, Index rows, Index cols) {
  validate(cfg, rows, cols);
  double entries = static_cast<double>(rows) * static_cast<double>(cols);
  double groups = 0;
  switch (cfg.granularity) {
    case Granularity::Tensorwise: groups = 1; break;
    case Granularity::Rowwise: groups = static_cast<double>(rows); break;
    case Granularity::Columnwise: groups = static_cast<double>(cols); break;
    case Granularity::Groupwise:
      groups = static_cast<double>(rows) *
               static_cast<double>((cols + cfg.group_size - 1) / cfg.group_size);
      break;
    case Granularity::Blockwise:
      groups = static_cast<double>((rows + cfg.block_size - 1) / cfg.block_size) *
               static_cast<double>((cols + cfg.block_size - 1) / cfg.block_size);
      break;
  }
  double scale_bits = groups * 2.0 * 16.0;  // 16-bit scale + 16-bit zero per group
  double lut_bits = 0;
  if (cfg.codebook == CodebookKind::AnyN)
    lut_bits = static_cast<double>(rows) * static_cast<double>(1 << cfg.bits) * 16.0;
  return static_cast<double>(cfg.bits) + (scale_bits + lut_bits) / entries;
}

std::string codebook_json(const Codebook& cb) {
  const char* name = cb.kind == CodebookKind::IntGrid ? "int"
                     : cb.kind == CodebookKind::Fp4   ? "fp4"
                     : cb.kind == CodebookKind::Nf4   ? "nf4"
                                                      : "any";
  std::ostringstream os;
  os.precision(9);
  os << "{\"kind\":\"" << name << "\",\"bits\":" << cb.bits << ",\"values\":[";
  for (size_t q = 0; q < cb.values.size(); ++q) {
    if (q) os << ",";
    os << cb.values[q];
  }
  os << "]}";
  return os.str();
}

}  // namespace anyq
