#include "anyq/qgemm.hpp"

#include "anyq/quantize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace anyq {

GemmPlan make_plan(const Eigen::Ref<const Matf>& x, const QuantizedTensor& qt) {
  GemmPlan plan;
  plan.m = x.rows();
  plan.n = qt.rows;
  plan.k = qt.cols;
  plan.layout = qt.layout;
  plan.tile_k = qt.tile_k;
  return plan;
}

Matf gemm_dense(const Eigen::Ref<const Matf>& x, const Eigen::Ref<const Matf>& w) {
  if (x.cols() != w.cols()) throw ShapeError("gemm: reduction dimensions differ");
  const Index m = x.rows(), n = w.rows(), k = x.cols();
  Matf y(m, n);
  for (Index r = 0; r < m; ++r) {
    for (Index i = 0; i < n; ++i) {
      Real acc = 0;
      for (Index j = 0; j < k; ++j) acc += x(r, j) * w(i, j);
      y(r, i) = acc;
    }
  }
  return y;
}

Matf gemm_reference(const Eigen::Ref<const Matf>& x, const QuantizedTensor& qt) {
  if (x.cols() != qt.cols) throw ShapeError("gemm_reference: reduction dimensions differ");
  Matf w = dequantize(qt);
  return gemm_dense(x, w);
}

namespace {

// Scaled reproduction values for one row, as a small local table.
struct RowTable {
  Real values[256];
  int size = 0;
};

void load_row_table(RowTable& t, const QuantizedTensor& qt, const Codebook* fixed, Index i) {
  if (qt.cfg.codebook == CodebookKind::AnyN) {
    auto lut = qt.row_lut(i);
    t.size = static_cast<int>(lut.size());
    std::copy(lut.begin(), lut.end(), t.values);
  } else {
    t.size = fixed->size();
    std::copy(fixed->values.begin(), fixed->values.end(), t.values);
  }
}

// Code of logical element (i, j) straight from the packed row bytes.
inline uint32_t code_at(const uint8_t* row, Index j, int bits) {
  Index bit = j * bits;
  uint32_t v = static_cast<uint32_t>(row[bit >> 3]) >> (bit & 7);
  if ((bit & 7) + bits > 8) v |= static_cast<uint32_t>(row[(bit >> 3) + 1]) << (8 - (bit & 7));
  return v & ((1u << bits) - 1);
}

}  // namespace

Matf gemm_fused(const Eigen::Ref<const Matf>& x, const QuantizedTensor& qt,
                const GemmPlan& plan) {
  if (x.cols() != qt.cols) throw ShapeError("gemm_fused: reduction dimensions differ");
  if (plan.m != x.rows() || plan.n != qt.rows || plan.k != qt.cols)
    throw ShapeError("gemm_fused: plan does not match operands");
  if (plan.layout != qt.layout || (qt.layout == Layout::KTiled && plan.tile_k != qt.tile_k))
    throw ConfigError("gemm_fused: plan layout does not match tensor layout");

  const Index m = x.rows(), n = qt.rows, k = qt.cols;
  const int bits = qt.cfg.bits;
  const Index bpr = packed_bytes_per_row(k, bits);
  const bool tiled = qt.layout == Layout::KTiled;
  const Index tile = qt.tile_k;

  Codebook fixed;
  const Codebook* fixed_ptr = nullptr;
  if (qt.cfg.codebook != CodebookKind::AnyN) {
    fixed = effective_codebook(fixed_codebook(qt.cfg), qt.cfg.symmetric);
    fixed_ptr = &fixed;
  }

  Matf y(m, n);
  RowTable table;

  // One output row of W at a time; the reduction loop walks logical k
  // ascending regardless of the storage layout, so results match the
  // reference accumulation order exactly.
  auto accumulate_row = [&](Index i, Index r) -> Real {
    const uint8_t* row = qt.codes.data() + i * bpr;
    Real acc = 0;
    for (Index j = 0; j < k; ++j) {
      Index pos = tiled ? ktiled_pos(j, k, tile) : j;
      uint32_t c = code_at(row, pos, bits);
      if (static_cast<int>(c) >= table.size)
        throw CodeRangeError("gemm_fused: code exceeds table size");
      Index g = qt.scales.group_of(i, j);
      Real wv = qt.scales.alphas[g] * table.values[c] + qt.scales.betas[g];
      acc += x(r, j) * wv;
    }
    return acc;
  };

  if (m <= 8) {
    // Weight-stationary: stream each weight row once across the small batch.
    for (Index i = 0; i < n; ++i) {
      load_row_table(table, qt, fixed_ptr, i);
      for (Index r = 0; r < m; ++r) y(r, i) = accumulate_row(i, r);
    }
  } else {
    for (Index r = 0; r < m; ++r) {
      for (Index i = 0; i < n; ++i) {
        load_row_table(table, qt, fixed_ptr, i);
        y(r, i) = accumulate_row(i, r);
      }
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Micro-benchmark
// ---------------------------------------------------------------------------

namespace {

Matf gaussian_matrix(Index rows, Index cols, Rng& rng) {
  Matf m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<Real>(rng.next_gaussian());
  return m;
}

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  double idx = p * static_cast<double>(v.size() - 1);
  size_t lo = static_cast<size_t>(idx);
  size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = idx - static_cast<double>(lo);
  return v[lo] * (1 - frac) + v[hi] * frac;
}

}  // namespace

std::vector<BenchRow> bench(const std::vector<BenchShape>& shapes,
                            const std::vector<std::string>& formats, int repeats, uint64_t seed) {
  if (repeats < 1) throw ConfigError("bench: repeats must be >= 1");
  using clock = std::chrono::steady_clock;
  std::vector<BenchRow> rows;

  for (const auto& shape : shapes) {
    Rng rng = rng_for_row(seed, rows.size());
    Matf w = gaussian_matrix(shape.n, shape.k, rng);
    Matf x = gaussian_matrix(shape.m, shape.k, rng);

    auto time_runs = [&](auto&& fn) {
      std::vector<double> ns(repeats);
      volatile Real sink = 0;
      for (int r = 0; r < repeats; ++r) {
        auto t0 = clock::now();
        Matf y = fn();
        auto t1 = clock::now();
        sink = sink + y(0, 0);
        ns[r] = std::chrono::duration<double, std::nano>(t1 - t0).count();
      }
      (void)sink;
      return ns;
    };

    auto push = [&](const std::string& fmt, const std::string& layout, std::vector<double> ns,
                    double bpw) {
      BenchRow row;
      row.shape = shape;
      row.format = fmt;
      row.layout = layout;
      row.median_ns = percentile(ns, 0.5);
      row.p10_ns = percentile(ns, 0.1);
      row.p90_ns = percentile(ns, 0.9);
      row.bytes_per_weight = bpw;
      rows.push_back(row);
    };

    push("fp32", "dense", time_runs([&] { return gemm_dense(x, w); }), 4.0);

    for (const auto& fmt : formats) {
      QuantConfig cfg;
      cfg.granularity = Granularity::Groupwise;
      cfg.group_size = static_cast<int>(std::min<Index>(128, shape.k));
      cfg.seed = seed;
      apply_format(cfg, fmt);
      QuantizedTensor qt = quantize(w, cfg);
      GemmPlan plan = make_plan(x, qt);
      push(fmt, "rowmajor", time_runs([&] { return gemm_fused(x, qt, plan); }),
           storage_bits_per_entry(cfg, shape.n, shape.k) / 8.0);
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "shape,format,layout,median_ns,p10_ns,p90_ns,bytes_per_weight\n";
  for (const auto& r : rows) {
    os << r.shape.m << "x" << r.shape.n << "x" << r.shape.k << "," << r.format << "," << r.layout
       << "," << static_cast<uint64_t>(r.median_ns) << "," << static_cast<uint64_t>(r.p10_ns)
       << "," << static_cast<uint64_t>(r.p90_ns) << "," << r.bytes_per_weight << "\n";
  }
  return os.str();
}

}  // namespace anyq
