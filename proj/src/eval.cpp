#include "anyq/eval.hpp"

#include "anyq/qgemm.hpp"
#include "anyq/quantize.hpp"

#include <cmath>
#include <sstream>

namespace anyq {

std::pair<double, double> weight_error(const Eigen::Ref<const Matf>& w,
                                       const QuantizedTensor& qt) {
  if (w.rows() != qt.rows || w.cols() != qt.cols)
    throw ShapeError("weight_error: shapes differ");
  Matf d = dequantize(qt);
  double sq = 0, ref = 0;
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index j = 0; j < w.cols(); ++j) {
      double e = static_cast<double>(w(i, j)) - static_cast<double>(d(i, j));
      sq += e * e;
      ref += static_cast<double>(w(i, j)) * static_cast<double>(w(i, j));
    }
  }
  double count = static_cast<double>(w.rows()) * static_cast<double>(w.cols());
  double mse = sq / count;
  double rel = ref > 0 ? std::sqrt(sq) / std::sqrt(ref) : std::sqrt(sq);
  return {mse, rel};
}

double output_error(const Eigen::Ref<const Matf>& w, const QuantizedTensor& qt,
                    const Eigen::Ref<const Matf>& x) {
  if (w.rows() != qt.rows || w.cols() != qt.cols)
    throw ShapeError("output_error: weight shapes differ");
  if (x.cols() != w.cols()) throw ShapeError("output_error: activation width mismatch");
  Matf y = gemm_dense(x, w);
  Matf yq = gemm_reference(x, qt);
  double sq = 0;
  for (Index r = 0; r < y.rows(); ++r) {
    for (Index i = 0; i < y.cols(); ++i) {
      double e = static_cast<double>(yq(r, i)) - static_cast<double>(y(r, i));
      sq += e * e;
    }
  }
  return sq / (static_cast<double>(y.rows()) * static_cast<double>(y.cols()));
}

Matf eval_activations(Index rows, Index cols, const Vecf* exj, uint64_t seed) {
  if (exj && exj->size() != cols) throw StatsError("eval_activations: stats length mismatch");
  // E|N(0, sigma)| = sigma * sqrt(2/pi), so sigma = E|x| * sqrt(pi/2).
  constexpr double kSqrtHalfPi = 1.2533141373155003;
  Matf x(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    Rng rng = rng_for_row(seed, r);
    for (Index j = 0; j < cols; ++j) {
      double sigma = exj ? static_cast<double>((*exj)[j]) * kSqrtHalfPi : 1.0;
      x(r, j) = static_cast<Real>(sigma * rng.next_gaussian());
    }
  }
  return x;
}

EvalReport compare_formats(const Eigen::Ref<const Matf>& w,
                           const std::vector<std::string>& formats, const QuantConfig& base,
                           const ActivationStats* stats, const std::string& module_name,
                           const CompareOptions& opts) {
  const Vecf* exj = nullptr;
  if (stats) exj = &stats->for_module(module_name, w.cols());
  Matf x = eval_activations(opts.eval_rows, w.cols(), exj, opts.eval_seed);

  EvalReport report;
  for (const auto& fmt : formats) {
    QuantConfig cfg = base;
    apply_format(cfg, fmt);
    QuantizedTensor qt = quantize(w, cfg, stats, module_name, opts.threads);
    auto [mse, rel] = weight_error(w, qt);
    EvalRow row;
    row.module = module_name;
    row.format = fmt;
    row.weight_mse = mse;
    row.weight_rel_frobenius = rel;
    row.output_mse = output_error(w, qt, x);
    row.bits_per_entry = storage_bits_per_entry(cfg, w.rows(), w.cols());
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "schema_version,module,format,weight_mse,weight_rel_frobenius,output_mse,"
        "bits_per_entry\n";
  for (const auto& r : rows)
    os << kSchemaVersion << "," << r.module << "," << r.format << "," << r.weight_mse << ","
       << r.weight_rel_frobenius << "," << r.output_mse << "," << r.bits_per_entry << "\n";
  return os.str();
}

std::string EvalReport::to_json() const {
  std::ostringstream os;
  os.precision(9);
  os << "{\"schema_version\":\"" << kSchemaVersion << "\",\"rows\":[";
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i) os << ",";
    os << "{\"module\":\"" << r.module << "\",\"format\":\"" << r.format
       << "\",\"weight_mse\":" << r.weight_mse
       << ",\"weight_rel_frobenius\":" << r.weight_rel_frobenius
       << ",\"output_mse\":" << r.output_mse << ",\"bits_per_entry\":" << r.bits_per_entry
       << "}";
  }
  os << "]}";
  return os.str();
}

}  // namespace anyq
