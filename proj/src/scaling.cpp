#include "anyq/scaling.hpp"

#include <limits>

namespace anyq {

namespace {

Index group_count(const QuantConfig& cfg, Index rows, Index cols) {
  switch (cfg.granularity) {
    case Granularity::Tensorwise: return 1;
    case Granularity::Rowwise: return rows;
    case Granularity::Columnwise: return cols;
    case Granularity::Groupwise: {
      Index gpr = (cols + cfg.group_size - 1) / cfg.group_size;
      return rows * gpr;
    }
    case Granularity::Blockwise: {
      Index bpr = (cols + cfg.block_size - 1) / cfg.block_size;
      Index bpc = (rows + cfg.block_size - 1) / cfg.block_size;
      return bpc * bpr;
    }
  }
  throw ConfigError("unknown granularity");
}

}  // namespace

ScaleSet compute_scales(const Eigen::Ref<const Matf>& w, const QuantConfig& cfg, Real qmin,
                        Real qmax) {
  validate(cfg, w.rows(), w.cols());
  require_finite(w, "compute_scales");
  if (!(qmax > qmin)) throw ConfigError("qmax must exceed qmin");
  if (cfg.symmetric && !(qmax > 0)) throw ConfigError("symmetric scaling needs qmax > 0");

  ScaleSet s;
  s.granularity = cfg.granularity;
  s.rows = w.rows();
  s.cols = w.cols();
  s.group_size = cfg.group_size;
  s.block_size = cfg.block_size;
  s.symmetric = cfg.symmetric;

  const Index ng = group_count(cfg, w.rows(), w.cols());
  Vecf mins = Vecf::Constant(ng, std::numeric_limits<Real>::max());
  Vecf maxs = Vecf::Constant(ng, std::numeric_limits<Real>::lowest());
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index j = 0; j < w.cols(); ++j) {
      Index g = s.group_of(i, j);
      Real v = w(i, j);
      if (v < mins[g]) mins[g] = v;
      if (v > maxs[g]) maxs[g] = v;
    }
  }

  s.alphas.resize(ng);
  s.betas.resize(ng);
  for (Index g = 0; g < ng; ++g) {
    if (cfg.symmetric) {
      Real absmax = std::max(std::abs(mins[g]), std::abs(maxs[g]));
      s.alphas[g] = absmax > 0 ? absmax / qmax : Real(1);
      s.betas[g] = 0;
    } else {
      Real range = maxs[g] - mins[g];
      s.alphas[g] = range > 0 ? range / (qmax - qmin) : Real(1);
      s.betas[g] = mins[g];
    }
  }
  return s;
}

Matf scale_weights(const Eigen::Ref<const Matf>& w, const ScaleSet& s) {
  if (w.rows() != s.rows || w.cols() != s.cols)
    throw ShapeError("scale_weights: matrix shape does not match scale set");
  Matf out(w.rows(), w.cols());
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index j = 0; j < w.cols(); ++j) {
      Index g = s.group_of(i, j);
      out(i, j) = (w(i, j) - s.betas[g]) / s.alphas[g];
    }
  }
  return out;
}

Matf dequantize(const Eigen::Ref<const Matf>& values, const ScaleSet& s) {
  if (values.rows() != s.rows || values.cols() != s.cols)
    throw ShapeError("dequantize: matrix shape does not match scale set");
  Matf out(values.rows(), values.cols());
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      Index g = s.group_of(i, j);
      out(i, j) = s.alphas[g] * values(i, j) + s.betas[g];
    }
  }
  return out;
}

}  // namespace anyq
