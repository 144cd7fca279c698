#pragma once

// Group-wise affine scale/offset parameters and the maps between the weight
// domain and the scaled domain:
//
//   scaled  w_s = (w - beta_g) / alpha_g
//   dequant w   = alpha_g * v + beta_g
//
// Asymmetric groups use alpha = (max - min) / (qmax - qmin) with beta = min,
// so scaled values span [0, qmax - qmin]. Symmetric groups use
// alpha = max|w| / qmax with beta = 0.

#include "anyq/core.hpp"

namespace anyq {

struct ScaleSet {
  Granularity granularity = Granularity::Rowwise;
  Index rows = 0;
  Index cols = 0;
  int group_size = 0;   // groupwise only
  int block_size = 0;   // blockwise only
  bool symmetric = false;
  Vecf alphas;
  Vecf betas;

  Index groups_per_row() const {
    return (cols + static_cast<Index>(group_size) - 1) / static_cast<Index>(group_size);
  }
  Index blocks_per_row() const {
    return (cols + static_cast<Index>(block_size) - 1) / static_cast<Index>(block_size);
  }
  Index num_groups() const { return alphas.size(); }

  // Deterministic element -> group index map; covers every (i, j) exactly once.
  Index group_of(Index i, Index j) const {
    switch (granularity) {
      case Granularity::Tensorwise: return 0;
      case Granularity::Rowwise: return i;
      case Granularity::Columnwise: return j;
      case Granularity::Groupwise: return i * groups_per_row() + j / group_size;
      case Granularity::Blockwise: return (i / block_size) * blocks_per_row() + j / block_size;
    }
    throw ConfigError("unknown granularity");
  }
};

// Affine parameters for every group of w under cfg.granularity. qmin/qmax are
// the extreme values of the target numeric format. Zero-range groups fall back
// to alpha = 1 (and beta = min for asymmetric mode), which reconstructs them
// exactly.
ScaleSet compute_scales(const Eigen::Ref<const Matf>& w, const QuantConfig& cfg, Real qmin,
                        Real qmax);

// w_s[i,j] = (w[i,j] - beta_g) / alpha_g
Matf scale_weights(const Eigen::Ref<const Matf>& w, const ScaleSet& s);

// out[i,j] = alpha_g * v[i,j] + beta_g, where v holds reproduction values in
// the scaled domain.
Matf dequantize(const Eigen::Ref<const Matf>& values, const ScaleSet& s);

}  // namespace anyq
