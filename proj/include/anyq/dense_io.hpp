#pragma once

// Minimal dense-tensor container (.anyt): "ANYT" magic, version, dims, then
// row-major little-endian fp32 payload.

#include "anyq/core.hpp"

#include <string>

namespace anyq {

void write_dense(const Eigen::Ref<const Matf>& m, const std::string& path);
Matf read_dense(const std::string& path);

}  // namespace anyq
