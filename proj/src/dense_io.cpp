#include "anyq/dense_io.hpp"

#include "io_util.hpp"

#include <cstring>

namespace anyq {

namespace {
constexpr char kMagic[4] = {'A', 'N', 'Y', 'T'};
constexpr uint32_t kVersion = 1;
}  // namespace

void write_dense(const Eigen::Ref<const Matf>& m, const std::string& path) {
  std::string bytes;
  bytes.reserve(16 + 4 * static_cast<size_t>(m.size()));
  bytes.append(kMagic, 4);
  ioutil::put_u32(bytes, kVersion);
  ioutil::put_u32(bytes, static_cast<uint32_t>(m.rows()));
  ioutil::put_u32(bytes, static_cast<uint32_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) ioutil::put_f32(bytes, m(i, j));
  ioutil::atomic_write(path, bytes);
}

Matf read_dense(const std::string& path) {
  std::string buf = ioutil::slurp(path, "tensor");
  if (buf.size() < 16) throw TruncatedError("tensor file shorter than its header");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw MagicError("not an ANYT tensor file");
  uint32_t version = ioutil::get_u32(buf, 4);
  if (version != kVersion)
    throw VersionError("unsupported ANYT version " + std::to_string(version));
  uint32_t rows = ioutil::get_u32(buf, 8);
  uint32_t cols = ioutil::get_u32(buf, 12);
  if (rows < 1 || cols < 1) throw InvariantError("tensor file declares an empty shape");
  size_t expect = 16 + 4ull * rows * cols;
  if (buf.size() < expect)
    throw TruncatedError("tensor file truncated at offset " + std::to_string(buf.size()));
  if (buf.size() != expect) throw InvariantError("tensor file size does not match its shape");
  Matf m(rows, cols);
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t j = 0; j < cols; ++j) m(i, j) = ioutil::get_f32(buf, 16 + 4ull * (i * cols + j));
  return m;
}

}  // namespace anyq
