#pragma once

// Internal helpers shared by the file writers/readers: explicit little-endian
// (de)serialization into byte strings and atomic whole-file writes.

#include "anyq/core.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

namespace anyq::ioutil {

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline void put_u64(std::string& out, uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline void put_f32(std::string& out, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(out, u);
}

inline uint16_t get_u16(const std::string& buf, size_t off) {
  return static_cast<uint16_t>(static_cast<uint8_t>(buf[off]) |
                               (static_cast<uint8_t>(buf[off + 1]) << 8));
}

inline uint32_t get_u32(const std::string& buf, size_t off) {
  uint32_t v = 0;
  for (int b = 0; b < 4; ++b)
    v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[off + b])) << (8 * b);
  return v;
}

inline uint64_t get_u64(const std::string& buf, size_t off) {
  uint64_t v = 0;
  for (int b = 0; b < 8; ++b)
    v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[off + b])) << (8 * b);
  return v;
}

inline float get_f32(const std::string& buf, size_t off) {
  uint32_t u = get_u32(buf, off);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

// Write to a sibling temp file, then rename over the target: no partial
// output survives an error.
inline void atomic_write(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot move '" + tmp.string() + "' to '" + path + "': " + ec.message());
  }
}

inline std::string slurp(const std::string& path, const char* kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string("cannot open ") + kind + " file '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace anyq::ioutil
