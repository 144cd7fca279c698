#pragma once

// Bit-exact packed representation of quantized tensors: n-bit code packing,
// 16-bit narrowing of LUTs and scale metadata, the k-tiled layout transform,
// and the ANYQ file format.

#include "anyq/codebooks.hpp"
#include "anyq/core.hpp"
#include "anyq/scaling.hpp"

#include <span>
#include <string>
#include <vector>

namespace anyq {

enum class Layout : uint8_t { RowMajor = 0, KTiled = 1 };

enum class Store16 : uint8_t { Fp16 = 0, Bf16 = 1, Fp32 = 2 };

struct QuantizedTensor {
  Index rows = 0;
  Index cols = 0;
  QuantConfig cfg;
  Layout layout = Layout::RowMajor;
  int tile_k = 1;
  std::vector<uint8_t> codes;  // packed, each row padded to a byte boundary
  std::vector<Real> luts;      // AnyN: rows * 2^bits values, row-major; else empty
  ScaleSet scales;             // fp32 in memory; narrowed per scale_store on disk
  Store16 lut_store = Store16::Fp16;
  Store16 scale_store = Store16::Fp16;

  Index lut_entries() const {
    return cfg.codebook == CodebookKind::AnyN ? Index(1) << cfg.bits : 0;
  }
  std::span<const Real> row_lut(Index i) const {
    return {luts.data() + i * lut_entries(), static_cast<size_t>(lut_entries())};
  }
};

// ---------------------------------------------------------------------------
// Code packing
// ---------------------------------------------------------------------------

inline Index packed_bytes_per_row(Index cols, int bits) { return (cols * bits + 7) / 8; }

// Row-aligned little-end-first packing: 4-bit puts two codes per byte (first
// code in the low nibble), 2-bit four per byte, 3-bit a bit stream padded to
// the byte boundary per row, 8-bit one per byte.
std::vector<uint8_t> pack_codes(const CodeMat& codes, int bits);
CodeMat unpack_codes(std::span<const uint8_t> packed, Index rows, Index cols, int bits);

// ---------------------------------------------------------------------------
// 16-bit narrowing
// ---------------------------------------------------------------------------

// Round-to-nearest-even conversions. Narrowing throws NonFiniteError on
// non-finite input and IoError on overflow to infinity.
uint16_t f32_to_f16(Real f);
Real f16_to_f32(uint16_t h);
uint16_t f32_to_bf16(Real f);
Real bf16_to_f32(uint16_t h);

std::vector<uint16_t> narrow_lut(std::span<const Real> values, Store16 target);
std::vector<Real> widen_lut(std::span<const uint16_t> bits, Store16 source);

// The tensor with its LUTs and scales replaced by their 16-bit-narrowed
// values (widened back to fp32). Identity when stores are Fp32.
QuantizedTensor narrowed(const QuantizedTensor& qt);

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

// Position of logical column k within a k-tiled row: the row is viewed as
// (num_tiles x tile_k) and transposed, so each within-tile offset becomes a
// contiguous run over tiles; a ragged tail keeps its place. tile_k == 1 is
// the identity.
inline Index ktiled_pos(Index k, Index cols, Index tile_k) {
  Index num_full = cols / tile_k;
  Index full_end = num_full * tile_k;
  if (k >= full_end) return k;
  return (k % tile_k) * num_full + k / tile_k;
}

QuantizedTensor to_ktiled(const QuantizedTensor& qt, int tile_k);
QuantizedTensor from_ktiled(const QuantizedTensor& qt);

// ---------------------------------------------------------------------------
// Dequantization of whole tensors
// ---------------------------------------------------------------------------

// Reproduction values in the scaled domain, one per element (LUT or fixed
// table lookup). Throws CodeRangeError on codes past the table end.
Matf scaled_values(const QuantizedTensor& qt);

// Full dequantization: alpha * value + beta per group.
Matf dequantize(const QuantizedTensor& qt);

// ---------------------------------------------------------------------------
// ANYQ files
// ---------------------------------------------------------------------------

struct SizeBreakdown {
  uint64_t header = 0;
  uint64_t codes = 0;
  uint64_t scales = 0;
  uint64_t luts = 0;

  uint64_t total() const { return header + codes + scales + luts; }
  // Payload bits per weight entry, excluding the fixed header.
  double bits_per_entry(Index rows, Index cols) const {
    return static_cast<double>(codes + scales + luts) * 8.0 /
           (static_cast<double>(rows) * static_cast<double>(cols));
  }
};

SizeBreakdown file_sizes(const QuantizedTensor& qt);

void write_file(const QuantizedTensor& qt, const std::string& path);
QuantizedTensor read_file(const std::string& path);

}  // namespace anyq
