#include "anyq/pack.hpp"

#include "io_util.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace anyq {

// ---------------------------------------------------------------------------
// Code packing
// ---------------------------------------------------------------------------

std::vector<uint8_t> pack_codes(const CodeMat& codes, int bits) {
  if (bits != 2 && bits != 3 && bits != 4 && bits != 8)
    throw ConfigError("pack_codes: bits must be one of {2,3,4,8}");
  const Index rows = codes.rows(), cols = codes.cols();
  const Index bpr = packed_bytes_per_row(cols, bits);
  const uint32_t limit = 1u << bits;
  std::vector<uint8_t> out(static_cast<size_t>(rows * bpr), 0);
  for (Index i = 0; i < rows; ++i) {
    uint8_t* row = out.data() + i * bpr;
    for (Index j = 0; j < cols; ++j) {
      uint32_t c = codes(i, j);
      if (c >= limit) throw CodeRangeError("code " + std::to_string(c) + " does not fit in " +
                                           std::to_string(bits) + " bits");
      Index bit = j * bits;
      // Little-end-first within each byte; 3-bit codes may straddle a byte.
      row[bit >> 3] |= static_cast<uint8_t>(c << (bit & 7));
      if ((bit & 7) + bits > 8) row[(bit >> 3) + 1] |= static_cast<uint8_t>(c >> (8 - (bit & 7)));
    }
  }
  return out;
}

CodeMat unpack_codes(std::span<const uint8_t> packed, Index rows, Index cols, int bits) {
  if (bits != 2 && bits != 3 && bits != 4 && bits != 8)
    throw ConfigError("unpack_codes: bits must be one of {2,3,4,8}");
  const Index bpr = packed_bytes_per_row(cols, bits);
  if (static_cast<Index>(packed.size()) != rows * bpr)
    throw ShapeError("unpack_codes: packed size does not match shape");
  const uint32_t mask = (1u << bits) - 1;
  CodeMat codes(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const uint8_t* row = packed.data() + i * bpr;
    for (Index j = 0; j < cols; ++j) {
      Index bit = j * bits;
      uint32_t v = static_cast<uint32_t>(row[bit >> 3]) >> (bit & 7);
      if ((bit & 7) + bits > 8) v |= static_cast<uint32_t>(row[(bit >> 3) + 1]) << (8 - (bit & 7));
      codes(i, j) = static_cast<uint8_t>(v & mask);
    }
  }
  return codes;
}

// ---------------------------------------------------------------------------
// 16-bit narrowing
// ---------------------------------------------------------------------------

uint16_t f32_to_f16(Real f) {
  uint32_t x = std::bit_cast<uint32_t>(f);
  uint16_t sign = static_cast<uint16_t>((x >> 16) & 0x8000u);
  uint32_t a = x & 0x7FFFFFFFu;
  if (a >= 0x7F800000u) throw NonFiniteError("f32_to_f16: non-finite input");
  if (a >= 0x477FF000u) throw IoError("f32_to_f16: value overflows to infinity");
  uint32_t out;
  if (a < 0x38800000u) {
    // Subnormal half: renormalize onto the 2^-24 grid with RNE.
    uint32_t exp32 = a >> 23;
    uint32_t shift = 113u - exp32;
    if (a == 0) {
      out = 0;
    } else if (shift > 24u) {
      out = 0;
    } else {
      uint32_t mant = (a & 0x7FFFFFu) | 0x800000u;
      uint32_t q = mant >> (shift + 13u);
      uint32_t rem = mant & ((1u << (shift + 13u)) - 1u);
      uint32_t half = 1u << (shift + 12u);
      if (rem > half || (rem == half && (q & 1u))) ++q;
      out = q;  // a carry lands exactly on the smallest normal
    }
  } else {
    uint32_t exp = (a >> 23) - 112u;
    uint32_t mant = a & 0x7FFFFFu;
    uint32_t q = (exp << 10) | (mant >> 13);
    uint32_t rem = mant & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (q & 1u))) ++q;
    out = q;
  }
  return static_cast<uint16_t>(sign | out);
}

Real f16_to_f32(uint16_t h) {
  uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
  uint32_t exp = (h >> 10) & 0x1Fu;
  uint32_t mant = h & 0x3FFu;
  uint32_t out;
  if (exp == 0) {
    if (mant == 0) {
      out = sign;
    } else {
      uint32_t shift = 0;
      while (!(mant & 0x400u)) {
        mant <<= 1;
        ++shift;
      }
      out = sign | ((113u - shift) << 23) | ((mant & 0x3FFu) << 13);
    }
  } else if (exp == 0x1Fu) {
    out = sign | 0x7F800000u | (mant << 13);
  } else {
    out = sign | ((exp + 112u) << 23) | (mant << 13);
  }
  return std::bit_cast<Real>(out);
}

uint16_t f32_to_bf16(Real f) {
  uint32_t x = std::bit_cast<uint32_t>(f);
  if ((x & 0x7F800000u) == 0x7F800000u) throw NonFiniteError("f32_to_bf16: non-finite input");
  uint32_t lsb = (x >> 16) & 1u;
  uint32_t r = x + 0x7FFFu + lsb;
  if ((r & 0x7F800000u) == 0x7F800000u) throw IoError("f32_to_bf16: value overflows to infinity");
  return static_cast<uint16_t>(r >> 16);
}

Real bf16_to_f32(uint16_t h) { return std::bit_cast<Real>(static_cast<uint32_t>(h) << 16); }

std::vector<uint16_t> narrow_lut(std::span<const Real> values, Store16 target) {
  if (target == Store16::Fp32) throw ConfigError("narrow_lut targets fp16 or bf16");
  std::vector<uint16_t> out(values.size());
  for (size_t q = 0; q < values.size(); ++q)
    out[q] = target == Store16::Fp16 ? f32_to_f16(values[q]) : f32_to_bf16(values[q]);
  return out;
}

std::vector<Real> widen_lut(std::span<const uint16_t> bits, Store16 source) {
  if (source == Store16::Fp32) throw ConfigError("widen_lut sources fp16 or bf16");
  std::vector<Real> out(bits.size());
  for (size_t q = 0; q < bits.size(); ++q)
    out[q] = source == Store16::Fp16 ? f16_to_f32(bits[q]) : bf16_to_f32(bits[q]);
  return out;
}

namespace {

Real narrow_widen(Real v, Store16 store) {
  switch (store) {
    case Store16::Fp16: return f16_to_f32(f32_to_f16(v));
    case Store16::Bf16: return bf16_to_f32(f32_to_bf16(v));
    case Store16::Fp32: return v;
  }
  throw ConfigError("unknown storage precision");
}

}  // namespace

QuantizedTensor narrowed(const QuantizedTensor& qt) {
  QuantizedTensor out = qt;
  for (auto& v : out.luts) v = narrow_widen(v, qt.lut_store);
  for (Index g = 0; g < out.scales.num_groups(); ++g) {
    out.scales.alphas[g] = narrow_widen(out.scales.alphas[g], qt.scale_store);
    out.scales.betas[g] = narrow_widen(out.scales.betas[g], qt.scale_store);
    if (!(out.scales.alphas[g] > 0))
      throw InvariantError("scale underflows its 16-bit storage format");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

QuantizedTensor to_ktiled(const QuantizedTensor& qt, int tile_k) {
  if (tile_k < 1) throw ConfigError("tile_k must be >= 1");
  QuantizedTensor src = qt.layout == Layout::KTiled ? from_ktiled(qt) : qt;
  CodeMat codes = unpack_codes(src.codes, src.rows, src.cols, src.cfg.bits);
  CodeMat tiled(src.rows, src.cols);
  for (Index i = 0; i < src.rows; ++i)
    for (Index j = 0; j < src.cols; ++j) tiled(i, ktiled_pos(j, src.cols, tile_k)) = codes(i, j);
  src.codes = pack_codes(tiled, src.cfg.bits);
  src.layout = Layout::KTiled;
  src.tile_k = tile_k;
  return src;
}

QuantizedTensor from_ktiled(const QuantizedTensor& qt) {
  if (qt.layout == Layout::RowMajor) return qt;
  CodeMat tiled = unpack_codes(qt.codes, qt.rows, qt.cols, qt.cfg.bits);
  CodeMat codes(qt.rows, qt.cols);
  for (Index i = 0; i < qt.rows; ++i)
    for (Index j = 0; j < qt.cols; ++j) codes(i, j) = tiled(i, ktiled_pos(j, qt.cols, qt.tile_k));
  QuantizedTensor out = qt;
  out.codes = pack_codes(codes, qt.cfg.bits);
  out.layout = Layout::RowMajor;
  out.tile_k = 1;
  return out;
}

// ---------------------------------------------------------------------------
// Dequantization
// ---------------------------------------------------------------------------

Matf scaled_values(const QuantizedTensor& qt) {
  const QuantizedTensor* src = &qt;
  QuantizedTensor normalized;
  if (qt.layout == Layout::KTiled) {
    normalized = from_ktiled(qt);
    src = &normalized;
  }
  CodeMat codes = unpack_codes(src->codes, src->rows, src->cols, src->cfg.bits);
  Matf vals(src->rows, src->cols);
  if (src->cfg.codebook == CodebookKind::AnyN) {
    const Index k = src->lut_entries();
    for (Index i = 0; i < src->rows; ++i) {
      auto lut = src->row_lut(i);
      for (Index j = 0; j < src->cols; ++j) {
        uint8_t c = codes(i, j);
        if (c >= k) throw CodeRangeError("code " + std::to_string(c) + " exceeds LUT size");
        vals(i, j) = lut[c];
      }
    }
  } else {
    Codebook cb = effective_codebook(fixed_codebook(src->cfg), src->cfg.symmetric);
    const int n = cb.size();
    for (Index i = 0; i < src->rows; ++i) {
      for (Index j = 0; j < src->cols; ++j) {
        uint8_t c = codes(i, j);
        if (c >= n) throw CodeRangeError("code " + std::to_string(c) + " exceeds table size");
        vals(i, j) = cb.values[c];
      }
    }
  }
  return vals;
}

Matf dequantize(const QuantizedTensor& qt) { return dequantize(scaled_values(qt), qt.scales); }

// ---------------------------------------------------------------------------
// ANYQ files
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'A', 'N', 'Y', 'Q'};
constexpr uint32_t kVersion = 1;
constexpr uint64_t kHeaderSize = 120;

size_t store_width(Store16 s) { return s == Store16::Fp32 ? 4 : 2; }

void put_stored(std::string& out, Real v, Store16 s) {
  switch (s) {
    case Store16::Fp16: ioutil::put_u16(out, f32_to_f16(v)); return;
    case Store16::Bf16: ioutil::put_u16(out, f32_to_bf16(v)); return;
    case Store16::Fp32: ioutil::put_f32(out, v); return;
  }
  throw ConfigError("unknown storage precision");
}

Real get_stored(const std::string& buf, size_t off, Store16 s) {
  switch (s) {
    case Store16::Fp16: return f16_to_f32(ioutil::get_u16(buf, off));
    case Store16::Bf16: return bf16_to_f32(ioutil::get_u16(buf, off));
    case Store16::Fp32: return ioutil::get_f32(buf, off);
  }
  throw ConfigError("unknown storage precision");
}

void need(const std::string& buf, size_t off, size_t len, const char* what) {
  if (off + len > buf.size())
    throw TruncatedError(std::string("ANYQ file truncated reading ") + what + " at offset " +
                         std::to_string(off));
}

template <typename T>
T checked_enum(uint8_t raw, uint8_t max, const char* what) {
  if (raw > max) throw InvariantError(std::string("ANYQ file has invalid ") + what);
  return static_cast<T>(raw);
}

}  // namespace

SizeBreakdown file_sizes(const QuantizedTensor& qt) {
  SizeBreakdown sz;
  sz.header = kHeaderSize;
  sz.codes = qt.codes.size();
  sz.scales = 2 * static_cast<uint64_t>(qt.scales.num_groups()) * store_width(qt.scale_store);
  sz.luts = static_cast<uint64_t>(qt.luts.size()) * store_width(qt.lut_store);
  return sz;
}

void write_file(const QuantizedTensor& qt, const std::string& path) {
  validate(qt.cfg, qt.rows, qt.cols);
  if (static_cast<Index>(qt.codes.size()) != qt.rows * packed_bytes_per_row(qt.cols, qt.cfg.bits))
    throw ShapeError("write_file: packed code size does not match shape");
  SizeBreakdown sz = file_sizes(qt);

  std::string bytes;
  bytes.reserve(sz.total());
  bytes.append(kMagic, 4);
  ioutil::put_u32(bytes, kVersion);
  ioutil::put_u32(bytes, static_cast<uint32_t>(qt.rows));
  ioutil::put_u32(bytes, static_cast<uint32_t>(qt.cols));
  bytes.push_back(static_cast<char>(qt.cfg.bits));
  bytes.push_back(static_cast<char>(qt.cfg.codebook));
  bytes.push_back(static_cast<char>(qt.cfg.granularity));
  bytes.push_back(static_cast<char>(qt.cfg.symmetric ? 1 : 0));
  bytes.push_back(static_cast<char>(qt.layout));
  bytes.push_back(static_cast<char>(qt.lut_store));
  bytes.push_back(static_cast<char>(qt.scale_store));
  bytes.push_back(static_cast<char>(qt.cfg.int_range_shifted ? 1 : 0));
  ioutil::put_u32(bytes, static_cast<uint32_t>(qt.cfg.group_size));
  ioutil::put_u32(bytes, static_cast<uint32_t>(qt.cfg.block_size));
  ioutil::put_u32(bytes, static_cast<uint32_t>(qt.tile_k));
  ioutil::put_u64(bytes, qt.cfg.seed);
  bytes.push_back(static_cast<char>(qt.cfg.learner.init));
  bytes.push_back(static_cast<char>(qt.cfg.learner.weighting));
  ioutil::put_u16(bytes, 0);
  ioutil::put_u32(bytes, static_cast<uint32_t>(qt.cfg.learner.max_iters));
  ioutil::put_f32(bytes, qt.cfg.learner.rel_tol);
  ioutil::put_u32(bytes, static_cast<uint32_t>(qt.cfg.learner.restarts));
  ioutil::put_u32(bytes, static_cast<uint32_t>(qt.scales.num_groups()));
  ioutil::put_u32(bytes, static_cast<uint32_t>(qt.lut_entries()));
  ioutil::put_u32(bytes, 0);

  uint64_t codes_off = kHeaderSize;
  uint64_t scales_off = codes_off + sz.codes;
  uint64_t luts_off = scales_off + sz.scales;
  ioutil::put_u64(bytes, codes_off);
  ioutil::put_u64(bytes, sz.codes);
  ioutil::put_u64(bytes, scales_off);
  ioutil::put_u64(bytes, sz.scales);
  ioutil::put_u64(bytes, luts_off);
  ioutil::put_u64(bytes, sz.luts);
  if (bytes.size() != kHeaderSize) throw Error("internal: ANYQ header size drift");

  bytes.append(reinterpret_cast<const char*>(qt.codes.data()), qt.codes.size());
  for (Index g = 0; g < qt.scales.num_groups(); ++g)
    put_stored(bytes, qt.scales.alphas[g], qt.scale_store);
  for (Index g = 0; g < qt.scales.num_groups(); ++g)
    put_stored(bytes, qt.scales.betas[g], qt.scale_store);
  for (Real v : qt.luts) put_stored(bytes, v, qt.lut_store);

  ioutil::atomic_write(path, bytes);
}

QuantizedTensor read_file(const std::string& path) {
  std::string buf = ioutil::slurp(path, "ANYQ");
  need(buf, 0, kHeaderSize, "header");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw MagicError("not an ANYQ file");
  uint32_t version = ioutil::get_u32(buf, 4);
  if (version != kVersion)
    throw VersionError("unsupported ANYQ version " + std::to_string(version));

  QuantizedTensor qt;
  qt.rows = ioutil::get_u32(buf, 8);
  qt.cols = ioutil::get_u32(buf, 12);
  qt.cfg.bits = static_cast<uint8_t>(buf[16]);
  qt.cfg.codebook = checked_enum<CodebookKind>(buf[17], 3, "codebook kind");
  qt.cfg.granularity = checked_enum<Granularity>(buf[18], 4, "granularity");
  qt.cfg.symmetric = buf[19] != 0;
  qt.layout = checked_enum<Layout>(buf[20], 1, "layout");
  qt.lut_store = checked_enum<Store16>(buf[21], 2, "LUT storage");
  qt.scale_store = checked_enum<Store16>(buf[22], 2, "scale storage");
  qt.cfg.int_range_shifted = buf[23] != 0;
  qt.cfg.group_size = static_cast<int>(ioutil::get_u32(buf, 24));
  qt.cfg.block_size = static_cast<int>(ioutil::get_u32(buf, 28));
  qt.tile_k = static_cast<int>(ioutil::get_u32(buf, 32));
  qt.cfg.seed = ioutil::get_u64(buf, 36);
  qt.cfg.learner.init = checked_enum<LutInit>(buf[44], 3, "learner init");
  qt.cfg.learner.weighting = checked_enum<Weighting>(buf[45], 2, "learner weighting");
  qt.cfg.learner.max_iters = static_cast<int>(ioutil::get_u32(buf, 48));
  qt.cfg.learner.rel_tol = ioutil::get_f32(buf, 52);
  qt.cfg.learner.restarts = static_cast<int>(ioutil::get_u32(buf, 56));
  uint32_t num_groups = ioutil::get_u32(buf, 60);
  uint32_t lut_entries = ioutil::get_u32(buf, 64);

  try {
    validate(qt.cfg, qt.rows, qt.cols);
  } catch (const Error& e) {
    throw InvariantError(std::string("ANYQ file header invalid: ") + e.what());
  }
  if (qt.layout == Layout::KTiled && qt.tile_k < 1)
    throw InvariantError("ANYQ file has invalid tile_k");
  uint32_t expect_lut = qt.cfg.codebook == CodebookKind::AnyN ? (1u << qt.cfg.bits) : 0;
  if (lut_entries != expect_lut) throw InvariantError("ANYQ file LUT entry count mismatch");

  uint64_t codes_off = ioutil::get_u64(buf, 72);
  uint64_t codes_len = ioutil::get_u64(buf, 80);
  uint64_t scales_off = ioutil::get_u64(buf, 88);
  uint64_t scales_len = ioutil::get_u64(buf, 96);
  uint64_t luts_off = ioutil::get_u64(buf, 104);
  uint64_t luts_len = ioutil::get_u64(buf, 112);

  uint64_t expect_codes =
      static_cast<uint64_t>(qt.rows) * static_cast<uint64_t>(packed_bytes_per_row(qt.cols, qt.cfg.bits));
  uint64_t expect_scales = 2ull * num_groups * store_width(qt.scale_store);
  uint64_t expect_luts =
      static_cast<uint64_t>(qt.rows) * lut_entries * store_width(qt.lut_store);
  if (codes_len != expect_codes || scales_len != expect_scales || luts_len != expect_luts)
    throw InvariantError("ANYQ file section lengths do not match its shape");
  need(buf, codes_off, codes_len, "codes");
  need(buf, scales_off, scales_len, "scales");
  need(buf, luts_off, luts_len, "LUTs");
  if (buf.size() != luts_off + luts_len)
    throw InvariantError("ANYQ file size does not match declared sections");

  qt.codes.assign(buf.begin() + static_cast<ptrdiff_t>(codes_off),
                  buf.begin() + static_cast<ptrdiff_t>(codes_off + codes_len));

  QuantConfig scale_cfg = qt.cfg;
  qt.scales.granularity = qt.cfg.granularity;
  qt.scales.rows = qt.rows;
  qt.scales.cols = qt.cols;
  qt.scales.group_size = scale_cfg.group_size;
  qt.scales.block_size = scale_cfg.block_size;
  qt.scales.symmetric = scale_cfg.symmetric;
  qt.scales.alphas.resize(num_groups);
  qt.scales.betas.resize(num_groups);
  size_t w = store_width(qt.scale_store);
  for (uint32_t g = 0; g < num_groups; ++g) {
    qt.scales.alphas[g] = get_stored(buf, scales_off + w * g, qt.scale_store);
    qt.scales.betas[g] = get_stored(buf, scales_off + w * (num_groups + g), qt.scale_store);
    if (!(qt.scales.alphas[g] > 0) || !std::isfinite(qt.scales.alphas[g]))
      throw InvariantError("ANYQ file scale alpha must be positive and finite");
    if (!std::isfinite(qt.scales.betas[g]))
      throw InvariantError("ANYQ file scale beta must be finite");
    if (qt.cfg.symmetric && qt.scales.betas[g] != 0)
      throw InvariantError("ANYQ file symmetric tensor has nonzero beta");
  }

  // Group count must match the granularity map.
  ScaleSet probe = qt.scales;
  Index expect_groups = 0;
  switch (qt.cfg.granularity) {
    case Granularity::Tensorwise: expect_groups = 1; break;
    case Granularity::Rowwise: expect_groups = qt.rows; break;
    case Granularity::Columnwise: expect_groups = qt.cols; break;
    case Granularity::Groupwise: expect_groups = qt.rows * probe.groups_per_row(); break;
    case Granularity::Blockwise:
      expect_groups = ((qt.rows + qt.cfg.block_size - 1) / qt.cfg.block_size) * probe.blocks_per_row();
      break;
  }
  if (static_cast<Index>(num_groups) != expect_groups)
    throw InvariantError("ANYQ file group count does not match granularity");

  qt.luts.resize(static_cast<size_t>(qt.rows) * lut_entries);
  size_t lw = store_width(qt.lut_store);
  for (size_t q = 0; q < qt.luts.size(); ++q) {
    qt.luts[q] = get_stored(buf, luts_off + lw * q, qt.lut_store);
    if (!std::isfinite(qt.luts[q])) throw InvariantError("ANYQ file LUT value must be finite");
  }
  for (Index i = 0; i < qt.rows && lut_entries > 0; ++i) {
    auto lut = qt.row_lut(i);
    if (!std::is_sorted(lut.begin(), lut.end()))
      throw InvariantError("ANYQ file row LUT is not sorted");
  }

  // Every code must index inside its value table.
  CodeMat codes = unpack_codes(qt.codes, qt.rows, qt.cols, qt.cfg.bits);
  int table_size = qt.cfg.codebook == CodebookKind::AnyN
                       ? static_cast<int>(lut_entries)
                       : fixed_codebook(qt.cfg).size();
  for (Index i = 0; i < qt.rows; ++i)
    for (Index j = 0; j < qt.cols; ++j)
      if (codes(i, j) >= table_size)
        throw CodeRangeError("ANYQ file code " + std::to_string(codes(i, j)) +
                             " exceeds table size " + std::to_string(table_size));
  return qt;
}

}  // namespace anyq
