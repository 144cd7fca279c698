#pragma once

// Shared domain types: dense row-major float matrices (Eigen), quantization
// configuration, a counter-based deterministic RNG, and the error hierarchy.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace anyq {

using Real = float;
using Index = Eigen::Index;

// All weight/activation math runs on row-major fp32 matrices.
using Matf = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vecf = Eigen::Vector<Real, Eigen::Dynamic>;
using CodeMat = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value where finite math is required.
struct NonFiniteError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration (bad bits/granularity combinations and the like).
struct ConfigError : Error {
  using Error::Error;
};

// Activation-stats violations (negative entries, length mismatch).
struct StatsError : Error {
  using Error::Error;
};

// A quantization code indexes past the end of its value table.
struct CodeRangeError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct MagicError : IoError {
  using IoError::IoError;
};

struct VersionError : IoError {
  using IoError::IoError;
};

struct TruncatedError : IoError {
  using IoError::IoError;
};

// Decoded file contents violate a tensor invariant (alpha <= 0, bad enum...).
struct InvariantError : IoError {
  using IoError::IoError;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class CodebookKind : uint8_t { IntGrid = 0, Fp4 = 1, Nf4 = 2, AnyN = 3 };

enum class Granularity : uint8_t {
  Tensorwise = 0,
  Rowwise = 1,
  Columnwise = 2,
  Groupwise = 3,
  Blockwise = 4,
};

enum class LutInit : uint8_t { KMeansPlusPlus = 0, Random = 1, IntGridSeed = 2, Nf4Seed = 3 };

enum class Weighting : uint8_t {
  WeightsOnly = 0,
  WeightsTimesActivations = 1,
  WeightsTimesActivationsTimesScales = 2,
};

struct LearnerConfig {
  LutInit init = LutInit::KMeansPlusPlus;
  int max_iters = 100;
  Real rel_tol = 1e-6f;
  int restarts = 1;
  Weighting weighting = Weighting::WeightsTimesActivationsTimesScales;
  // Re-verify assignment optimality and the centroid fixed point inside the
  // training loop. Off by default; the verification suite turns it on.
  bool check_invariants = false;
};

struct QuantConfig {
  int bits = 4;
  CodebookKind codebook = CodebookKind::IntGrid;
  Granularity granularity = Granularity::Groupwise;
  int group_size = 128;
  int block_size = 1;
  bool symmetric = false;
  // Use the shifted integer grid [-2^(n-1)+1, 2^(n-1)] instead of the default
  // [-2^(n-1), 2^(n-1)-1].
  bool int_range_shifted = false;
  LearnerConfig learner;
  uint64_t seed = 0;
};

// Throws ConfigError when the config cannot quantize a rows x cols tensor.
inline void validate(const QuantConfig& cfg, Index rows, Index cols) {
  if (rows < 1 || cols < 1) throw ShapeError("tensor must be at least 1x1");
  if (cfg.bits != 2 && cfg.bits != 3 && cfg.bits != 4 && cfg.bits != 8)
    throw ConfigError("bits must be one of {2,3,4,8}");
  if ((cfg.codebook == CodebookKind::Fp4 || cfg.codebook == CodebookKind::Nf4) && cfg.bits != 4)
    throw ConfigError("fp4/nf4 require bits == 4");
  if (cfg.granularity == Granularity::Groupwise && cfg.group_size < 2)
    throw ConfigError("group_size must be >= 2");
  if (cfg.granularity == Granularity::Blockwise && cfg.block_size < 1)
    throw ConfigError("block_size must be >= 1");
  if (cfg.learner.max_iters < 1) throw ConfigError("learner.max_iters must be >= 1");
  if (!(cfg.learner.rel_tol >= 0)) throw ConfigError("learner.rel_tol must be >= 0");
  if (cfg.learner.restarts < 1) throw ConfigError("learner.restarts must be >= 1");
  if (cfg.codebook == CodebookKind::AnyN && cfg.granularity != Granularity::Rowwise &&
      cfg.granularity != Granularity::Groupwise)
    throw ConfigError("learned lookup tables are per-row; use rowwise or groupwise scaling");
  if (cfg.learner.init == LutInit::Nf4Seed && cfg.bits != 4)
    throw ConfigError("nf4 seeding needs a 16-entry table (bits == 4)");
}

// Throws NonFiniteError if any entry of m is NaN or infinite.
inline void require_finite(const Eigen::Ref<const Matf>& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteError(std::string(what) + ": non-finite value");
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
}  // namespace detail

// Counter-based generator: every draw is a pure function of (key, counter),
// so streams are identical across platforms, runs, and thread schedules.
class Rng {
 public:
  explicit Rng(uint64_t key) : key_(key) {}

  uint64_t next_u64() { return detail::splitmix64(key_ + 0xD1B54A32D192ED03ull * ++counter_); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  Real next_real() { return static_cast<Real>(next_double()); }

  // Uniform in [0, bound).
  Index next_index(Index bound) {
    double u = next_double();
    Index i = static_cast<Index>(u * static_cast<double>(bound));
    return i >= bound ? bound - 1 : i;
  }

  // Box-Muller. Used for synthetic data, not by the learner itself.
  double next_gaussian() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

// Stream keyed by (seed, row); distinct rows never share state, so row-level
// parallelism cannot perturb results.
inline Rng rng_for_row(uint64_t seed, Index row) {
  uint64_t key = detail::splitmix64(seed) ^
                 detail::splitmix64(0x9E3779B97F4A7C15ull * (static_cast<uint64_t>(row) + 1));
  return Rng(key);
}

}  // namespace anyq
