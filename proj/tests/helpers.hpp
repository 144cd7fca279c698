#pragma once

// Shared test data generators, all driven by the library RNG so every test is
// reproducible.

#include "anyq/core.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace anyq::testing {

inline Matf gaussian(Index rows, Index cols, uint64_t seed, Real scale = 1) {
  Matf m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    Rng rng = rng_for_row(seed, i);
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * static_cast<Real>(rng.next_gaussian());
  }
  return m;
}

inline Matf uniform(Index rows, Index cols, uint64_t seed, Real lo, Real hi) {
  Matf m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    Rng rng = rng_for_row(seed, i);
    for (Index j = 0; j < cols; ++j)
      m(i, j) = lo + (hi - lo) * static_cast<Real>(rng.next_double());
  }
  return m;
}

// Values on the dyadic grid step * [-span, span]; sums and shifts of such
// values below the mantissa limit are exact in fp32.
inline Matf dyadic(Index rows, Index cols, uint64_t seed, int span = 1024,
                   Real step = Real(1.0 / 1024.0)) {
  Matf m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    Rng rng = rng_for_row(seed, i);
    for (Index j = 0; j < cols; ++j) {
      auto t = static_cast<long>(rng.next_index(2 * span + 1)) - span;
      m(i, j) = step * static_cast<Real>(t);
    }
  }
  return m;
}

// Gaussian bulk with sparse large outliers, the shape trained weight rows
// actually have.
inline Matf heavy_tailed(Index rows, Index cols, uint64_t seed, Real outlier_rate = 0.01f,
                         Real outlier_gain = 8) {
  Matf m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    Rng rng = rng_for_row(seed, i);
    for (Index j = 0; j < cols; ++j) {
      Real v = static_cast<Real>(rng.next_gaussian());
      if (rng.next_double() < outlier_rate) v *= outlier_gain;
      m(i, j) = v;
    }
  }
  return m;
}

// Strongly non-uniform per-channel activation magnitudes (lognormal-ish).
inline Vecf synthetic_stats(Index cols, uint64_t seed) {
  Vecf v(cols);
  Rng rng = rng_for_row(seed, 0);
  for (Index j = 0; j < cols; ++j)
    v[j] = static_cast<Real>(std::exp(1.2 * rng.next_gaussian()));
  return v;
}

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("anyq_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace anyq::testing
