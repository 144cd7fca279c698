#include "anyq/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace anyq {

void KmProblem::validate() const {
  if (samples.size() != weights.size())
    throw ShapeError("KmProblem: samples and weights differ in length");
  if (samples.empty()) throw ShapeError("KmProblem: empty problem");
  bool any_positive = false;
  for (Real w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw StatsError("KmProblem: weights must be >= 0");
    any_positive |= w > 0;
  }
  if (!any_positive) throw StatsError("KmProblem: all sample weights are zero");
  for (Real x : samples)
    if (!std::isfinite(x)) throw NonFiniteError("KmProblem: non-finite sample");
}

Vecf build_sample_weights(const ScaleSet& s, Index row, const Vecf* stats, Weighting mode) {
  const Index cols = s.cols;
  if (stats) {
    if (stats->size() != cols)
      throw StatsError("sample weights: stats length " + std::to_string(stats->size()) +
                       " does not match row length " + std::to_string(cols));
    for (Index j = 0; j < cols; ++j)
      if (!((*stats)[j] >= 0) || !std::isfinite((*stats)[j]))
        throw StatsError("sample weights: negative or non-finite stats entry");
  }
  Vecf out(cols);
  switch (mode) {
    case Weighting::WeightsOnly:
      out.setOnes();
      return out;
    case Weighting::WeightsTimesActivations:
      for (Index j = 0; j < cols; ++j) out[j] = stats ? (*stats)[j] : Real(1);
      return out;
    case Weighting::WeightsTimesActivationsTimesScales:
      for (Index j = 0; j < cols; ++j) {
        Real e = stats ? (*stats)[j] : Real(1);
        out[j] = s.alphas[s.group_of(row, j)] * e;
      }
      return out;
  }
  throw ConfigError("unknown weighting mode");
}

namespace {

// Distinct sample values, ascending; used to pad degenerate seedings.
std::vector<double> distinct_values(const KmProblem& p) {
  std::vector<double> vals(p.samples.begin(), p.samples.end());
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  return vals;
}

// Index drawn with probability proportional to mass (sum > 0).
size_t sample_index(const std::vector<double>& mass, double total, Rng& rng) {
  double r = rng.next_double() * total;
  double acc = 0;
  size_t last_positive = 0;
  for (size_t i = 0; i < mass.size(); ++i) {
    if (mass[i] <= 0) continue;
    acc += mass[i];
    last_positive = i;
    if (r < acc) return i;
  }
  return last_positive;
}

void pad_with_distinct(std::vector<double>& centroids, int k, const std::vector<double>& distinct) {
  size_t cursor = 0;
  while (static_cast<int>(centroids.size()) < k) {
    centroids.push_back(distinct[cursor % distinct.size()]);
    ++cursor;
  }
}

std::vector<double> random_init(const KmProblem& p, int k, Rng& rng) {
  const size_t n = p.samples.size();
  std::vector<double> centroids;
  if (static_cast<size_t>(k) >= n) {
    for (Real x : p.samples) centroids.push_back(x);
    std::sort(centroids.begin(), centroids.end());
    pad_with_distinct(centroids, k, distinct_values(p));
    centroids.resize(k);
    return centroids;
  }
  // Partial Fisher-Yates over sample indices.
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  for (int t = 0; t < k; ++t) {
    size_t pick = static_cast<size_t>(t) + static_cast<size_t>(rng.next_index(static_cast<Index>(n - t)));
    std::swap(idx[t], idx[pick]);
    centroids.push_back(p.samples[idx[t]]);
  }
  return centroids;
}

std::vector<double> grid_seed_init(int k) {
  std::vector<double> centroids(k);
  int lo = -(k / 2);
  for (int q = 0; q < k; ++q) centroids[q] = lo + q;
  return centroids;
}

std::vector<double> nf4_seed_init(int k) {
  if (k != 16) throw ConfigError("nf4 seeding needs exactly 16 centroids");
  Codebook cb = nf4_table();
  return std::vector<double>(cb.values.begin(), cb.values.end());
}

struct LloydScratch {
  std::vector<double> d2;
  std::vector<double> sum_wx, sum_w, sum_x;
  std::vector<int> count;
};

double pair_cost(double x, double c) {
  double d = x - c;
  return d * d;
}

}  // namespace

std::vector<double> kmeans_pp_init(const KmProblem& p, int k, Rng& rng) {
  p.validate();
  if (k < 1) throw ConfigError("k must be >= 1");
  const size_t n = p.samples.size();

  std::vector<double> centroids;
  centroids.reserve(k);
  std::vector<double> mass(n);
  double total = 0;
  for (size_t i = 0; i < n; ++i) {
    mass[i] = p.weights[i];
    total += mass[i];
  }
  centroids.push_back(p.samples[sample_index(mass, total, rng)]);

  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centroids.size()) < k) {
    double c = centroids.back();
    for (size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], pair_cost(p.samples[i], c));

    total = 0;
    for (size_t i = 0; i < n; ++i) {
      mass[i] = static_cast<double>(p.weights[i]) * d2[i];
      total += mass[i];
    }
    if (total > 0) {
      centroids.push_back(p.samples[sample_index(mass, total, rng)]);
      continue;
    }
    // No weighted mass left: fall back to plain D^2, then to value padding.
    total = 0;
    for (size_t i = 0; i < n; ++i) {
      mass[i] = d2[i];
      total += mass[i];
    }
    if (total > 0) {
      centroids.push_back(p.samples[sample_index(mass, total, rng)]);
      continue;
    }
    pad_with_distinct(centroids, k, distinct_values(p));
  }
  return centroids;
}

namespace {

struct LloydRun {
  std::vector<double> centroids;
  std::vector<uint8_t> assignments;
  double loss = 0;
  int iters = 0;
};

uint8_t nearest_centroid(double x, const std::vector<double>& c) {
  size_t best = 0;
  double best_cost = pair_cost(x, c[0]);
  for (size_t q = 1; q < c.size(); ++q) {
    double cost = pair_cost(x, c[q]);
    if (cost < best_cost) {
      best_cost = cost;
      best = q;
    }
  }
  return static_cast<uint8_t>(best);
}

double total_cost(const KmProblem& p, const std::vector<double>& c,
                  const std::vector<uint8_t>& a) {
  double loss = 0;
  for (size_t i = 0; i < p.samples.size(); ++i)
    loss += static_cast<double>(p.weights[i]) * pair_cost(p.samples[i], c[a[i]]);
  return loss;
}

// One Lloyd descent from the given initial centroids.
LloydRun lloyd(const KmProblem& p, std::vector<double> centroids, const LearnerConfig& cfg) {
  const size_t n = p.samples.size();
  const int k = static_cast<int>(centroids.size());
  LloydRun run;
  run.assignments.assign(n, 0);

  LloydScratch scratch;
  scratch.sum_wx.assign(k, 0);
  scratch.sum_w.assign(k, 0);
  scratch.sum_x.assign(k, 0);
  scratch.count.assign(k, 0);

  double prev_pair_loss = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    // E-step: nearest centroid per sample.
    size_t changed = 0;
    for (size_t i = 0; i < n; ++i) {
      uint8_t q = nearest_centroid(p.samples[i], centroids);
      changed += q != run.assignments[i];
      run.assignments[i] = q;
    }
    double loss_e = total_cost(p, centroids, run.assignments);
    if (loss_e > prev_pair_loss)
      throw Error("internal: assignment step increased the weighted loss");
    if (cfg.check_invariants) {
      for (size_t i = 0; i < n; ++i)
        for (int q = 0; q < k; ++q)
          if (pair_cost(p.samples[i], centroids[q]) <
              pair_cost(p.samples[i], centroids[run.assignments[i]]))
            throw Error("internal: stale assignment after E-step");
    }

    // M-step: weighted mean per cluster (Lloyd update).
    std::fill(scratch.sum_wx.begin(), scratch.sum_wx.end(), 0.0);
    std::fill(scratch.sum_w.begin(), scratch.sum_w.end(), 0.0);
    std::fill(scratch.sum_x.begin(), scratch.sum_x.end(), 0.0);
    std::fill(scratch.count.begin(), scratch.count.end(), 0);
    for (size_t i = 0; i < n; ++i) {
      uint8_t q = run.assignments[i];
      double w = p.weights[i];
      double x = p.samples[i];
      scratch.sum_wx[q] += w * x;
      scratch.sum_w[q] += w;
      scratch.sum_x[q] += x;
      scratch.count[q] += 1;
    }
    std::vector<int> empties;
    for (int q = 0; q < k; ++q) {
      if (scratch.count[q] == 0) {
        empties.push_back(q);
      } else if (scratch.sum_w[q] > 0) {
        centroids[q] = scratch.sum_wx[q] / scratch.sum_w[q];
      } else {
        // Cluster of zero-weight samples: unweighted mean keeps it in place.
        centroids[q] = scratch.sum_x[q] / scratch.count[q];
      }
    }
    if (cfg.check_invariants) {
      for (int q = 0; q < k; ++q) {
        if (scratch.count[q] == 0 || scratch.sum_w[q] <= 0) continue;
        double mean = scratch.sum_wx[q] / scratch.sum_w[q];
        if (std::abs(centroids[q] - mean) > 1e-6 * std::max(1.0, std::abs(mean)))
          throw Error("internal: centroid is not the weighted cluster mean");
      }
    }

    // Empty-cluster repair: reseed at the worst-reconstructed sample.
    for (int q : empties) {
      double worst = -1;
      size_t worst_i = 0;
      for (size_t i = 0; i < n; ++i) {
        double err = static_cast<double>(p.weights[i]) *
                     pair_cost(p.samples[i], centroids[run.assignments[i]]);
        if (err > worst) {
          worst = err;
          worst_i = i;
        }
      }
      centroids[q] = p.samples[worst_i];
      run.assignments[worst_i] = static_cast<uint8_t>(q);
      changed += 1;
    }

    double loss_m = total_cost(p, centroids, run.assignments);
    if (loss_m > loss_e * (1 + 1e-12) + 1e-300)
      throw Error("internal: update step increased the weighted loss");

    bool stable = changed == 0 && iter > 0;
    bool tol_reached = std::isfinite(prev_pair_loss) &&
                       prev_pair_loss - loss_m <= static_cast<double>(cfg.rel_tol) * prev_pair_loss;
    prev_pair_loss = loss_m;
    if (stable || tol_reached || loss_m == 0) {
      ++iter;
      break;
    }
  }

  // Returned assignments are optimal for the returned centroids.
  for (size_t i = 0; i < n; ++i)
    run.assignments[i] = nearest_centroid(p.samples[i], centroids);
  run.centroids = std::move(centroids);
  run.loss = total_cost(p, run.centroids, run.assignments);
  run.iters = iter;
  return run;
}

}  // namespace

KmResult weighted_kmeans(const KmProblem& p, int k, const LearnerConfig& cfg, Rng& rng) {
  p.validate();
  if (k < 1) throw ConfigError("k must be >= 1");
  if (k > 256) throw ConfigError("k must fit an 8-bit code");

  LloydRun best;
  best.loss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    std::vector<double> init;
    switch (cfg.init) {
      case LutInit::KMeansPlusPlus: init = kmeans_pp_init(p, k, rng); break;
      case LutInit::Random: init = random_init(p, k, rng); break;
      case LutInit::IntGridSeed: init = grid_seed_init(k); break;
      case LutInit::Nf4Seed: init = nf4_seed_init(k); break;
    }
    LloydRun run = lloyd(p, std::move(init), cfg);
    if (run.loss < best.loss) best = std::move(run);
  }

  KmResult out;
  out.centroids = std::move(best.centroids);
  out.assignments = std::move(best.assignments);
  out.loss = best.loss;
  out.iters = best.iters;
  return out;
}

RowQuant learn_row_lut(std::span<const Real> ws_row, std::span<const Real> weights,
                       const LearnerConfig& cfg, int bits, Rng& rng) {
  if (ws_row.size() != weights.size())
    throw ShapeError("learn_row_lut: row and weights differ in length");
  KmProblem p;
  p.samples.assign(ws_row.begin(), ws_row.end());
  p.weights.assign(weights.begin(), weights.end());
  const int k = 1 << bits;
  KmResult km = weighted_kmeans(p, k, cfg, rng);

  // Sort the table ascending and remap codes accordingly (stable on ties).
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return km.centroids[a] < km.centroids[b]; });
  std::vector<uint8_t> rank(k);
  for (int pos = 0; pos < k; ++pos) rank[order[pos]] = static_cast<uint8_t>(pos);

  RowQuant rq;
  rq.lut.values.resize(k);
  for (int pos = 0; pos < k; ++pos)
    rq.lut.values[pos] = static_cast<Real>(km.centroids[order[pos]]);
  rq.codes.resize(p.samples.size());
  for (size_t i = 0; i < p.samples.size(); ++i) rq.codes[i] = rank[km.assignments[i]];
  rq.loss = km.loss;
  return rq;
}

namespace {

void quantize_rows(const Matf& ws, const ScaleSet& scales, const QuantConfig& cfg,
                   const Vecf* exj, Index row_begin, Index row_end, CodeMat& codes,
                   std::vector<Real>& luts) {
  const Index cols = ws.cols();
  const Index k = Index(1) << cfg.bits;
  for (Index i = row_begin; i < row_end; ++i) {
    Vecf weights = build_sample_weights(scales, i, exj, cfg.learner.weighting);
    if (!(weights.array() > 0).any()) weights.setOnes();  // fully dead channels
    Rng rng = rng_for_row(cfg.seed, i);
    RowQuant rq = learn_row_lut({ws.data() + i * cols, static_cast<size_t>(cols)},
                                {weights.data(), static_cast<size_t>(cols)}, cfg.learner,
                                cfg.bits, rng);
    std::copy(rq.lut.values.begin(), rq.lut.values.end(), luts.begin() + i * k);
    for (Index j = 0; j < cols; ++j) codes(i, j) = rq.codes[static_cast<size_t>(j)];
  }
}

}  // namespace

QuantizedTensor quantize_any(const Eigen::Ref<const Matf>& w, const QuantConfig& cfg,
                             const Vecf* exj, int threads) {
  if (cfg.codebook != CodebookKind::AnyN)
    throw ConfigError("quantize_any requires the learned codebook");
  validate(cfg, w.rows(), w.cols());
  require_finite(w, "quantize_any");

  // The learned table lives in scaled space, so only the span of the scaled
  // domain matters; the integer grid of the same bit width fixes it.
  Codebook grid = int_grid(cfg.bits, cfg.int_range_shifted);
  ScaleSet scales = compute_scales(w, cfg, grid.qmin(), grid.qmax());
  Matf ws = scale_weights(w, scales);

  const Index rows = w.rows();
  const Index k = Index(1) << cfg.bits;
  CodeMat codes(rows, w.cols());
  std::vector<Real> luts(static_cast<size_t>(rows * k));

  int nthreads = threads;
  if (nthreads <= 0)
    nthreads = static_cast<int>(std::thread::hardware_concurrency());
  nthreads = std::max(1, std::min<int>(nthreads, static_cast<int>(rows)));

  if (nthreads == 1) {
    quantize_rows(ws, scales, cfg, exj, 0, rows, codes, luts);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nthreads);
    Index chunk = (rows + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
      Index r0 = t * chunk;
      Index r1 = std::min(rows, r0 + chunk);
      if (r0 >= r1) break;
      pool.emplace_back([&, t, r0, r1] {
        try {
          quantize_rows(ws, scales, cfg, exj, r0, r1, codes, luts);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  QuantizedTensor qt;
  qt.rows = rows;
  qt.cols = w.cols();
  qt.cfg = cfg;
  qt.layout = Layout::RowMajor;
  qt.tile_k = 1;
  qt.codes = pack_codes(codes, cfg.bits);
  qt.luts = std::move(luts);
  qt.scales = std::move(scales);
  return qt;
}

}  // namespace anyq
