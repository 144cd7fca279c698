// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails.

#include "anyq/calibration.hpp"
#include "anyq/codebooks.hpp"
#include "anyq/dense_io.hpp"
#include "anyq/eval.hpp"
#include "anyq/learner.hpp"
#include "anyq/pack.hpp"
#include "anyq/qgemm.hpp"
#include "anyq/quantize.hpp"

#include "helpers.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

using namespace anyq;
using anyq::testing::dyadic;
using anyq::testing::gaussian;
using anyq::testing::synthetic_stats;
using anyq::testing::TempDir;

namespace {

int g_failures = 0;

void criterion(int id, const std::string& name, const std::function<std::string()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = true;
  try {
    detail = body();
  } catch (const std::exception& e) {
    pass = false;
    detail = std::string("exception: ") + e.what();
  }
  if (!detail.empty() && detail.rfind("FAIL", 0) == 0) pass = false;
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("[%s] %2d. %-28s %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string pass_detail(const char* fmt, ...) {
  char buf[256];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  return buf;
}

std::string fail_detail(const char* fmt, ...) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "FAIL ");
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf + 5, sizeof(buf) - 5, fmt, ap);
  va_end(ap);
  return buf;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// --------------------------------------------------------------------------
// 1. Bits accounting
// --------------------------------------------------------------------------

std::string run_bits_accounting() {
  QuantConfig any4;
  any4.codebook = CodebookKind::AnyN;
  any4.bits = 4;
  any4.granularity = Granularity::Groupwise;
  any4.group_size = 128;
  QuantConfig int4 = any4;
  int4.codebook = CodebookKind::IntGrid;

  if (storage_bits_per_entry(any4, 2, 4096) != 4.3125) return fail_detail("any4 accounting");
  if (storage_bits_per_entry(int4, 2, 4096) != 4.25) return fail_detail("int4 accounting");
  if (storage_bits_per_entry(any4, 2, 4096) - storage_bits_per_entry(int4, 2, 4096) != 0.0625)
    return fail_detail("LUT overhead");

  // Real files must reproduce the same arithmetic from their section sizes.
  TempDir dir("acc_bits");
  Matf w = gaussian(2, 4096, 1);
  QuantizedTensor qa = quantize_any(w, any4);
  write_file(qa, dir.file("a.anyq"));
  SizeBreakdown sa = file_sizes(qa);
  if (read_bytes(dir.file("a.anyq")).size() != sa.total())
    return fail_detail("any4 file size mismatch");
  if (sa.bits_per_entry(2, 4096) != 4.3125) return fail_detail("any4 file bits/entry");

  QuantizedTensor qi = quantize_fixed(w, int4);
  write_file(qi, dir.file("i.anyq"));
  SizeBreakdown si = file_sizes(qi);
  if (read_bytes(dir.file("i.anyq")).size() != si.total())
    return fail_detail("int4 file size mismatch");
  if (si.bits_per_entry(2, 4096) != 4.25) return fail_detail("int4 file bits/entry");
  if (sa.bits_per_entry(2, 4096) - si.bits_per_entry(2, 4096) != 0.0625)
    return fail_detail("file LUT overhead");
  return pass_detail("4.3125 / 4.25 / 0.0625 exact, in accounting and on disk");
}

// --------------------------------------------------------------------------
// 2. K-means exhaustive oracle
// --------------------------------------------------------------------------

double brute_force_two_means(const std::vector<Real>& x, const std::vector<Real>& w) {
  const size_t n = x.size();
  double best = std::numeric_limits<double>::infinity();
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    double loss = 0;
    for (int cluster = 0; cluster < 2; ++cluster) {
      double sw = 0, swx = 0;
      for (size_t i = 0; i < n; ++i) {
        if (((mask >> i) & 1) != static_cast<uint32_t>(cluster)) continue;
        sw += w[i];
        swx += static_cast<double>(w[i]) * x[i];
      }
      if (sw <= 0) continue;
      double c = swx / sw;
      for (size_t i = 0; i < n; ++i) {
        if (((mask >> i) & 1) != static_cast<uint32_t>(cluster)) continue;
        double d = x[i] - c;
        loss += static_cast<double>(w[i]) * d * d;
      }
    }
    best = std::min(best, loss);
  }
  return best;
}

std::string run_kmeans_oracle() {
  LearnerConfig cfg;
  cfg.restarts = 16;
  int hits = 0;
  double worst_gap = 0;
  for (int trial = 0; trial < 500; ++trial) {
    Rng gen = rng_for_row(42001, trial);
    size_t n = 2 + gen.next_index(7);
    KmProblem p;
    for (size_t i = 0; i < n; ++i) {
      p.samples.push_back(static_cast<Real>(gen.next_gaussian() * 4));
      p.weights.push_back(0.05f + static_cast<Real>(gen.next_double()));
    }
    Rng rng = rng_for_row(42002, trial);
    KmResult r = weighted_kmeans(p, 2, cfg, rng);
    double best = brute_force_two_means(p.samples, p.weights);
    double gap = best > 0 ? (r.loss - best) / best : r.loss;
    worst_gap = std::max(worst_gap, gap);
    if (gap <= 1e-9) ++hits;
  }
  if (hits != 500) return fail_detail("%d/500 at the optimum, worst gap %.3g", hits, worst_gap);
  return pass_detail("500/500 match the exhaustive optimum (worst gap %.3g)", worst_gap);
}

// --------------------------------------------------------------------------
// 3. Descent and fixed-point invariants
// --------------------------------------------------------------------------

std::string run_descent_invariants() {
  int ran = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Rng gen = rng_for_row(43001, trial);
    LearnerConfig cfg;
    cfg.check_invariants = true;
    cfg.restarts = 1 + static_cast<int>(gen.next_index(3));
    switch (gen.next_index(3)) {
      case 0: cfg.init = LutInit::KMeansPlusPlus; break;
      case 1: cfg.init = LutInit::Random; break;
      default: cfg.init = LutInit::IntGridSeed; break;
    }
    int k = 1 << (1 + gen.next_index(4));  // 2..16
    size_t n = static_cast<size_t>(k) + gen.next_index(80);
    KmProblem p;
    for (size_t i = 0; i < n; ++i) {
      p.samples.push_back(static_cast<Real>(gen.next_gaussian() * 5));
      bool dead = gen.next_double() < 0.1;
      p.weights.push_back(dead ? 0.0f : 0.01f + static_cast<Real>(gen.next_double()));
    }
    p.weights[0] = 1.0f;
    Rng rng = rng_for_row(43002, trial);
    weighted_kmeans(p, k, cfg, rng);  // throws on any in-loop violation
    ++ran;
  }
  return pass_detail("%d/1000 runs with in-loop assertions clean", ran);
}

// --------------------------------------------------------------------------
// 4. Offset cancellation
// --------------------------------------------------------------------------

std::string run_offset_cancellation() {
  int ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Matf w = dyadic(8, 64, 44000 + trial);
    QuantConfig cfg;
    cfg.codebook = CodebookKind::AnyN;
    cfg.granularity = Granularity::Groupwise;
    cfg.group_size = 16;
    cfg.symmetric = false;
    cfg.seed = 44500 + trial;
    QuantizedTensor base = quantize_any(w, cfg);

    // Exactly representable per-group constant shifts.
    Rng rng = rng_for_row(44900, trial);
    Vecf shift(base.scales.num_groups());
    for (Index g = 0; g < shift.size(); ++g)
      shift[g] = Real(1.0 / 1024.0) *
                 static_cast<Real>(static_cast<long>(rng.next_index(8193)) - 4096);
    Matf moved = w;
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < w.cols(); ++j) moved(i, j) += shift[base.scales.group_of(i, j)];

    QuantizedTensor shifted = quantize_any(moved, cfg);
    if (base.codes == shifted.codes && base.luts == shifted.luts) ++ok;
  }
  if (ok != 200) return fail_detail("%d/200 matrices unchanged", ok);
  return pass_detail("200/200 code arrays and LUTs identical under group shifts");
}

// --------------------------------------------------------------------------
// 5. Losslessness with few distinct values
// --------------------------------------------------------------------------

std::string run_losslessness() {
  int ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Rng gen = rng_for_row(45001, trial);
    int bits = 2 + static_cast<int>(gen.next_index(3));  // 2..4
    Index rows = 2 + gen.next_index(4);
    Index cols = 16 + gen.next_index(48);
    Index levels = 1 + gen.next_index(Index(1) << bits);
    Matf w(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      std::vector<Real> vals(levels);
      for (auto& v : vals) v = static_cast<Real>(gen.next_gaussian() * 2);
      for (Index j = 0; j < cols; ++j) w(i, j) = vals[gen.next_index(levels)];
    }
    QuantConfig cfg;
    cfg.codebook = CodebookKind::AnyN;
    cfg.bits = bits;
    cfg.granularity = Granularity::Rowwise;
    cfg.seed = 45100 + trial;
    QuantizedTensor qt = quantize_any(w, cfg);
    auto [mse, rel] = weight_error(w, qt);
    (void)mse;
    if (rel <= 1e-6) ++ok;
  }
  if (ok != 200) return fail_detail("%d/200 within 1e-6 relative", ok);
  return pass_detail("200/200 reconstruct within 1e-6 relative Frobenius");
}

// --------------------------------------------------------------------------
// 6. Format ordering
// --------------------------------------------------------------------------

std::string run_format_ordering() {
  int beats_nf4 = 0, beats_int4 = 0, beats_fp4 = 0;
  const std::vector<std::string> formats{"int4", "fp4", "nf4", "any4"};
  for (int trial = 0; trial < 50; ++trial) {
    Matf w = gaussian(128, 512, 46000 + trial);
    ActivationStats stats;
    stats.entries["w"] = synthetic_stats(512, 46500 + trial);
    QuantConfig base;
    base.granularity = Granularity::Groupwise;
    base.group_size = 128;
    base.seed = 46900 + trial;
    CompareOptions opts;
    opts.eval_rows = 32;
    opts.eval_seed = 47000 + trial;
    EvalReport report = compare_formats(w, formats, base, &stats, "w", opts);
    double any4 = report.rows[3].output_mse;
    beats_int4 += any4 <= report.rows[0].output_mse;
    beats_fp4 += any4 <= report.rows[1].output_mse;
    beats_nf4 += any4 <= report.rows[2].output_mse;
  }
  if (beats_nf4 < 45 || beats_int4 < 45 || beats_fp4 < 45)
    return fail_detail("any4 wins: vs nf4 %d/50, vs int4 %d/50, vs fp4 %d/50", beats_nf4,
                       beats_int4, beats_fp4);
  return pass_detail("any4 wins: vs nf4 %d/50, vs int4 %d/50, vs fp4 %d/50", beats_nf4,
                     beats_int4, beats_fp4);
}

// --------------------------------------------------------------------------
// 7. Group-size robustness
// --------------------------------------------------------------------------

std::string run_group_size_robustness() {
  const std::vector<int> sizes{64, 128, 256, 1024};
  const std::vector<std::string> formats{"int4", "fp4", "nf4", "any4"};
  int wins = 0;
  for (int trial = 0; trial < 20; ++trial) {
    // Gaussian bulk plus sparse outliers: coarse groups then stretch the
    // scale range, which is what large group sizes punish.
    Matf w = anyq::testing::heavy_tailed(128, 1024, 47500 + trial);
    ActivationStats stats;
    stats.entries["w"] = synthetic_stats(1024, 47700 + trial);

    double ratio[4] = {0, 0, 0, 0};
    for (size_t f = 0; f < formats.size(); ++f) {
      double by_size[4] = {0, 0, 0, 0};
      for (size_t s = 0; s < sizes.size(); ++s) {
        QuantConfig base;
        base.granularity = Granularity::Groupwise;
        base.group_size = sizes[s];
        base.seed = 47900 + trial;
        CompareOptions opts;
        opts.eval_rows = 32;
        opts.eval_seed = 48000 + trial;
        EvalReport r = compare_formats(w, {formats[f]}, base, &stats, "w", opts);
        by_size[s] = r.rows[0].output_mse;
      }
      ratio[f] = by_size[3] / by_size[0];  // degradation g=64 -> g=1024
    }
    bool smallest = ratio[3] <= ratio[0] && ratio[3] <= ratio[1] && ratio[3] <= ratio[2];
    wins += smallest;
  }
  if (wins < 16) return fail_detail("any4 degrades least in %d/20 trials", wins);
  return pass_detail("any4 degrades least in %d/20 trials", wins);
}

// --------------------------------------------------------------------------
// 8. Weighting-mode ablation
// --------------------------------------------------------------------------

std::string run_weighting_ablation() {
  int wins = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index dim = 128, out = 64;
    Vecf channel_scale = synthetic_stats(dim, 48500 + trial);
    Matf inputs = eval_activations(64, dim, &channel_scale, 48600 + trial);

    ToyModel model;
    model.input_dim = dim;
    ToyLayer layer;
    layer.name = "l0";
    layer.weight = gaussian(out, dim, 48700 + trial, 0.3f);
    layer.act = Nonlinearity::Relu;
    model.layers.push_back(layer);
    ActivationStats stats = collect_stats(model, inputs);

    QuantConfig cfg;
    cfg.codebook = CodebookKind::AnyN;
    cfg.granularity = Granularity::Groupwise;
    cfg.group_size = 64;
    cfg.seed = 48800 + trial;

    cfg.learner.weighting = Weighting::WeightsTimesActivationsTimesScales;
    QuantizedTensor full = quantize_any(model.layers[0].weight, cfg, &stats.entries["l0"]);
    cfg.learner.weighting = Weighting::WeightsOnly;
    QuantizedTensor plain = quantize_any(model.layers[0].weight, cfg, &stats.entries["l0"]);

    Matf x = eval_activations(64, dim, &stats.entries["l0"], 48900 + trial);
    double mse_full = output_error(model.layers[0].weight, full, x);
    double mse_plain = output_error(model.layers[0].weight, plain, x);
    wins += mse_full <= mse_plain;
  }
  if (wins < 40) return fail_detail("full weighting wins %d/50", wins);
  return pass_detail("full weighting wins %d/50", wins);
}

// --------------------------------------------------------------------------
// 9. Init ablation
// --------------------------------------------------------------------------

std::string run_init_ablation() {
  double mean_pp = 0, mean_rand = 0, mean_grid = 0;
  const int rows = 200;
  for (int trial = 0; trial < rows; ++trial) {
    Matf w = gaussian(1, 256, 49000 + trial);
    QuantConfig cfg;
    cfg.granularity = Granularity::Rowwise;
    Codebook grid = int_grid(4);
    ScaleSet s = compute_scales(w, cfg, grid.qmin(), grid.qmax());
    Matf ws = scale_weights(w, s);
    std::vector<Real> row(ws.data(), ws.data() + 256);
    std::vector<Real> ones(256, 1.0f);

    for (LutInit init : {LutInit::KMeansPlusPlus, LutInit::Random, LutInit::IntGridSeed}) {
      LearnerConfig lc;
      lc.init = init;
      Rng rng = rng_for_row(49300, trial);
      RowQuant rq = learn_row_lut(row, ones, lc, 4, rng);
      double& acc = init == LutInit::KMeansPlusPlus ? mean_pp
                    : init == LutInit::Random       ? mean_rand
                                                    : mean_grid;
      acc += rq.loss / rows;
    }
  }
  bool ok = mean_pp <= mean_rand + 1e-12 && mean_pp <= mean_grid + 1e-12;
  if (!ok)
    return fail_detail("mean loss kmeans++ %.6g, random %.6g, int-grid %.6g", mean_pp, mean_rand,
                       mean_grid);
  return pass_detail("mean loss kmeans++ %.6g <= random %.6g, int-grid %.6g", mean_pp, mean_rand,
                     mean_grid);
}

// --------------------------------------------------------------------------
// 10. GEMM equivalence
// --------------------------------------------------------------------------

std::string run_gemm_equivalence() {
  const std::vector<std::string> formats{"int4", "fp4", "nf4", "any4"};
  const std::vector<int> tiles{1, 2, 8, 32};
  int ok = 0;
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Rng gen = rng_for_row(50001, trial);
    Index m = 1 + gen.next_index(16);
    Index k = 8 + gen.next_index(249);
    Index n = 8 + gen.next_index(249);
    const std::string& fmt = formats[trial % formats.size()];
    bool tiled = (trial / 4) % 2 == 1;
    int tile_k = tiles[(trial / 8) % tiles.size()];

    Matf w = gaussian(n, k, 50100 + trial);
    Matf x = gaussian(m, k, 50200 + trial);
    QuantConfig cfg;
    cfg.granularity = Granularity::Groupwise;
    cfg.group_size = static_cast<int>(std::min<Index>(64, k));
    cfg.seed = 50300 + trial;
    apply_format(cfg, fmt);
    QuantizedTensor qt = quantize(w, cfg);
    if (tiled) qt = to_ktiled(qt, tile_k);

    Matf ref = gemm_reference(x, qt);
    Matf fused = gemm_fused(x, qt, make_plan(x, qt));
    double trial_worst = 0;
    for (Index r = 0; r < m; ++r)
      for (Index i = 0; i < n; ++i) {
        double rel = std::abs(static_cast<double>(fused(r, i)) - ref(r, i)) /
                     std::max(1e-30, std::abs(static_cast<double>(ref(r, i))));
        trial_worst = std::max(trial_worst, rel);
      }
    worst = std::max(worst, trial_worst);
    if (trial_worst <= 1e-5) ++ok;
  }
  if (ok != 1000) return fail_detail("%d/1000 within 1e-5 (worst %.3g)", ok, worst);
  return pass_detail("1000/1000 within 1e-5 relative (worst %.3g)", worst);
}

// --------------------------------------------------------------------------
// 11. Determinism across threads and processes
// --------------------------------------------------------------------------

std::string run_determinism() {
  TempDir dir("acc_determinism");
  for (int trial = 0; trial < 20; ++trial) {
    Matf w = gaussian(16, 64, 51000 + trial);
    QuantConfig cfg;
    cfg.codebook = CodebookKind::AnyN;
    cfg.granularity = Granularity::Groupwise;
    cfg.group_size = 16;
    cfg.seed = 51100 + trial;

    QuantizedTensor one = quantize_any(w, cfg, nullptr, 1);
    QuantizedTensor eight = quantize_any(w, cfg, nullptr, 8);
    std::string p1 = dir.file("one.anyq"), p8 = dir.file("eight.anyq");
    write_file(one, p1);
    write_file(eight, p8);
    if (read_bytes(p1) != read_bytes(p8))
      return fail_detail("thread counts diverged on trial %d", trial);

    // Two separate CLI processes must agree byte for byte.
    std::string wpath = dir.file("w.anyt");
    write_dense(w, wpath);
    std::string args = std::string(" quantize --weights ") + wpath +
                       " --format any4 --group-size 16 --seed " +
                       std::to_string(cfg.seed) + " --out ";
    std::string pa = dir.file("a.anyq"), pb = dir.file("b.anyq");
    std::string quiet = " 2> /dev/null";
    if (std::system(("ANYQ_THREADS=1 " + std::string(ANYQ_CLI_PATH) + args + pa + quiet).c_str()))
      return fail_detail("CLI run 1 failed on trial %d", trial);
    if (std::system(("ANYQ_THREADS=8 " + std::string(ANYQ_CLI_PATH) + args + pb + quiet).c_str()))
      return fail_detail("CLI run 2 failed on trial %d", trial);
    if (read_bytes(pa) != read_bytes(pb))
      return fail_detail("process runs diverged on trial %d", trial);
    if (read_bytes(pa) != read_bytes(p1))
      return fail_detail("CLI and in-process bytes diverged on trial %d", trial);
  }
  return pass_detail("20/20 byte-identical across 1/8 threads and process runs");
}

// --------------------------------------------------------------------------
// 12. Serialization robustness
// --------------------------------------------------------------------------

QuantizedTensor random_tensor(uint64_t seed) {
  Rng gen = rng_for_row(seed, 0);
  QuantizedTensor qt;
  qt.rows = 1 + gen.next_index(12);
  qt.cols = 2 + gen.next_index(70);
  QuantConfig cfg;
  const int bit_choices[4] = {2, 3, 4, 8};
  cfg.bits = bit_choices[gen.next_index(4)];
  switch (gen.next_index(4)) {
    case 0: cfg.codebook = CodebookKind::IntGrid; break;
    case 1: cfg.codebook = cfg.bits == 4 ? CodebookKind::Fp4 : CodebookKind::IntGrid; break;
    case 2: cfg.codebook = cfg.bits == 4 ? CodebookKind::Nf4 : CodebookKind::IntGrid; break;
    default: cfg.codebook = CodebookKind::AnyN; break;
  }
  switch (gen.next_index(5)) {
    case 0: cfg.granularity = Granularity::Tensorwise; break;
    case 1: cfg.granularity = Granularity::Rowwise; break;
    case 2: cfg.granularity = Granularity::Columnwise; break;
    case 3: cfg.granularity = Granularity::Groupwise; break;
    default: cfg.granularity = Granularity::Blockwise; break;
  }
  if (cfg.codebook == CodebookKind::AnyN &&
      (cfg.granularity != Granularity::Rowwise && cfg.granularity != Granularity::Groupwise))
    cfg.granularity = Granularity::Rowwise;
  cfg.group_size = 2 + static_cast<int>(gen.next_index(40));
  cfg.block_size = 1 + static_cast<int>(gen.next_index(6));
  cfg.symmetric = gen.next_double() < 0.5;
  cfg.seed = gen.next_u64();
  qt.cfg = cfg;

  Matf w(qt.rows, qt.cols);
  for (Index i = 0; i < qt.rows; ++i)
    for (Index j = 0; j < qt.cols; ++j) w(i, j) = static_cast<Real>(gen.next_gaussian());
  if (cfg.codebook == CodebookKind::AnyN) {
    cfg.learner.max_iters = 8;  // speed; any converged state serializes the same way
    qt = quantize_any(w, cfg);
  } else {
    qt = quantize_fixed(w, cfg);
  }
  qt.lut_store = gen.next_double() < 0.5 ? Store16::Fp16 : Store16::Bf16;
  qt.scale_store = gen.next_double() < 0.5 ? Store16::Fp16 : Store16::Fp32;
  if (gen.next_double() < 0.3) qt = to_ktiled(qt, 1 + static_cast<int>(gen.next_index(8)));
  return qt;
}

std::string run_serialization() {
  TempDir dir("acc_serialization");
  for (int trial = 0; trial < 500; ++trial) {
    QuantizedTensor qt = random_tensor(52000 + trial);
    std::string p1 = dir.file("x.anyq"), p2 = dir.file("y.anyq");
    write_file(qt, p1);
    QuantizedTensor loaded = read_file(p1);
    write_file(loaded, p2);
    if (read_bytes(p1) != read_bytes(p2))
      return fail_detail("rewrite differs on trial %d", trial);
  }

  // Each corruption class must raise its designated error.
  QuantizedTensor qt = random_tensor(53042);
  std::string path = dir.file("c.anyq");
  write_file(qt, path);
  std::string good = read_bytes(path);
  auto expect = [&](const std::string& bytes, auto tag, const char* what) -> bool {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    try {
      read_file(path);
    } catch (const std::decay_t<decltype(tag)>&) {
      return true;
    } catch (...) {
      std::fprintf(stderr, "wrong error class for %s\n", what);
      return false;
    }
    std::fprintf(stderr, "no error for %s\n", what);
    return false;
  };

  std::string bad = good;
  bad[1] = 'X';
  if (!expect(bad, MagicError{""}, "magic")) return fail_detail("magic class");
  bad = good;
  bad[4] = 3;
  if (!expect(bad, VersionError{""}, "version")) return fail_detail("version class");
  if (!expect(good.substr(0, good.size() - 3), TruncatedError{""}, "truncation"))
    return fail_detail("truncation class");
  if (!expect(good.substr(0, 64), TruncatedError{""}, "short header"))
    return fail_detail("short header class");

  // Bad code: fp4 has 15 valid codes, so a 0xFF code byte must be caught.
  QuantConfig fp4cfg;
  fp4cfg.codebook = CodebookKind::Fp4;
  fp4cfg.granularity = Granularity::Rowwise;
  Matf w = gaussian(2, 8, 999);
  QuantizedTensor fq = quantize_fixed(w, fp4cfg);
  write_file(fq, path);
  std::string fbytes = read_bytes(path);
  fbytes[120] = static_cast<char>(0xFF);
  if (!expect(fbytes, CodeRangeError{""}, "bad code")) return fail_detail("bad code class");

  return pass_detail("500/500 rewrites byte-identical; all corruption classes typed");
}

}  // namespace

int main() {
  std::printf("anyq acceptance suite\n");
  criterion(1, "bits-accounting", run_bits_accounting);
  criterion(2, "kmeans-oracle", run_kmeans_oracle);
  criterion(3, "descent-invariants", run_descent_invariants);
  criterion(4, "offset-cancellation", run_offset_cancellation);
  criterion(5, "losslessness", run_losslessness);
  criterion(6, "format-ordering", run_format_ordering);
  criterion(7, "group-size-robustness", run_group_size_robustness);
  criterion(8, "weighting-ablation", run_weighting_ablation);
  criterion(9, "init-ablation", run_init_ablation);
  criterion(10, "gemm-equivalence", run_gemm_equivalence);
  criterion(11, "determinism", run_determinism);
  criterion(12, "serialization", run_serialization);
  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all 12 criteria passed\n");
  return 0;
}
