// anyq command-line tool: calibrate, quantize, dequantize, eval, bench,
// inspect. Exit codes: 0 success, 1 usage error, 2 data error.

#include "anyq/dense_io.hpp"
#include "anyq/eval.hpp"
#include "anyq/learner.hpp"
#include "anyq/pack.hpp"
#include "anyq/qgemm.hpp"
#include "anyq/quantize.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

using namespace anyq;
using nlohmann::json;

int resolve_threads(int requested) {
  int threads = requested;
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads <= 0) threads = 1;
  if (const char* cap = std::getenv("ANYQ_THREADS")) {
    int limit = std::atoi(cap);
    if (limit > 0) threads = std::min(threads, limit);
  }
  return threads;
}

std::string slurp_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

json load_config(const std::string& path) {
  try {
    return json::parse(slurp_text(path));
  } catch (const json::exception& e) {
    throw ConfigError("malformed config file: " + std::string(e.what()));
  }
}

// Config-file values fill in only options the user did not pass explicitly.
template <typename T>
void fill_from_config(const json& cfg, const CLI::Option* opt, const char* key, T& target) {
  if (opt && opt->count() > 0) return;
  if (!cfg.contains(key)) return;
  try {
    target = cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

struct QuantFlags {
  std::string weights, out, stats_path, module_name, config_path;
  std::string format = "int4";
  std::string granularity = "groupwise";
  std::string weighting = "full";
  std::string init = "kmeans++";
  std::string lut_store = "fp16";
  std::string scale_store = "fp16";
  std::string int_range = "default";
  int group_size = 128;
  int block_size = 1;
  int tile_k = 0;
  int max_iters = 100;
  int restarts = 1;
  int threads = 0;
  float rel_tol = 1e-6f;
  bool symmetric = false;
  uint64_t seed = 0;
};

QuantConfig build_config(const QuantFlags& f) {
  QuantConfig cfg;
  apply_format(cfg, f.format);
  cfg.granularity = parse_granularity(f.granularity);
  cfg.group_size = f.group_size;
  cfg.block_size = f.block_size;
  cfg.symmetric = f.symmetric;
  cfg.seed = f.seed;
  if (f.int_range == "shifted")
    cfg.int_range_shifted = true;
  else if (f.int_range != "default")
    throw ConfigError("--int-range must be 'default' or 'shifted'");
  cfg.learner.weighting = parse_weighting(f.weighting);
  cfg.learner.init = parse_init(f.init);
  cfg.learner.max_iters = f.max_iters;
  cfg.learner.restarts = f.restarts;
  cfg.learner.rel_tol = f.rel_tol;
  return cfg;
}

void add_quant_flags(CLI::App* sub, QuantFlags& f,
                     std::map<std::string, const CLI::Option*>& opts) {
  opts["format"] = sub->add_option("--format", f.format,
                                   "int4|fp4|nf4|any4|any3|any2 (also int2/int3/int8/any8)");
  opts["group_size"] = sub->add_option("--group-size", f.group_size, "groupwise group length");
  opts["granularity"] = sub->add_option(
      "--granularity", f.granularity, "tensorwise|rowwise|columnwise|groupwise|blockwise");
  opts["block_size"] = sub->add_option("--block-size", f.block_size, "blockwise tile side");
  opts["symmetric"] = sub->add_flag("--symmetric", f.symmetric, "symmetric (zero-offset) scaling");
  opts["seed"] = sub->add_option("--seed", f.seed, "learner seed");
  opts["weighting"] = sub->add_option("--weighting", f.weighting,
                                      "k-means sample weighting: weights|weights-activations|full");
  opts["init"] = sub->add_option("--init", f.init, "kmeans++|random|int-grid|nf4");
  opts["max_iters"] = sub->add_option("--max-iters", f.max_iters, "learner iteration cap");
  opts["restarts"] = sub->add_option("--restarts", f.restarts, "learner restarts per row");
  opts["rel_tol"] = sub->add_option("--rel-tol", f.rel_tol, "learner convergence tolerance");
  opts["int_range"] = sub->add_option("--int-range", f.int_range,
                                      "integer grid convention: default|shifted");
  sub->add_option("--stats", f.stats_path, "activation stats file");
  sub->add_option("--module", f.module_name, "module name inside the stats file");
  sub->add_option("--threads", f.threads, "worker threads (0 = auto; ANYQ_THREADS caps)");
  sub->add_option("--config", f.config_path, "JSON config merged under explicit flags");
}

void merge_quant_config(QuantFlags& f, const std::map<std::string, const CLI::Option*>& opts) {
  if (f.config_path.empty()) return;
  json cfg = load_config(f.config_path);
  fill_from_config(cfg, opts.at("format"), "format", f.format);
  fill_from_config(cfg, opts.at("group_size"), "group_size", f.group_size);
  fill_from_config(cfg, opts.at("granularity"), "granularity", f.granularity);
  fill_from_config(cfg, opts.at("block_size"), "block_size", f.block_size);
  fill_from_config(cfg, opts.at("symmetric"), "symmetric", f.symmetric);
  fill_from_config(cfg, opts.at("seed"), "seed", f.seed);
  fill_from_config(cfg, opts.at("weighting"), "weighting", f.weighting);
  fill_from_config(cfg, opts.at("init"), "init", f.init);
  fill_from_config(cfg, opts.at("max_iters"), "max_iters", f.max_iters);
  fill_from_config(cfg, opts.at("restarts"), "restarts", f.restarts);
  fill_from_config(cfg, opts.at("rel_tol"), "rel_tol", f.rel_tol);
  fill_from_config(cfg, opts.at("int_range"), "int_range", f.int_range);
}

const Vecf* resolve_stats(const ActivationStats& stats, std::string& module_name, Index cols) {
  if (module_name.empty()) {
    if (stats.entries.size() == 1) {
      module_name = stats.entries.begin()->first;
    } else {
      throw ConfigError("stats file has several modules; pass --module");
    }
  }
  return &stats.for_module(module_name, cols);
}

BenchShape parse_shape(const std::string& token) {
  BenchShape s;
  size_t a = token.find('x');
  if (a == std::string::npos) {
    // "K" mirrors a 1 x K by K x K matrix-vector multiply.
    s.m = 1;
    s.n = s.k = std::stoll(token);
    return s;
  }
  size_t b = token.find('x', a + 1);
  if (b == std::string::npos) throw ConfigError("shape must be K or MxNxK: '" + token + "'");
  s.m = std::stoll(token.substr(0, a));
  s.n = std::stoll(token.substr(a + 1, b - a - 1));
  s.k = std::stoll(token.substr(b + 1));
  if (s.m < 1 || s.n < 1 || s.k < 1) throw ConfigError("shape dims must be positive");
  return s;
}

int run_calibrate(const std::string& model_path, const std::string& inputs_path,
                  const std::string& out_path) {
  ToyModel model = model_from_json(slurp_text(model_path));
  Matf inputs = read_dense(inputs_path);
  ActivationStats stats = collect_stats(model, inputs);
  save_stats(stats, out_path);
  std::cerr << "wrote stats for " << stats.entries.size() << " modules to " << out_path << "\n";
  return 0;
}

int run_quantize(const QuantFlags& f) {
  QuantConfig cfg = build_config(f);
  Matf w = read_dense(f.weights);
  validate(cfg, w.rows(), w.cols());

  ActivationStats stats;
  const Vecf* exj = nullptr;
  std::string module_name = f.module_name;
  if (!f.stats_path.empty()) {
    stats = load_stats(f.stats_path);
    exj = resolve_stats(stats, module_name, w.cols());
  }

  QuantizedTensor qt;
  if (cfg.codebook == CodebookKind::AnyN) {
    qt = quantize_any(w, cfg, exj, resolve_threads(f.threads));
  } else {
    qt = quantize_fixed(w, cfg);
  }
  qt.lut_store = parse_store(f.lut_store);
  qt.scale_store = parse_store(f.scale_store);
  if (f.tile_k > 0) qt = to_ktiled(qt, f.tile_k);
  write_file(qt, f.out);
  std::cerr << "wrote " << format_name(cfg) << " tensor " << qt.rows << "x" << qt.cols << " to "
            << f.out << "\n";
  return 0;
}

int run_dequantize(const std::string& in_path, const std::string& out_path) {
  QuantizedTensor qt = read_file(in_path);
  write_dense(dequantize(qt), out_path);
  return 0;
}

int run_eval(const QuantFlags& f, const std::vector<std::string>& formats,
             const std::string& emit, Index eval_rows, uint64_t eval_seed) {
  QuantConfig base = build_config(f);
  Matf w = read_dense(f.weights);

  ActivationStats stats;
  const ActivationStats* stats_ptr = nullptr;
  std::string module_name = f.module_name;
  if (!f.stats_path.empty()) {
    stats = load_stats(f.stats_path);
    resolve_stats(stats, module_name, w.cols());
    stats_ptr = &stats;
  } else if (module_name.empty()) {
    module_name = "w";
  }

  CompareOptions opts;
  opts.eval_rows = eval_rows;
  opts.eval_seed = eval_seed;
  opts.threads = resolve_threads(f.threads);
  EvalReport report = compare_formats(w, formats, base, stats_ptr, module_name, opts);
  if (emit == "json")
    std::cout << report.to_json() << "\n";
  else if (emit == "csv")
    std::cout << report.to_csv();
  else
    throw ConfigError("--emit must be csv or json");
  return 0;
}

int run_bench(const std::vector<std::string>& shape_tokens,
              const std::vector<std::string>& formats, int repeats, uint64_t seed) {
  std::vector<BenchShape> shapes;
  for (const auto& t : shape_tokens) shapes.push_back(parse_shape(t));
  std::vector<BenchRow> rows = bench(shapes, formats, repeats, seed);
  std::cout << bench_csv(rows);
  // Fused vs dense summary per shape.
  for (const auto& r : rows) {
    if (r.format == "fp32") continue;
    for (const auto& d : rows) {
      if (d.format == "fp32" && d.shape.m == r.shape.m && d.shape.n == r.shape.n &&
          d.shape.k == r.shape.k) {
        std::cerr << r.shape.m << "x" << r.shape.n << "x" << r.shape.k << " " << r.format
                  << ": time vs fp32 " << r.median_ns / d.median_ns << ", bytes/weight vs fp32 "
                  << r.bytes_per_weight / d.bytes_per_weight << "\n";
      }
    }
  }
  return 0;
}

int run_inspect(const std::string& in_path, const std::string& codebook_name) {
  if (!codebook_name.empty()) {
    QuantConfig cfg;
    apply_format(cfg, codebook_name);
    if (cfg.codebook == CodebookKind::AnyN)
      throw ConfigError("learned tables live in tensor files; inspect those with --in");
    std::cout << codebook_json(fixed_codebook(cfg)) << "\n";
    return 0;
  }
  QuantizedTensor qt = read_file(in_path);
  SizeBreakdown sz = file_sizes(qt);
  char bits_str[64];
  std::snprintf(bits_str, sizeof(bits_str), "%g",
                storage_bits_per_entry(qt.cfg, qt.rows, qt.cols));
  std::cout << "magic: ANYQ\n"
            << "version: 1\n"
            << "shape: " << qt.rows << "x" << qt.cols << "\n"
            << "format: " << format_name(qt.cfg) << "\n"
            << "granularity: " << granularity_name(qt.cfg.granularity) << "\n"
            << "group_size: " << qt.cfg.group_size << "\n"
            << "block_size: " << qt.cfg.block_size << "\n"
            << "symmetric: " << (qt.cfg.symmetric ? "true" : "false") << "\n"
            << "layout: " << (qt.layout == Layout::KTiled ? "ktiled" : "rowmajor") << "\n"
            << "tile_k: " << qt.tile_k << "\n"
            << "lut_store: " << store_name(qt.lut_store) << "\n"
            << "scale_store: " << store_name(qt.scale_store) << "\n"
            << "seed: " << qt.cfg.seed << "\n"
            << "groups: " << qt.scales.num_groups() << "\n"
            << "lut_entries: " << qt.lut_entries() << "\n"
            << "header_bytes: " << sz.header << "\n"
            << "codes_bytes: " << sz.codes << "\n"
            << "scales_bytes: " << sz.scales << "\n"
            << "luts_bytes: " << sz.luts << "\n"
            << "file_bytes: " << sz.total() << "\n"
            << "bits_per_entry: " << bits_str << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anyq: fixed and learned low-bit weight quantization"};
  app.require_subcommand(1);

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "collect activation stats from a toy model");
  std::string cal_model, cal_inputs, cal_out;
  cal->add_option("--model", cal_model, "toy model JSON")->required();
  cal->add_option("--inputs", cal_inputs, "input samples (.anyt)")->required();
  cal->add_option("--out", cal_out, "stats output path")->required();

  // quantize
  auto* qz = app.add_subcommand("quantize", "quantize a weight matrix");
  QuantFlags qf;
  std::map<std::string, const CLI::Option*> q_opts;
  qz->add_option("--weights", qf.weights, "dense weights (.anyt)")->required();
  qz->add_option("--out", qf.out, "quantized output (.anyq)")->required();
  add_quant_flags(qz, qf, q_opts);
  qz->add_option("--lut-store", qf.lut_store, "LUT storage: fp16|bf16");
  qz->add_option("--scale-store", qf.scale_store, "scale storage: fp16|fp32");
  qz->add_option("--tile-k", qf.tile_k, "write k-tiled layout with this tile (0 = row major)");

  // dequantize
  auto* dq = app.add_subcommand("dequantize", "reconstruct a dense matrix");
  std::string dq_in, dq_out;
  dq->add_option("--in", dq_in, "quantized tensor (.anyq)")->required();
  dq->add_option("--out", dq_out, "dense output (.anyt)")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "compare formats on one weight matrix");
  QuantFlags ef;
  std::map<std::string, const CLI::Option*> e_opts;
  std::vector<std::string> ev_formats{"int4", "fp4", "nf4", "any4"};
  std::string ev_emit = "csv";
  Index ev_rows = 64;
  uint64_t ev_seed = 1;
  ev->add_option("--weights", ef.weights, "dense weights (.anyt)")->required();
  ev->add_option("--formats", ev_formats, "formats to compare");
  ev->add_option("--emit", ev_emit, "csv|json");
  ev->add_option("--eval-rows", ev_rows, "evaluation batch size");
  ev->add_option("--eval-seed", ev_seed, "evaluation activation seed");
  add_quant_flags(ev, ef, e_opts);

  // bench
  auto* bn = app.add_subcommand("bench", "time the fused kernel");
  std::vector<std::string> bn_shapes{"1024"};
  std::vector<std::string> bn_formats{"int4", "nf4", "any4"};
  int bn_repeats = 25;
  uint64_t bn_seed = 0;
  bn->add_option("--shapes", bn_shapes, "K or MxNxK tokens");
  bn->add_option("--formats", bn_formats, "quantized formats to time");
  bn->add_option("--repeats", bn_repeats, "timed repetitions per case");
  bn->add_option("--seed", bn_seed, "data seed");

  // inspect
  auto* in = app.add_subcommand("inspect", "describe a quantized file or dump a codebook");
  std::string in_path, in_codebook;
  in->add_option("--in", in_path, "quantized tensor (.anyq)");
  in->add_option("--codebook", in_codebook, "dump a fixed codebook as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*cal) return run_calibrate(cal_model, cal_inputs, cal_out);
    if (*qz) {
      merge_quant_config(qf, q_opts);
      return run_quantize(qf);
    }
    if (*dq) return run_dequantize(dq_in, dq_out);
    if (*ev) {
      merge_quant_config(ef, e_opts);
      return run_eval(ef, ev_formats, ev_emit, ev_rows, ev_seed);
    }
    if (*bn) return run_bench(bn_shapes, bn_formats, bn_repeats, bn_seed);
    if (*in) {
      if (in_path.empty() && in_codebook.empty())
        throw ConfigError("inspect needs --in or --codebook");
      return run_inspect(in_path, in_codebook);
    }
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
