#include "anyq/calibration.hpp"

#include "anyq/learner.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace anyq;
using anyq::testing::gaussian;
using anyq::testing::TempDir;

namespace {

ToyModel single_layer(Index rows, Index cols, Nonlinearity act = Nonlinearity::Identity) {
  ToyModel m;
  m.input_dim = cols;
  ToyLayer layer;
  layer.name = "layer0";
  layer.weight = gaussian(rows, cols, 123);
  layer.act = act;
  m.layers.push_back(std::move(layer));
  return m;
}

}  // namespace

TEST_CASE("stats are the mean of absolute activations per channel") {
  ToyModel m = single_layer(2, 2);
  Matf inputs(2, 2);
  inputs << 1, -1, 3, -3;
  ActivationStats stats = collect_stats(m, inputs);
  REQUIRE(stats.entries.count("layer0") == 1);
  Vecf v = stats.entries["layer0"];
  CHECK(v[0] == 2.0f);
  CHECK(v[1] == 2.0f);
  CHECK(stats.token_count == 2);
}

TEST_CASE("all-zero inputs produce all-zero stats") {
  ToyModel m = single_layer(3, 4);
  Matf inputs = Matf::Zero(5, 4);
  ActivationStats stats = collect_stats(m, inputs);
  CHECK(stats.entries["layer0"].cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("identity layers pass stats through unchanged") {
  ToyModel m;
  m.input_dim = 4;
  for (int l = 0; l < 2; ++l) {
    ToyLayer layer;
    layer.name = "l" + std::to_string(l);
    layer.weight = Matf::Identity(4, 4);
    layer.act = Nonlinearity::Identity;
    m.layers.push_back(std::move(layer));
  }
  Matf inputs = gaussian(6, 4, 9);
  ActivationStats stats = collect_stats(m, inputs);
  CHECK(stats.entries["l0"] == stats.entries["l1"]);
}

TEST_CASE("stats are invariant to sample order and duplication") {
  ToyModel m = single_layer(5, 16, Nonlinearity::Tanh);
  Matf inputs = gaussian(32, 16, 77);
  ActivationStats base = collect_stats(m, inputs);

  Matf reversed(32, 16);
  for (Index i = 0; i < 32; ++i) reversed.row(i) = inputs.row(31 - i);
  ActivationStats perm = collect_stats(m, reversed);

  Matf doubled(64, 16);
  doubled.topRows(32) = inputs;
  doubled.bottomRows(32) = inputs;
  ActivationStats dup = collect_stats(m, doubled);

  for (const auto& [name, v] : base.entries) {
    for (Index j = 0; j < v.size(); ++j) {
      CHECK(perm.entries[name][j] == doctest::Approx(v[j]).epsilon(1e-6));
      CHECK(dup.entries[name][j] == doctest::Approx(v[j]).epsilon(1e-6));
    }
  }
}

TEST_CASE("stats files round trip exactly") {
  TempDir dir("stats");
  ActivationStats stats;
  stats.entries["alpha"] = gaussian(1, 7, 3).cwiseAbs().row(0).transpose();
  stats.entries["beta"] = gaussian(1, 3, 4).cwiseAbs().row(0).transpose();
  stats.token_count = 42;
  stats.source = "unit-test";
  std::string path = dir.file("s.anys");
  save_stats(stats, path);
  ActivationStats loaded = load_stats(path);
  CHECK(loaded.token_count == 42);
  CHECK(loaded.source == "unit-test");
  REQUIRE(loaded.entries.size() == 2);
  CHECK(loaded.entries["alpha"] == stats.entries["alpha"]);
  CHECK(loaded.entries["beta"] == stats.entries["beta"]);
}

TEST_CASE("truncated stats files fail with the offset in the message") {
  TempDir dir("stats_trunc");
  ActivationStats stats;
  stats.entries["m"] = Vecf::Ones(8);
  std::string path = dir.file("s.anys");
  save_stats(stats, path);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
  out.close();

  try {
    load_stats(path);
    FAIL("expected TruncatedError");
  } catch (const TruncatedError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("negative stats values are rejected at load") {
  TempDir dir("stats_neg");
  ActivationStats stats;
  Vecf v = Vecf::Ones(4);
  stats.entries["m"] = v;
  std::string path = dir.file("s.anys");
  save_stats(stats, path);

  // Patch one payload float to -1 (header length + 4 + 8 bytes in).
  std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
  std::string head(4, '\0');
  f.read(head.data(), 4);
  uint32_t hdr_len = 0;
  for (int b = 0; b < 4; ++b) hdr_len |= static_cast<uint8_t>(head[b]) << (8 * b);
  float bad = -1.0f;
  f.seekp(4 + hdr_len + 8);
  f.write(reinterpret_cast<const char*>(&bad), 4);
  f.close();
  CHECK_THROWS_AS(load_stats(path), StatsError);
}

TEST_CASE("applying stats with the wrong width fails before any work") {
  ActivationStats stats;
  stats.entries["m"] = Vecf::Ones(8);
  CHECK_THROWS_AS(stats.for_module("m", 16), StatsError);
  CHECK_THROWS_AS(stats.for_module("missing", 8), StatsError);

  Matf w = gaussian(4, 16, 5);
  QuantConfig cfg;
  cfg.codebook = CodebookKind::AnyN;
  cfg.granularity = Granularity::Rowwise;
  Vecf wrong = Vecf::Ones(8);
  CHECK_THROWS_AS(quantize_any(w, cfg, &wrong), StatsError);
}

TEST_CASE("the built-in calibration prompt is fixed") {
  std::string p = default_prompt();
  CHECK(p.find("Once upon a time, a girl named Alice") != std::string::npos);
  CHECK(p.find("The capital of Egypt is Cairo") != std::string::npos);
  CHECK(p.find("General Assembly") != std::string::npos);
  CHECK(p.find("public static void main") != std::string::npos);
  CHECK(p.find("(5.2 + 2.7) / 0.6 - 1.9 * 2.2 =") != std::string::npos);

  auto words = [](const std::string& s) {
    std::istringstream is(s);
    int n = 0;
    std::string tok;
    while (is >> tok) ++n;
    return n;
  };
  CHECK(words(default_prompt()) == words(p));
  CHECK(words(p) > 60);
}

TEST_CASE("toy models load from JSON with inline or seeded weights") {
  std::string doc = R"({
    "input_dim": 2,
    "layers": [
      {"name": "inline", "rows": 2, "cols": 2, "nonlinearity": "relu",
       "weights": [1, 0, 0, 1]},
      {"name": "seeded", "rows": 3, "seed": 9, "nonlinearity": "tanh"}
    ]
  })";
  ToyModel m = model_from_json(doc);
  REQUIRE(m.layers.size() == 2);
  CHECK(m.layers[0].weight == Matf::Identity(2, 2));
  CHECK(m.layers[0].act == Nonlinearity::Relu);
  CHECK(m.layers[1].weight.rows() == 3);
  CHECK(m.layers[1].weight.cols() == 2);

  ToyModel again = model_from_json(doc);
  CHECK(m.layers[1].weight == again.layers[1].weight);

  CHECK_THROWS_AS(model_from_json("{"), IoError);
  CHECK_THROWS_AS(model_from_json(R"({"input_dim":2,"layers":[
    {"name":"bad","rows":2,"cols":3,"seed":1}]})"),
                  ShapeError);
}

TEST_CASE("layer dimension mismatches are rejected") {
  ToyModel m;
  m.input_dim = 4;
  ToyLayer a;
  a.name = "a";
  a.weight = gaussian(3, 4, 1);
  m.layers.push_back(a);
  ToyLayer b;
  b.name = "b";
  b.weight = gaussian(2, 5, 2);  // expects 3 inputs
  m.layers.push_back(b);
  CHECK_THROWS_AS(m.validate(), ShapeError);
  Matf inputs = gaussian(2, 4, 3);
  CHECK_THROWS_AS(collect_stats(m, inputs), ShapeError);
}
