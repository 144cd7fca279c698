#include "anyq/calibration.hpp"

#include "io_util.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace anyq {

using nlohmann::json;

const Vecf& ActivationStats::for_module(const std::string& name, Index cols) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw StatsError("no activation stats for module '" + name + "'");
  if (it->second.size() != cols)
    throw StatsError("activation stats for '" + name + "' have " +
                     std::to_string(it->second.size()) + " channels, matrix has " +
                     std::to_string(cols));
  return it->second;
}

void ToyModel::validate() const {
  if (input_dim < 1) throw ConfigError("toy model input_dim must be >= 1");
  if (layers.empty()) throw ConfigError("toy model needs at least one layer");
  Index d = input_dim;
  for (const auto& layer : layers) {
    if (layer.weight.cols() != d)
      throw ShapeError("layer '" + layer.name + "' expects " + std::to_string(layer.weight.cols()) +
                       " inputs, got " + std::to_string(d));
    require_finite(layer.weight, layer.name.c_str());
    d = layer.weight.rows();
  }
}

namespace {

Matf apply_nonlinearity(const Matf& x, Nonlinearity act) {
  switch (act) {
    case Nonlinearity::Identity: return x;
    case Nonlinearity::Relu: return x.cwiseMax(Real(0));
    case Nonlinearity::Tanh: return x.array().tanh().matrix();
  }
  throw ConfigError("unknown nonlinearity");
}

}  // namespace

ActivationStats collect_stats(const ToyModel& model, const Eigen::Ref<const Matf>& inputs) {
  model.validate();
  require_finite(inputs, "collect_stats inputs");
  if (inputs.cols() != model.input_dim) throw ShapeError("inputs do not match model input_dim");
  if (inputs.rows() < 1) throw ShapeError("need at least one input sample");

  ActivationStats stats;
  stats.token_count = static_cast<uint64_t>(inputs.rows());
  stats.source = "toy-model";

  Matf x = inputs;
  for (const auto& layer : model.layers) {
    // Mean over samples of |x_j|, accumulated in double for order stability.
    Vecf exj(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      double acc = 0;
      for (Index m = 0; m < x.rows(); ++m) acc += std::abs(static_cast<double>(x(m, j)));
      exj[j] = static_cast<Real>(acc / static_cast<double>(x.rows()));
    }
    stats.entries[layer.name] = std::move(exj);
    Matf y = x * layer.weight.transpose();
    require_finite(y, "collect_stats activations");
    x = apply_nonlinearity(y, layer.act);
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Stats file
// ---------------------------------------------------------------------------

namespace {

using ioutil::atomic_write;
using ioutil::get_u32;
using ioutil::get_u64;
using ioutil::put_u32;
using ioutil::put_u64;

void need(const std::string& buf, size_t off, size_t len, const char* what) {
  if (off + len > buf.size())
    throw TruncatedError(std::string("stats file truncated reading ") + what + " at offset " +
                         std::to_string(off));
}

}  // namespace

void save_stats(const ActivationStats& stats, const std::string& path) {
  json header;
  header["token_count"] = stats.token_count;
  header["source"] = stats.source;
  json modules = json::array();
  for (const auto& [name, vec] : stats.entries)
    modules.push_back({{"name", name}, {"length", vec.size()}});
  header["modules"] = modules;
  std::string hdr = header.dump();

  std::string bytes;
  put_u32(bytes, static_cast<uint32_t>(hdr.size()));
  bytes += hdr;
  uint64_t payload_len = 0;
  for (const auto& [name, vec] : stats.entries) payload_len += 4ull * vec.size();
  put_u64(bytes, payload_len);
  for (const auto& [name, vec] : stats.entries) {
    for (Index j = 0; j < vec.size(); ++j) {
      uint32_t u;
      static_assert(sizeof(float) == 4);
      std::memcpy(&u, &vec[j], 4);
      put_u32(bytes, u);
    }
  }
  atomic_write(path, bytes);
}

ActivationStats load_stats(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open stats file '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  need(buf, 0, 4, "header length");
  uint32_t hdr_len = get_u32(buf, 0);
  need(buf, 4, hdr_len, "JSON header");
  json header;
  try {
    header = json::parse(buf.substr(4, hdr_len));
  } catch (const json::exception& e) {
    throw IoError("stats file has malformed JSON header: " + std::string(e.what()));
  }

  ActivationStats stats;
  stats.token_count = header.value("token_count", 0ull);
  stats.source = header.value("source", "");

  size_t off = 4 + hdr_len;
  need(buf, off, 8, "payload length");
  uint64_t payload_len = get_u64(buf, off);
  off += 8;
  need(buf, off, payload_len, "payload");

  size_t pos = off;
  for (const auto& m : header.at("modules")) {
    std::string name = m.at("name").get<std::string>();
    uint64_t len = m.at("length").get<uint64_t>();
    need(buf, pos, 4 * len, name.c_str());
    Vecf vec(static_cast<Index>(len));
    for (uint64_t j = 0; j < len; ++j) {
      uint32_t u = get_u32(buf, pos + 4 * j);
      float f;
      std::memcpy(&f, &u, 4);
      if (!(f >= 0) || !std::isfinite(f))
        throw StatsError("stats for '" + name + "' contain a negative or non-finite value");
      vec[static_cast<Index>(j)] = f;
    }
    pos += 4 * len;
    stats.entries[name] = std::move(vec);
  }
  if (pos - off != payload_len)
    throw IoError("stats payload length does not match module table");
  return stats;
}

std::string default_prompt() {
  return "- Fiction: \"Once upon a time, a girl named Alice was living alone on an island. "
         "One day, she met a wizard ...\"\n"
         "- News: \"The United Nations held its General Assembly meeting this year amid "
         "multiple world crises and wars. In his speech, the General Secretary called for ...\"\n"
         "- Code: ~ public static void main(String[] args) {\\n System.out.println(\"Hello "
         "world!\");\\n} ~\n"
         "- Math: (5.2 + 2.7) / 0.6 - 1.9 * 2.2 =\n"
         "- Facts: \"The capital of Egypt is Cairo. It is the largest city in the region and "
         "is home to...\"\n";
}

ToyModel model_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw IoError("malformed model JSON: " + std::string(e.what()));
  }
  ToyModel model;
  model.input_dim = doc.at("input_dim").get<Index>();
  Index d = model.input_dim;
  for (const auto& l : doc.at("layers")) {
    ToyLayer layer;
    layer.name = l.at("name").get<std::string>();
    Index rows = l.at("rows").get<Index>();
    Index cols = l.value("cols", d);
    std::string act = l.value("nonlinearity", "identity");
    if (act == "identity")
      layer.act = Nonlinearity::Identity;
    else if (act == "relu")
      layer.act = Nonlinearity::Relu;
    else if (act == "tanh")
      layer.act = Nonlinearity::Tanh;
    else
      throw ConfigError("unknown nonlinearity '" + act + "'");

    layer.weight.resize(rows, cols);
    if (l.contains("weights")) {
      const auto& vals = l.at("weights");
      if (static_cast<Index>(vals.size()) != rows * cols)
        throw ShapeError("layer '" + layer.name + "' inline weights have wrong length");
      Index p = 0;
      for (const auto& v : vals) {
        layer.weight(p / cols, p % cols) = v.get<Real>();
        ++p;
      }
    } else {
      // Gaussian weights from the layer seed, scaled for stable activations.
      uint64_t seed = l.value("seed", 0ull);
      Rng rng = rng_for_row(seed, 0);
      Real scale = Real(1) / std::sqrt(static_cast<Real>(cols));
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
          layer.weight(i, j) = scale * static_cast<Real>(rng.next_gaussian());
    }
    model.layers.push_back(std::move(layer));
    d = rows;
  }
  model.validate();
  return model;
}

}  // namespace anyq
