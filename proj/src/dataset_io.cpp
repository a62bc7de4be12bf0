#include "gbpn/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "gbpn/errors.hpp"
#include "gbpn/rng.hpp"

namespace gbpn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::string shortest(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericError("failed to format double");
  return std::string(buf, p);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

// Splits into lines, dropping a trailing empty line.
std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

std::vector<std::string_view> fields_of(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t tab = line.find('\t', pos);
    if (tab == std::string_view::npos) tab = line.size();
    fields.push_back(line.substr(pos, tab - pos));
    if (tab == line.size()) break;
    pos = tab + 1;
  }
  return fields;
}

[[noreturn]] void fail_at(const fs::path& file, std::size_t line1,
                          const std::string& what) {
  throw LoadError(file.string() + ":" + std::to_string(line1) + ": " + what);
}

int parse_int(std::string_view s, const fs::path& file, std::size_t line1) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    fail_at(file, line1, "expected integer, got '" + std::string(s) + "'");
  }
  return v;
}

double parse_double(std::string_view s, const fs::path& file,
                    std::size_t line1) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    fail_at(file, line1, "expected real, got '" + std::string(s) + "'");
  }
  return v;
}

std::vector<int> int_array(const json& j, const fs::path& file,
                           const char* key) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw LoadError(file.string() + ": missing array '" + key + "'");
  }
  std::vector<int> out;
  out.reserve(j[key].size());
  for (const auto& v : j[key]) {
    if (!v.is_number_integer()) {
      throw LoadError(file.string() + ": non-integer entry in '" + key + "'");
    }
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

Splits split_nodes(int n, std::array<double, 3> ratios, std::uint64_t seed) {
  if (n < 3) throw InputError("split_nodes: need at least 3 nodes");
  double sum = 0.0;
  for (double r : ratios) {
    if (r <= 0.0) throw InputError("split_nodes: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InputError("split_nodes: ratios must sum to 1");
  }
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed);
  rng.shuffle(ids);

  const int n_val = static_cast<int>(std::llround(n * ratios[1]));
  const int n_test = static_cast<int>(std::llround(n * ratios[2]));
  const int n_train = n - n_val - n_test;
  if (n_train < 1 || n_val < 0 || n_test < 0) {
    throw InputError("split_nodes: degenerate split sizes");
  }
  Splits s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  s.test.assign(ids.begin() + n_train + n_val, ids.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void save_bundle(const GraphBundle& bundle, const fs::path& dir) {
  bundle.validate();
  fs::create_directories(dir);

  {
    json meta;
    meta["format_version"] = kFormatVersion;
    meta["num_nodes"] = bundle.num_nodes();
    meta["num_classes"] = bundle.num_classes;
    meta["feature_dim"] = bundle.feature_dim();
    if (!bundle.notes.empty()) meta["notes"] = bundle.notes;
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "edges.tsv");
    for (auto [a, b] : bundle.graph.undirected_edges()) {
      out << a << '\t' << b << '\n';
    }
  }
  {
    std::ofstream out(dir / "features.tsv");
    for (int i = 0; i < bundle.num_nodes(); ++i) {
      for (int j = 0; j < bundle.feature_dim(); ++j) {
        if (j) out << '\t';
        out << shortest(bundle.features(i, j));
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.tsv");
    for (int v : bundle.labels) out << v << '\n';
  }
  {
    json splits;
    splits["train"] = bundle.train_ids;
    splits["val"] = bundle.val_ids;
    splits["test"] = bundle.test_ids;
    std::ofstream out(dir / "splits.json");
    out << splits.dump(2) << "\n";
  }
}

GraphBundle load_bundle(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  const json meta = read_json(meta_path);
  for (const char* key : {"format_version", "num_nodes", "num_classes",
                          "feature_dim"}) {
    if (!meta.contains(key) || !meta[key].is_number_integer()) {
      throw LoadError(meta_path.string() + ": missing integer field '" +
                      std::string(key) + "'");
    }
  }
  if (meta["format_version"].get<int>() != kFormatVersion) {
    throw LoadError(meta_path.string() + ": unsupported format_version");
  }
  const int n = meta["num_nodes"].get<int>();
  const int c = meta["num_classes"].get<int>();
  const int d = meta["feature_dim"].get<int>();
  if (n < 0 || c < 1 || d < 0) {
    throw LoadError(meta_path.string() + ": invalid sizes");
  }

  GraphBundle bundle;
  bundle.num_classes = c;
  if (meta.contains("notes")) bundle.notes = meta["notes"].get<std::string>();

  {
    const fs::path path = dir / "edges.tsv";
    const std::string text = read_file(path);
    std::vector<std::pair<int, int>> edges;
    const auto lines = lines_of(text);
    for (std::size_t li = 0; li < lines.size(); ++li) {
      if (lines[li].empty()) continue;
      const auto fields = fields_of(lines[li]);
      if (fields.size() != 2) fail_at(path, li + 1, "expected two columns");
      const int a = parse_int(fields[0], path, li + 1);
      const int b = parse_int(fields[1], path, li + 1);
      if (a == b) fail_at(path, li + 1, "self-loop");
      if (a < 0 || a >= n || b < 0 || b >= n) {
        fail_at(path, li + 1, "endpoint out of range");
      }
      edges.emplace_back(a, b);
    }
    bundle.graph = Graph::build(n, edges);
  }
  {
    const fs::path path = dir / "features.tsv";
    const std::string text = read_file(path);
    const auto lines = lines_of(text);
    if (static_cast<int>(lines.size()) != n) {
      throw LoadError(path.string() + ": expected " + std::to_string(n) +
                      " rows, got " + std::to_string(lines.size()));
    }
    bundle.features.resize(n, d);
    for (int i = 0; i < n; ++i) {
      const auto fields = fields_of(lines[i]);
      if (static_cast<int>(fields.size()) != d) {
        fail_at(path, i + 1, "expected " + std::to_string(d) + " columns");
      }
      for (int j = 0; j < d; ++j) {
        bundle.features(i, j) = parse_double(fields[j], path, i + 1);
      }
    }
  }
  {
    const fs::path path = dir / "labels.tsv";
    const std::string text = read_file(path);
    const auto lines = lines_of(text);
    if (static_cast<int>(lines.size()) != n) {
      throw LoadError(path.string() + ": expected " + std::to_string(n) +
                      " rows, got " + std::to_string(lines.size()));
    }
    bundle.labels.resize(n);
    for (int i = 0; i < n; ++i) {
      const int v = parse_int(lines[i], path, i + 1);
      if (v < 0 || v >= c) {
        fail_at(path, i + 1, "label " + std::to_string(v) +
                                 " outside [0," + std::to_string(c) + ")");
      }
      bundle.labels[i] = v;
    }
  }
  {
    const fs::path path = dir / "splits.json";
    const json splits = read_json(path);
    bundle.train_ids = int_array(splits, path, "train");
    bundle.val_ids = int_array(splits, path, "val");
    bundle.test_ids = int_array(splits, path, "test");
  }

  try {
    bundle.validate();
  } catch (const InputError& e) {
    throw LoadError(dir.string() + ": " + e.what());
  }
  return bundle;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const fs::path& file,
                        const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) {
    throw LoadError(file.string() + ": '" + what +
                    "' must be a non-empty 2-d array");
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols) {
      throw LoadError(file.string() + ": ragged rows in '" + what + "'");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) {
        throw LoadError(file.string() + ": non-numeric entry in '" + what +
                        "'");
      }
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

}  // namespace

void save_model(const ModelParams& params, const ModelConfig& config,
                const fs::path& path) {
  params.validate();
  config.validate();
  json j;
  j["format_version"] = kFormatVersion;
  j["config"] = {{"hidden_width", config.hidden_width},
                 {"bp_steps", config.bp_steps},
                 {"dropout", config.dropout},
                 {"beta", config.beta},
                 {"mode", to_string(config.mode)},
                 {"loss_weighting", to_string(config.weighting)}};
  json layers = json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    layers.push_back({{"weight", matrix_to_json(params.weights[l])},
                      {"bias", matrix_to_json(params.biases[l])}});
  }
  j["layers"] = std::move(layers);
  j["log_coupling_raw"] = matrix_to_json(params.log_coupling_raw);
  std::ofstream out(path);
  if (!out) throw LoadError(path.string() + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

std::pair<ModelParams, ModelConfig> load_model(const fs::path& path) {
  const json j = read_json(path);
  if (!j.contains("format_version") ||
      j["format_version"].get<int>() != kFormatVersion) {
    throw LoadError(path.string() + ": unsupported format_version");
  }
  if (!j.contains("config") || !j.contains("layers") ||
      !j.contains("log_coupling_raw")) {
    throw LoadError(path.string() + ": missing model sections");
  }
  ModelConfig config;
  try {
    const json& c = j["config"];
    config.hidden_width = c.at("hidden_width").get<int>();
    config.bp_steps = c.at("bp_steps").get<int>();
    config.dropout = c.at("dropout").get<double>();
    config.beta = c.at("beta").get<double>();
    config.mode = parse_mode(c.at("mode").get<std::string>());
    config.weighting =
        parse_loss_weighting(c.at("loss_weighting").get<std::string>());
    config.validate();
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": bad config: " + e.what());
  } catch (const InputError& e) {
    throw LoadError(path.string() + ": bad config: " + e.what());
  }

  ModelParams params;
  for (const json& layer : j["layers"]) {
    if (!layer.contains("weight") || !layer.contains("bias")) {
      throw LoadError(path.string() + ": layer missing weight or bias");
    }
    params.weights.push_back(matrix_from_json(layer["weight"], path, "weight"));
    params.biases.push_back(matrix_from_json(layer["bias"], path, "bias"));
  }
  params.log_coupling_raw =
      matrix_from_json(j["log_coupling_raw"], path, "log_coupling_raw");
  try {
    params.validate();
  } catch (const InputError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  if (params.hidden_width() != config.hidden_width) {
    throw LoadError(path.string() + ": hidden_width disagrees with layers");
  }
  return {std::move(params), config};
}

void GraphBundle::validate() const {
  const int n = num_nodes();
  if (num_classes < 1) throw InputError("bundle: num_classes must be >= 1");
  if (features.rows() != n) {
    throw InputError("bundle: features must have one row per node");
  }
  if (static_cast<int>(labels.size()) != n) {
    throw InputError("bundle: labels length must equal num_nodes");
  }
  for (int v : labels) {
    if (v < 0 || v >= num_classes) {
      throw InputError("bundle: label " + std::to_string(v) +
                       " outside [0," + std::to_string(num_classes) + ")");
    }
  }
  std::vector<int> seen(n, 0);
  for (const auto* split : {&train_ids, &val_ids, &test_ids}) {
    for (int id : *split) {
      if (id < 0 || id >= n) {
        throw InputError("bundle: split id " + std::to_string(id) +
                         " out of range");
      }
      if (seen[id]++) {
        throw InputError("bundle: node " + std::to_string(id) +
                         " appears in multiple splits");
      }
    }
  }
  if (!features.allFinite()) {
    throw InputError("bundle: features must be finite");
  }
}

}  // namespace gbpn
