#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gbpn/dataset_io.hpp"
#include "gbpn/errors.hpp"
#include "gbpn/mrf.hpp"

using namespace gbpn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("gbpn_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void patch_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::trunc);
  out << content;
}

}  // namespace

TEST_CASE("split_nodes: sizes, determinism, partition") {
  Splits s = split_nodes(10, {0.3, 0.2, 0.5}, 7);
  CHECK(s.train.size() == 3);
  CHECK(s.val.size() == 2);
  CHECK(s.test.size() == 5);

  Splits again = split_nodes(10, {0.3, 0.2, 0.5}, 7);
  CHECK(s.train == again.train);
  CHECK(s.val == again.val);
  CHECK(s.test == again.test);

  std::vector<int> all;
  for (const auto* v : {&s.train, &s.val, &s.test}) {
    all.insert(all.end(), v->begin(), v->end());
  }
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 10; ++i) CHECK(all[i] == i);

  CHECK_THROWS_AS(split_nodes(2, {0.3, 0.2, 0.5}, 0), InputError);
  CHECK_THROWS_AS(split_nodes(10, {0.5, 0.2, 0.5}, 0), InputError);
  CHECK_THROWS_AS(split_nodes(10, {0.0, 0.5, 0.5}, 0), InputError);
}

TEST_CASE("bundle round-trip is the identity") {
  TempDir tmp("bundle_roundtrip");
  GraphBundle b = generate_dataset(SyntheticKind::IsingPlus, 7, 9, 0.5, 21);
  save_bundle(b, tmp.path);
  GraphBundle r = load_bundle(tmp.path);

  CHECK(r.num_nodes() == b.num_nodes());
  CHECK(r.num_classes == b.num_classes);
  CHECK(r.labels == b.labels);
  CHECK(r.train_ids == b.train_ids);
  CHECK(r.val_ids == b.val_ids);
  CHECK(r.test_ids == b.test_ids);
  CHECK(r.graph.undirected_edges() == b.graph.undirected_edges());
  CHECK(r.features == b.features);  // bit-exact via shortest round-trip
  CHECK(r.notes == b.notes);
}

TEST_CASE("loader rejects self-loops with file and line") {
  TempDir tmp("bundle_selfloop");
  GraphBundle b = generate_dataset(SyntheticKind::IsingPlus, 3, 3, 0.5, 1);
  save_bundle(b, tmp.path);
  patch_file(tmp.path / "edges.tsv", "0\t1\n1\t1\n");
  try {
    load_bundle(tmp.path);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("edges.tsv:2") != std::string::npos);
    CHECK(msg.find("self-loop") != std::string::npos);
  }
}

TEST_CASE("loader rejects out-of-range labels") {
  TempDir tmp("bundle_badlabel");
  GraphBundle b = generate_dataset(SyntheticKind::IsingPlus, 3, 3, 0.5, 1);
  save_bundle(b, tmp.path);
  std::string labels;
  for (int i = 0; i < 9; ++i) labels += (i == 4 ? "2\n" : "0\n");
  patch_file(tmp.path / "labels.tsv", labels);
  try {
    load_bundle(tmp.path);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("labels.tsv:5") != std::string::npos);
  }
}

TEST_CASE("loader reports missing files and overlapping splits") {
  TempDir tmp("bundle_missing");
  CHECK_THROWS_AS(load_bundle(tmp.path), LoadError);

  GraphBundle b = generate_dataset(SyntheticKind::IsingPlus, 3, 3, 0.5, 1);
  save_bundle(b, tmp.path);
  patch_file(tmp.path / "splits.json",
             R"({"train":[0,1],"val":[1,2],"test":[3]})");
  CHECK_THROWS_AS(load_bundle(tmp.path), LoadError);
}

TEST_CASE("model round-trip preserves every weight bit-exactly") {
  TempDir tmp("model_roundtrip");
  Rng rng(5);
  ModelParams p = ModelParams::init(7, 3, 11, rng);
  p.log_coupling_raw = Matrix::Random(3, 3) * 1e-7;  // awkward magnitudes
  p.weights[1](0, 0) = 0.1 + 1e-17;
  ModelConfig cfg;
  cfg.hidden_width = 11;
  cfg.bp_steps = 4;
  cfg.dropout = 0.3;
  cfg.beta = 0.25;
  cfg.mode = Mode::Inductive;
  cfg.weighting = LossWeighting::Scaled;

  const auto path = tmp.path / "model.json";
  save_model(p, cfg, path);
  auto [rp, rcfg] = load_model(path);

  auto lhs = p.tensors();
  auto rhs = rp.tensors();
  REQUIRE(lhs.size() == rhs.size());
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    CHECK(*lhs[i] == *rhs[i]);  // bit-exact
  }
  CHECK(rcfg.hidden_width == cfg.hidden_width);
  CHECK(rcfg.bp_steps == cfg.bp_steps);
  CHECK(rcfg.dropout == cfg.dropout);
  CHECK(rcfg.beta == cfg.beta);
  CHECK(rcfg.mode == cfg.mode);
  CHECK(rcfg.weighting == cfg.weighting);
}

TEST_CASE("truncated model file fails to parse, no partial model") {
  TempDir tmp("model_truncated");
  Rng rng(6);
  ModelParams p = ModelParams::init(4, 2, 5, rng);
  ModelConfig cfg;
  cfg.hidden_width = 5;
  const auto path = tmp.path / "model.json";
  save_model(p, cfg, path);
  std::string text;
  {
    std::ifstream in(path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  patch_file(path, text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_model(path), LoadError);
}

TEST_CASE("model with wrong class count fails at the use site") {
  TempDir tmp("model_mismatch");
  Rng rng(7);
  ModelParams p = ModelParams::init(2, 2, 5, rng);  // c = 2
  ModelConfig cfg;
  cfg.hidden_width = 5;
  cfg.bp_steps = 1;
  cfg.dropout = 0.0;
  cfg.mode = Mode::Inductive;
  const auto path = tmp.path / "model.json";
  save_model(p, cfg, path);
  auto [lp, lcfg] = load_model(path);

  GraphBundle b = generate_dataset(SyntheticKind::MrfPlus, 3, 3, 0.5, 2);  // c = 3
  ad::Tape tape;
  ParamVars vars = bind_params(tape, lp, false);
  ad::Var beliefs =
      gbpn_forward(tape, b.graph, b.features, vars, lcfg, {});
  ad::Var batch = ad::gather_rows(tape, beliefs, b.train_ids);
  CHECK_THROWS_AS(marginal_nll(tape, batch, b.train_ids, b.labels, b.graph,
                               lcfg.beta, lcfg.weighting),
                  InputError);
}

TEST_CASE("shape-chain violations in the model file are load errors") {
  TempDir tmp("model_badchain");
  Rng rng(8);
  ModelParams p = ModelParams::init(4, 2, 5, rng);
  ModelConfig cfg;
  cfg.hidden_width = 5;
  const auto path = tmp.path / "model.json";
  save_model(p, cfg, path);
  std::string text;
  {
    std::ifstream in(path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  // corrupt: hidden_width in config no longer matches the layers
  auto pos = text.find("\"hidden_width\": 5");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 17, "\"hidden_width\": 6");
  patch_file(path, text);
  CHECK_THROWS_AS(load_model(path), LoadError);
}
