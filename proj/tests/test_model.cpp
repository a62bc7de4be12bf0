#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gbpn/errors.hpp"
#include "gbpn/model.hpp"

using namespace gbpn;

namespace {

Matrix normalize_log_rows(Matrix m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r).array() -= mx + std::log((m.row(r).array() - mx).exp().sum());
  }
  return m;
}

struct Setup {
  Graph graph;
  Matrix features;
  ModelParams params;
};

Setup small_setup(int n, const std::vector<std::pair<int, int>>& edges, int d,
                  int c, int hidden, std::uint64_t seed) {
  Setup s;
  s.graph = Graph::build(n, edges);
  Rng rng(seed);
  s.features.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) s.features(i, j) = rng.uniform(-1.0, 1.0);
  }
  s.params = ModelParams::init(d, c, hidden, rng);
  // nonzero biases and coupling so nothing is accidentally symmetric
  for (auto& b : s.params.biases) {
    for (Eigen::Index k = 0; k < b.cols(); ++k) b(0, k) = rng.uniform(-0.3, 0.3);
  }
  for (int a = 0; a < c; ++a) {
    for (int b2 = 0; b2 < c; ++b2) {
      s.params.log_coupling_raw(a, b2) = rng.uniform(-0.8, 0.8);
    }
  }
  return s;
}

Matrix mlp_reference(const Setup& s) {
  ad::Tape tape;
  ParamVars vars = bind_params(tape, s.params, false);
  ad::Var out = self_log_beliefs(tape, tape.constant(s.features), vars, 0.0,
                                 nullptr);
  return tape.value(out);
}

}  // namespace

TEST_CASE("coupling symmetrization") {
  ad::Tape tape;
  Matrix raw(2, 2);
  raw << 0.0, 2.0, 0.0, 0.0;
  ad::Var c = coupling(tape, tape.constant(raw));
  Matrix expect(2, 2);
  expect << 0.0, 1.0, 1.0, 0.0;
  CHECK(tape.value(c) == expect);

  Matrix sym(2, 2);
  sym << 0.3, -0.2, -0.2, 0.9;
  ad::Var c2 = coupling(tape, tape.constant(sym));
  CHECK(tape.value(c2) == sym);

  // gradient of a function of the coupling splits evenly across twins
  auto f = [](ad::Tape& t, const std::vector<ad::Var>& p) {
    ad::Var h = coupling(t, p[0]);
    return ad::mean_select(t, h, {1, 0});  // h(0,1) + h(1,0) halves
  };
  Rng rng(5);
  Matrix raw0(2, 2);
  raw0 << 0.1, 0.7, -0.4, 0.2;
  CHECK(ad::grad_check(f, {raw0}, 1e-6) < 1e-9);
}

TEST_CASE("self_log_beliefs: uniform at zero params, normalized rows") {
  Setup s = small_setup(6, {{0, 1}, {2, 3}}, 3, 4, 5, 11);
  for (auto& w : s.params.weights) w.setZero();
  for (auto& b : s.params.biases) b.setZero();
  Matrix out = mlp_reference(s);
  CHECK((out.array() + std::log(4.0)).abs().maxCoeff() < 1e-14);

  Setup s2 = small_setup(5, {{0, 1}}, 2, 3, 8, 13);
  Matrix out2 = mlp_reference(s2);
  for (int i = 0; i < 5; ++i) {
    CHECK(std::abs(std::log(out2.row(i).array().exp().sum())) < 1e-12);
  }
  CHECK(mlp_reference(s2) == out2);  // deterministic with dropout off

  // feature-dimension mismatch is an input error
  ad::Tape tape;
  ParamVars vars = bind_params(tape, s2.params, false);
  CHECK_THROWS_AS(
      self_log_beliefs(tape, tape.constant(Matrix::Zero(5, 7)), vars, 0.0,
                       nullptr),
      InputError);
}

TEST_CASE("forward with T=0 or zero coupling degenerates to the MLP") {
  Setup s = small_setup(7, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6},
                            {1, 4}},
                        2, 3, 8, 17);
  Matrix mlp = mlp_reference(s);

  ModelConfig cfg;
  cfg.hidden_width = 8;
  cfg.mode = Mode::Inductive;
  cfg.dropout = 0.0;

  cfg.bp_steps = 0;
  {
    ad::Tape tape;
    ParamVars vars = bind_params(tape, s.params, false);
    ad::Var out = gbpn_forward(tape, s.graph, s.features, vars, cfg, {});
    CHECK(tape.value(out) == mlp);  // exact
  }

  cfg.bp_steps = 4;
  ModelParams zero_coupling = s.params;
  zero_coupling.log_coupling_raw.setZero();
  {
    ad::Tape tape;
    ParamVars vars = bind_params(tape, zero_coupling, false);
    ad::Var out = gbpn_forward(tape, s.graph, s.features, vars, cfg, {});
    CHECK((tape.value(out) - mlp).cwiseAbs().maxCoeff() < 1e-12);
  }

  // conditioning in inductive mode is rejected
  ad::Tape tape;
  ParamVars vars = bind_params(tape, s.params, false);
  CHECK_THROWS_AS(gbpn_forward(tape, s.graph, s.features, vars, cfg, {{0, 1}}),
                  InputError);
}

TEST_CASE("forward matches exact conditional marginals on a tree") {
  Setup s = small_setup(8, {{0, 1}, {1, 2}, {1, 3}, {3, 4}, {0, 5}, {5, 6},
                            {6, 7}},
                        2, 3, 6, 19);
  ModelConfig cfg;
  cfg.hidden_width = 6;
  cfg.bp_steps = 5;  // diameter of this tree
  cfg.dropout = 0.0;
  cfg.mode = Mode::Transductive;
  const ClampList conditioned = {{2, 1}, {6, 0}};

  ad::Tape tape;
  ParamVars vars = bind_params(tape, s.params, false);
  ad::Var out = gbpn_forward(tape, s.graph, s.features, vars, cfg, conditioned);

  MrfSpec spec;
  spec.graph = s.graph;
  spec.num_classes = 3;
  spec.self_log_potentials = mlp_reference(s);
  spec.log_coupling =
      (s.params.log_coupling_raw + s.params.log_coupling_raw.transpose()) / 2.0;
  Matrix expected = exact_marginals(spec, conditioned);

  Matrix got = tape.value(out).array().exp();
  CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-8);

  // clamped nodes keep their class
  auto pred = predict(tape.value(out));
  CHECK(pred[2] == 1);
  CHECK(pred[6] == 0);
}

TEST_CASE("loss values match independent scalar computations") {
  Graph g = grid_graph(3, 3);  // center node 4 has degree 4
  std::vector<int> labels(9, 0);

  Matrix uniform = Matrix::Constant(1, 2, -std::log(2.0));
  for (double beta : {0.0, 0.5, 2.0}) {
    ad::Tape tape;
    ad::Var loss =
        marginal_nll(tape, tape.constant(uniform), {4}, labels, g, beta,
                     LossWeighting::Tempered);
    CHECK(tape.value(loss)(0, 0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  Matrix row(1, 2);
  row << std::log(0.6), std::log(0.4);
  {
    ad::Tape tape;
    ad::Var loss = marginal_nll(tape, tape.constant(row), {4}, labels, g, 0.0,
                                LossWeighting::Tempered);
    CHECK(tape.value(loss)(0, 0) ==
          doctest::Approx(-std::log(0.6)).epsilon(1e-12));
  }

  Matrix conf(1, 2);
  conf << std::log(0.9), std::log(0.1);
  {
    // alpha = 4^-1/2 = 0.5; tempered: -ln(0.9^.5/(0.9^.5+0.1^.5)) = ln(4/3)
    ad::Tape tape;
    ad::Var loss = marginal_nll(tape, tape.constant(conf), {4}, labels, g, 0.5,
                                LossWeighting::Tempered);
    CHECK(tape.value(loss)(0, 0) ==
          doctest::Approx(0.2876820724517809).epsilon(1e-12));
  }
  {
    // scaled: plain alpha-weighted NLL
    ad::Tape tape;
    ad::Var loss = marginal_nll(tape, tape.constant(conf), {4}, labels, g, 0.5,
                                LossWeighting::Scaled);
    CHECK(tape.value(loss)(0, 0) ==
          doctest::Approx(0.5 * -std::log(0.9)).epsilon(1e-12));
  }
  {
    // isolated node: alpha = 1 for any beta
    Graph iso = Graph::build(2, {});
    ad::Tape tape;
    ad::Var loss = marginal_nll(tape, tape.constant(row), {0}, {0, 0}, iso,
                                0.5, LossWeighting::Tempered);
    CHECK(tape.value(loss)(0, 0) ==
          doctest::Approx(-std::log(0.6)).epsilon(1e-12));
  }

  ad::Tape tape;
  CHECK_THROWS_AS(marginal_nll(tape, tape.constant(row), {}, labels, g, 0.5,
                               LossWeighting::Tempered),
                  InputError);
}

TEST_CASE("predict: argmax with ties toward the lowest class") {
  Matrix b(3, 3);
  b << 0.1, 0.7, 0.2,   // argmax 1
      0.4, 0.4, 0.2,    // tie 0 vs 1 -> 0
      -1.0, -1.0, -1.0; // all tied -> 0
  auto p = predict(b);
  CHECK(p == std::vector<int>({1, 0, 0}));

  // invariant to adding a per-row constant
  Matrix shifted = b;
  shifted.row(0).array() += 10.0;
  shifted.row(2).array() -= 3.0;
  CHECK(predict(shifted) == p);
}

TEST_CASE("end-to-end gradient matches finite differences") {
  Setup s = small_setup(8, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {3, 4}, {4, 5},
                            {5, 6}, {6, 7}, {7, 4}},
                        2, 2, 6, 23);
  std::vector<int> labels = {0, 1, 0, 1, 1, 0, 1, 0};
  const std::vector<int> train_ids = {0, 2, 4, 6, 7};
  const ClampList conditioned = {{1, 1}, {5, 0}};

  for (double beta : {0.0, 0.5}) {
    for (LossWeighting weighting :
         {LossWeighting::Tempered, LossWeighting::Scaled}) {
      ModelConfig cfg;
      cfg.hidden_width = 6;
      cfg.bp_steps = 3;
      cfg.dropout = 0.0;
      cfg.beta = beta;
      cfg.weighting = weighting;
      cfg.mode = Mode::Transductive;

      auto f = [&](ad::Tape& tape, const std::vector<ad::Var>& p) {
        ParamVars vars;
        vars.weights = {p[0], p[2], p[4]};
        vars.biases = {p[1], p[3], p[5]};
        vars.log_coupling_raw = p[6];
        ad::Var beliefs =
            gbpn_forward(tape, s.graph, s.features, vars, cfg, conditioned);
        ad::Var batch = ad::gather_rows(tape, beliefs, train_ids);
        return marginal_nll(tape, batch, train_ids, labels, s.graph, beta,
                            weighting);
      };
      std::vector<Matrix> tensors;
      for (const Matrix* m : s.params.tensors()) tensors.push_back(*m);
      CHECK(ad::grad_check(f, tensors, 1e-5) < 1e-4);
    }
  }
}
