#include "gbpn/bp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gbpn/errors.hpp"

namespace gbpn {

namespace {

void check_log_normalized(const Matrix& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    const double lse = mx + std::log((m.row(r).array() - mx).exp().sum());
    if (std::abs(lse) > 1e-6) {
      throw InputError(std::string(what) + ": row " + std::to_string(r) +
                       " is not log-normalized (logsumexp = " +
                       std::to_string(lse) + ")");
    }
  }
}

std::vector<int> to_vector(std::span<const int> s) {
  return std::vector<int>(s.begin(), s.end());
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite values after update");
  }
}

}  // namespace

ClampList normalize_clamps(const ClampList& clamps, int num_nodes,
                           int num_classes) {
  ClampList out = clamps;
  std::sort(out.begin(), out.end());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto [node, cls] = out[k];
    if (node < 0 || node >= num_nodes) {
      throw InputError("clamp: node " + std::to_string(node) + " out of range");
    }
    if (cls < 0 || cls >= num_classes) {
      throw InputError("clamp: class " + std::to_string(cls) + " out of range");
    }
    if (k > 0 && out[k - 1].first == node) {
      if (out[k - 1].second != cls) {
        throw InputError("clamp: contradictory labels for node " +
                         std::to_string(node));
      }
    }
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Matrix one_hot_log_rows(const ClampList& clamps, int num_classes) {
  Matrix rows = Matrix::Constant(static_cast<Eigen::Index>(clamps.size()),
                                 num_classes, kLogZero);
  for (std::size_t k = 0; k < clamps.size(); ++k) {
    rows(static_cast<Eigen::Index>(k), clamps[k].second) = 0.0;
  }
  return rows;
}

BeliefState init_state(ad::Tape& tape, const Graph& graph,
                       ad::Var log_self_beliefs, const ClampList& clamped) {
  const Matrix& self = tape.value(log_self_beliefs);
  if (self.rows() != graph.num_nodes() || self.cols() < 1) {
    throw InputError("init_state: self beliefs must be num_nodes x c");
  }
  const int c = static_cast<int>(self.cols());
  check_log_normalized(self, "init_state");

  BeliefState state;
  state.clamped = normalize_clamps(clamped, graph.num_nodes(), c);
  if (state.clamped.empty()) {
    state.log_initial = log_self_beliefs;
  } else {
    std::vector<int> nodes;
    nodes.reserve(state.clamped.size());
    for (auto [node, cls] : state.clamped) nodes.push_back(node);
    state.log_initial = ad::overwrite_rows(tape, log_self_beliefs, nodes,
                                           one_hot_log_rows(state.clamped, c));
  }
  state.log_beliefs = state.log_initial;
  state.log_messages = tape.constant(Matrix::Constant(
      graph.num_directed_edges(), c, -std::log(static_cast<double>(c))));
  state.iteration = 0;
  return state;
}

BeliefState bp_step(ad::Tape& tape, const Graph& graph,
                    const BeliefState& state, ad::Var log_coupling,
                    const BpStepOptions& options) {
  const int n = graph.num_nodes();
  const int c = static_cast<int>(tape.value(state.log_beliefs).cols());
  const Matrix& coupling = tape.value(log_coupling);
  if (coupling.rows() != c || coupling.cols() != c) {
    throw InputError("bp_step: log_coupling must be c x c");
  }

  // m_{j->i}(y_i) = LSE_{y_j}[ H(y_j,y_i) + p_j(y_j) - m_{i->j}(y_j) ]
  ad::Var sender = ad::gather_rows(tape, state.log_beliefs,
                                   to_vector(graph.src()));
  ad::Var twin = ad::gather_rows(tape, state.log_messages,
                                 to_vector(graph.reverse_index()));
  ad::Var excess = ad::sub(tape, sender, twin);
  ad::Var messages =
      ad::log_softmax_rows(tape, ad::log_matmul_exp(tape, excess, log_coupling));

  ad::Var aggregate;
  if (options.aggregation_edges != nullptr) {
    const std::vector<int>& keep = *options.aggregation_edges;
    std::vector<int> dst_subset(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) {
      if (keep[k] < 0 || keep[k] >= graph.num_directed_edges()) {
        throw InputError("bp_step: aggregation edge out of range");
      }
      dst_subset[k] = graph.dst()[keep[k]];
    }
    ad::Var kept = ad::gather_rows(tape, messages, keep);
    aggregate = ad::segment_sum(tape, kept, std::move(dst_subset), n);
  } else {
    aggregate = ad::segment_sum(tape, messages, to_vector(graph.dst()), n);
  }

  ad::Var beliefs = ad::log_softmax_rows(
      tape, ad::add(tape, state.log_initial, aggregate));
  if (!state.clamped.empty()) {
    std::vector<int> nodes;
    nodes.reserve(state.clamped.size());
    for (auto [node, cls] : state.clamped) nodes.push_back(node);
    beliefs = ad::overwrite_rows(tape, beliefs, nodes,
                                 one_hot_log_rows(state.clamped, c));
  }

  check_finite(tape.value(messages), "bp_step messages");
  check_finite(tape.value(beliefs), "bp_step beliefs");

  BeliefState next;
  next.log_beliefs = beliefs;
  next.log_messages = messages;
  next.log_initial = state.log_initial;
  next.iteration = state.iteration + 1;
  next.clamped = state.clamped;
  return next;
}

BpRun run_bp(ad::Tape& tape, const Graph& graph, ad::Var log_self_beliefs,
             ad::Var log_coupling, int steps, const ClampList& clamped,
             const BpRunOptions& options) {
  if (steps < 0) throw InputError("run_bp: steps must be >= 0");
  BpRun run;
  run.state = init_state(tape, graph, log_self_beliefs, clamped);
  if (options.keep_trajectory) {
    run.trajectory.push_back(tape.value(run.state.log_beliefs).array().exp());
  }
  BpStepOptions step_options;
  step_options.aggregation_edges = options.aggregation_edges;
  for (int t = 0; t < steps; ++t) {
    run.state = bp_step(tape, graph, run.state, log_coupling, step_options);
    if (options.keep_trajectory) {
      run.trajectory.push_back(tape.value(run.state.log_beliefs).array().exp());
    }
  }
  return run;
}

std::vector<double> residual_trace(const std::vector<Matrix>& trajectory) {
  if (trajectory.size() < 2) {
    throw InputError("residual_trace: need at least 2 snapshots");
  }
  const Matrix& last = trajectory.back();
  std::vector<double> residuals;
  residuals.reserve(trajectory.size());
  for (const Matrix& snap : trajectory) {
    residuals.push_back((snap - last).rowwise().norm().mean());
  }
  return residuals;
}

std::vector<int> sample_aggregation_cap(const Graph& graph, int max_neighbors,
                                        Rng& rng) {
  if (max_neighbors < 1) {
    throw InputError("sample_aggregation_cap: max_neighbors must be >= 1");
  }
  std::vector<int> keep;
  keep.reserve(graph.num_directed_edges());
  std::vector<int> block;
  for (int i = 0; i < graph.num_nodes(); ++i) {
    auto [lo, hi] = graph.incoming_range(i);
    const int deg = hi - lo;
    if (deg <= max_neighbors) {
      for (int e = lo; e < hi; ++e) keep.push_back(e);
      continue;
    }
    block.resize(deg);
    for (int k = 0; k < deg; ++k) block[k] = lo + k;
    for (int k = 0; k < max_neighbors; ++k) {
      std::swap(block[k], block[k + rng.uniform_int(deg - k)]);
    }
    std::sort(block.begin(), block.begin() + max_neighbors);
    keep.insert(keep.end(), block.begin(), block.begin() + max_neighbors);
  }
  return keep;
}

ComputationTree sample_tree(const Graph& graph, int root, int depth,
                            int fanout, Rng& rng) {
  if (root < 0 || root >= graph.num_nodes()) {
    throw InputError("sample_tree: root out of range");
  }
  if (depth < 1) throw InputError("sample_tree: depth must be >= 1");
  if (fanout < 1) throw InputError("sample_tree: fanout must be >= 1");

  ComputationTree tree;
  tree.orig_ids.push_back(root);
  tree.parent.push_back(-1);
  tree.levels.emplace_back(0, 1);

  std::vector<int> picked;
  for (int level = 0; level < depth; ++level) {
    const auto [begin, end] = tree.levels[level];
    const int next_begin = tree.size();
    for (int u = begin; u < end; ++u) {
      const int node = tree.orig_ids[u];
      const int parent_orig =
          tree.parent[u] < 0 ? -1 : tree.orig_ids[tree.parent[u]];
      picked.clear();
      auto [lo, hi] = graph.incoming_range(node);
      const auto src = graph.src();
      for (int e = lo; e < hi; ++e) {
        if (src[e] != parent_orig) picked.push_back(src[e]);
      }
      if (static_cast<int>(picked.size()) > fanout) {
        for (int k = 0; k < fanout; ++k) {
          std::swap(picked[k],
                    picked[k + rng.uniform_int(
                                   static_cast<int>(picked.size()) - k)]);
        }
        picked.resize(fanout);
        std::sort(picked.begin(), picked.end());
      }
      for (int nbr : picked) {
        tree.orig_ids.push_back(nbr);
        tree.parent.push_back(u);
      }
    }
    if (tree.size() == next_begin) break;  // nothing expanded
    tree.levels.emplace_back(next_begin, tree.size());
  }
  return tree;
}

Forest make_forest(std::span<const ComputationTree> trees) {
  Forest forest;
  std::size_t max_levels = 0;
  for (const auto& t : trees) max_levels = std::max(max_levels, t.levels.size());

  // tree-local index -> position within the forest level
  std::vector<std::vector<int>> pos(trees.size());
  for (std::size_t ti = 0; ti < trees.size(); ++ti) {
    pos[ti].assign(trees[ti].size(), -1);
  }

  for (std::size_t level = 0; level < max_levels; ++level) {
    const int begin = static_cast<int>(forest.orig_ids.size());
    for (std::size_t ti = 0; ti < trees.size(); ++ti) {
      const auto& t = trees[ti];
      if (level >= t.levels.size()) continue;
      const auto [lo, hi] = t.levels[level];
      for (int u = lo; u < hi; ++u) {
        pos[ti][u] = static_cast<int>(forest.orig_ids.size()) - begin;
        forest.orig_ids.push_back(t.orig_ids[u]);
        forest.weights.push_back(1.0);
        forest.parent_pos.push_back(t.parent[u] < 0 ? -1
                                                    : pos[ti][t.parent[u]]);
      }
    }
    forest.levels.emplace_back(begin, static_cast<int>(forest.orig_ids.size()));
  }
  return forest;
}

ForestBp forest_bp(ad::Tape& tape, const Forest& forest,
                   ad::Var log_self_beliefs, ad::Var log_coupling) {
  if (forest.levels.empty() || forest.num_roots() == 0) {
    throw InputError("forest_bp: empty forest");
  }
  const int num_levels = static_cast<int>(forest.levels.size());

  auto level_ids = [&](int level) {
    const auto [lo, hi] = forest.levels[level];
    return std::vector<int>(forest.orig_ids.begin() + lo,
                            forest.orig_ids.begin() + hi);
  };

  ForestBp out;
  out.level_messages.assign(num_levels, ad::Var{});

  ad::Var beliefs =
      ad::gather_rows(tape, log_self_beliefs, level_ids(num_levels - 1));
  for (int level = num_levels - 1; level >= 1; --level) {
    const auto [lo, hi] = forest.levels[level];
    ad::Var messages = ad::log_softmax_rows(
        tape, ad::log_matmul_exp(tape, beliefs, log_coupling));
    out.level_messages[level] = messages;

    bool weighted = false;
    Vector w(hi - lo);
    std::vector<int> parents(hi - lo);
    for (int k = lo; k < hi; ++k) {
      w[k - lo] = forest.weights[k];
      parents[k - lo] = forest.parent_pos[k];
      if (forest.weights[k] != 1.0) weighted = true;
    }
    ad::Var contrib =
        weighted ? ad::scale_rows(tape, messages, std::move(w)) : messages;

    const auto [plo, phi] = forest.levels[level - 1];
    ad::Var aggregate =
        ad::segment_sum(tape, contrib, std::move(parents), phi - plo);
    beliefs = ad::log_softmax_rows(
        tape, ad::add(tape, ad::gather_rows(tape, log_self_beliefs,
                                            level_ids(level - 1)),
                      aggregate));
  }
  out.root_beliefs = beliefs;
  return out;
}

ad::Var tree_bp(ad::Tape& tape, const ComputationTree& tree,
                ad::Var log_self_beliefs, ad::Var log_coupling,
                const std::vector<double>* weights) {
  Forest forest = make_forest(std::span(&tree, 1));
  if (weights != nullptr) {
    if (static_cast<int>(weights->size()) != tree.size()) {
      throw InputError("tree_bp: need one weight per tree node");
    }
    // forest order equals tree order for a single tree
    forest.weights = *weights;
    forest.weights[0] = 1.0;
  }
  ForestBp result = forest_bp(tape, forest, log_self_beliefs, log_coupling);
  return result.root_beliefs;
}

}  // namespace gbpn
