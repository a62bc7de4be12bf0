#pragma once

#include <span>
#include <utility>
#include <vector>

#include "gbpn/graph.hpp"
#include "gbpn/mrf.hpp"
#include "gbpn/rng.hpp"
#include "gbpn/tape.hpp"
#include "gbpn/types.hpp"

namespace gbpn {

/// One belief-propagation trajectory, recorded on a tape so the whole
/// T-step inference stays differentiable. Rows of log_beliefs and
/// log_messages are kept log-normalized; clamped nodes hold one-hot beliefs
/// (kLogZero off-class), re-imposed after every step.
struct BeliefState {
  ad::Var log_beliefs;   // num_nodes x c
  ad::Var log_messages;  // num_directed_edges x c, row e = m_{src(e) -> dst(e)}
  ad::Var log_initial;   // num_nodes x c self beliefs with clamps applied
  int iteration = 0;
  ClampList clamped;     // sorted by node
};

/// Beliefs start at the (clamped) self beliefs; messages start uniform.
BeliefState init_state(ad::Tape& tape, const Graph& graph,
                       ad::Var log_self_beliefs, const ClampList& clamped);

struct BpStepOptions {
  /// When set, belief aggregation sums only this sorted subset of directed
  /// edges (per-node neighbor caps); message updates still use all edges.
  const std::vector<int>* aggregation_edges = nullptr;
};

/// One synchronous flooding update: all iteration-t values depend only on
/// iteration t-1. Message m_{j->i} is LSE over the sender's classes of
/// coupling + sender belief - twin message, then renormalized; beliefs are
/// the initial self beliefs plus incoming messages, renormalized.
BeliefState bp_step(ad::Tape& tape, const Graph& graph,
                    const BeliefState& state, ad::Var log_coupling,
                    const BpStepOptions& options = {});

struct BpRunOptions {
  bool keep_trajectory = false;
  const std::vector<int>* aggregation_edges = nullptr;
};

struct BpRun {
  BeliefState state;
  /// Probability-space beliefs after 0..T steps (empty unless requested).
  std::vector<Matrix> trajectory;
};

BpRun run_bp(ad::Tape& tape, const Graph& graph, ad::Var log_self_beliefs,
             ad::Var log_coupling, int steps, const ClampList& clamped,
             const BpRunOptions& options = {});

/// r(t) = mean over nodes of the Euclidean distance (probability space)
/// between the step-t belief and the final snapshot; r(last) = 0.
std::vector<double> residual_trace(const std::vector<Matrix>& trajectory);

/// Uniformly keeps at most max_neighbors incoming edges per node; the
/// returned sorted edge subset plugs into BpStepOptions.
std::vector<int> sample_aggregation_cap(const Graph& graph, int max_neighbors,
                                        Rng& rng);

/// Unrolled (sub-sampled) computation tree rooted at a node. Nodes are
/// stored level-major with the root first; a child never repeats its
/// parent's original id.
struct ComputationTree {
  std::vector<int> orig_ids;
  std::vector<int> parent;                       // tree index, -1 for root
  std::vector<std::pair<int, int>> levels;       // [begin,end) per level
  int root() const { return 0; }
  int size() const { return static_cast<int>(orig_ids.size()); }
};

/// Expands min(fanout, available) uniformly sampled neighbors per node,
/// excluding each node's tree parent. Sampled contributions are not
/// rescaled, so tree inference targets the scaled aggregate of a capped
/// neighborhood.
ComputationTree sample_tree(const Graph& graph, int root, int depth,
                            int fanout, Rng& rng);

/// Flattened batch of computation trees sharing one upward pass per level.
struct Forest {
  std::vector<int> orig_ids;                 // level-major across the batch
  std::vector<int> parent_pos;               // position within previous level
  std::vector<double> weights;               // message weight into parent
  std::vector<std::pair<int, int>> levels;   // [begin,end) per level
  int num_roots() const { return levels.empty() ? 0 : levels[0].second; }
};

Forest make_forest(std::span<const ComputationTree> trees);

struct ForestBp {
  ad::Var root_beliefs;                // num_roots x c, log-normalized
  std::vector<ad::Var> level_messages; // [l] = messages level l -> l-1 (l >= 1)
};

/// Leaves-to-root pass: each node's belief is its self belief plus the
/// weighted messages of its sampled children, renormalized; parent exclusion
/// replaces the division term of full-graph BP. log_self_beliefs rows must
/// be log-normalized (clamps already baked in as one-hot rows).
ForestBp forest_bp(ad::Tape& tape, const Forest& forest,
                   ad::Var log_self_beliefs, ad::Var log_coupling);

/// Root log-belief of a single computation tree. weights, when given, holds
/// one multiplier per tree node (the root entry is ignored); importance
/// weights 1/(|N|*p) make the aggregate unbiased for the scaled full sum.
ad::Var tree_bp(ad::Tape& tape, const ComputationTree& tree,
                ad::Var log_self_beliefs, ad::Var log_coupling,
                const std::vector<double>* weights = nullptr);

/// One-hot log rows (0 on the clamped class, kLogZero elsewhere), aligned
/// with the clamp list order.
Matrix one_hot_log_rows(const ClampList& clamps, int num_classes);

/// Validates, sorts by node, and rejects contradictory duplicates.
ClampList normalize_clamps(const ClampList& clamps, int num_nodes,
                           int num_classes);

}  // namespace gbpn
