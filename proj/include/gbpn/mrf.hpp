#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gbpn/bundle.hpp"
#include "gbpn/graph.hpp"
#include "gbpn/types.hpp"

namespace gbpn {

/// Ground-truth pairwise MRF over class labels: per-node self log-potentials
/// plus one symmetric class-coupling log-matrix shared by every edge.
struct MrfSpec {
  Graph graph;
  int num_classes = 0;
  Matrix self_log_potentials;  // n x c, log h_i
  Matrix log_coupling;         // c x c symmetric, log H
};

/// One label per node, each in {0..c-1}.
using LabelConfig = std::vector<int>;

/// (node, class) pairs pinning nodes to observed labels.
using ClampList = std::vector<std::pair<int, int>>;

/// Sum of self log-potentials plus coupling log-potentials, each undirected
/// edge counted once. The log of the unnormalized density.
double log_unnormalized(const MrfSpec& spec, const LabelConfig& y);

/// Exact per-node conditional marginals by full enumeration over all free
/// nodes' configurations; clamped nodes come out one-hot. Guarded at 2^24
/// configurations. Each row sums to 1.
Matrix exact_marginals(const MrfSpec& spec, const ClampList& clamped = {});

/// Single-site Gibbs sampler, fixed ascending node order within a sweep.
/// Runs burn_in sweeps, then records one configuration per sweep.
std::vector<LabelConfig> gibbs_sample(const MrfSpec& spec, int num_sweeps,
                                      int burn_in, std::uint64_t seed);

/// Metropolis sampler: per site, propose a uniformly random different class
/// (the flip when c = 2), accept with min(1, exp(delta log phi)).
std::vector<LabelConfig> metropolis_sample(const MrfSpec& spec, int num_sweeps,
                                           int burn_in, std::uint64_t seed);

/// 4-neighbor lattice with rows*cols nodes.
Graph grid_graph(int rows, int cols);

enum class SyntheticKind { IsingPlus, IsingMinus, MrfPlus, MrfMinus };

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string to_string(SyntheticKind kind);

/// Grid coordinates normalized to [-1, 1] per axis, one (r1, r2) row per node.
Matrix grid_coordinates(int rows, int cols);

/// Ground-truth generative models for the four synthetic dataset families.
/// Self potentials are fixed functions of the normalized coordinates; the
/// coupling is +-J structured (diagonal-dominant for the "+" kinds).
MrfSpec synthetic_spec(SyntheticKind kind, int rows, int cols,
                       double coupling_strength);

/// Samples one labeling by MCMC (Metropolis for the 2-class kinds, Gibbs for
/// the 3-class kinds, 1000 burn-in sweeps), attaches coordinates as features
/// and a seeded 30/20/50 split.
GraphBundle generate_dataset(SyntheticKind kind, int rows, int cols,
                             double coupling_strength, std::uint64_t seed);

/// Fraction of undirected edges whose endpoints share a label.
double edge_agreement(const Graph& graph, const std::vector<int>& labels);

}  // namespace gbpn
