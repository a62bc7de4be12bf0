#include "gbpn/mrf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gbpn/dataset_io.hpp"
#include "gbpn/errors.hpp"
#include "gbpn/rng.hpp"

namespace gbpn {

namespace {

void check_spec(const MrfSpec& spec) {
  const int n = spec.graph.num_nodes();
  const int c = spec.num_classes;
  if (c < 1) throw InputError("MrfSpec: num_classes must be >= 1");
  if (spec.self_log_potentials.rows() != n ||
      spec.self_log_potentials.cols() != c) {
    throw InputError("MrfSpec: self_log_potentials must be num_nodes x c");
  }
  if (spec.log_coupling.rows() != c || spec.log_coupling.cols() != c) {
    throw InputError("MrfSpec: log_coupling must be c x c");
  }
  const double asym =
      (spec.log_coupling - spec.log_coupling.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9) throw InputError("MrfSpec: log_coupling must be symmetric");
}

void check_config(const MrfSpec& spec, const LabelConfig& y) {
  if (static_cast<int>(y.size()) != spec.graph.num_nodes()) {
    throw InputError("LabelConfig: length must equal num_nodes");
  }
  for (int v : y) {
    if (v < 0 || v >= spec.num_classes) {
      throw InputError("LabelConfig: class index out of range");
    }
  }
}

// log phi restricted to terms touching node i, with y[i] replaced by k.
double local_log_potential(const MrfSpec& spec, const LabelConfig& y, int i,
                           int k) {
  double v = spec.self_log_potentials(i, k);
  auto [lo, hi] = spec.graph.incoming_range(i);
  const auto src = spec.graph.src();
  for (int e = lo; e < hi; ++e) v += spec.log_coupling(k, y[src[e]]);
  return v;
}

double log_unnormalized_unchecked(const MrfSpec& spec, const LabelConfig& y) {
  double v = 0.0;
  for (int i = 0; i < spec.graph.num_nodes(); ++i) {
    v += spec.self_log_potentials(i, y[i]);
  }
  const auto src = spec.graph.src();
  const auto dst = spec.graph.dst();
  for (int e = 0; e < spec.graph.num_directed_edges(); ++e) {
    if (src[e] < dst[e]) v += spec.log_coupling(y[src[e]], y[dst[e]]);
  }
  return v;
}

LabelConfig random_config(const MrfSpec& spec, Rng& rng) {
  LabelConfig y(spec.graph.num_nodes());
  for (int& v : y) v = rng.uniform_int(spec.num_classes);
  return y;
}

template <typename PerSite>
std::vector<LabelConfig> run_chain(const MrfSpec& spec, int num_sweeps,
                                   int burn_in, std::uint64_t seed,
                                   PerSite resample) {
  check_spec(spec);
  if (num_sweeps < 1) throw InputError("sampler: num_sweeps must be >= 1");
  if (burn_in < 0) throw InputError("sampler: burn_in must be >= 0");
  Rng rng(seed);
  LabelConfig y = random_config(spec, rng);
  std::vector<LabelConfig> out;
  out.reserve(num_sweeps);
  const int n = spec.graph.num_nodes();
  for (int sweep = 0; sweep < burn_in + num_sweeps; ++sweep) {
    for (int i = 0; i < n; ++i) resample(y, i, rng);
    if (sweep >= burn_in) out.push_back(y);
  }
  return out;
}

}  // namespace

double log_unnormalized(const MrfSpec& spec, const LabelConfig& y) {
  check_spec(spec);
  check_config(spec, y);
  return log_unnormalized_unchecked(spec, y);
}

Matrix exact_marginals(const MrfSpec& spec, const ClampList& clamped) {
  check_spec(spec);
  const int n = spec.graph.num_nodes();
  const int c = spec.num_classes;

  LabelConfig y(n, 0);
  std::vector<bool> is_clamped(n, false);
  for (auto [i, k] : clamped) {
    if (i < 0 || i >= n) throw InputError("exact_marginals: clamp node out of range");
    if (k < 0 || k >= c) throw InputError("exact_marginals: clamp class out of range");
    if (is_clamped[i] && y[i] != k) {
      throw InputError("exact_marginals: contradictory clamps on node " +
                       std::to_string(i));
    }
    is_clamped[i] = true;
    y[i] = k;
  }
  std::vector<int> free_nodes;
  for (int i = 0; i < n; ++i) {
    if (!is_clamped[i]) free_nodes.push_back(i);
  }
  const double log2_configs =
      static_cast<double>(free_nodes.size()) * std::log2(std::max(2, c));
  if (c > 1 && log2_configs > 24.0) {
    throw CapacityError("exact_marginals: c^free = 2^" +
                        std::to_string(log2_configs) + " exceeds 2^24 guard");
  }

  // Shift by the maximum attainable log phi so weights never overflow.
  double shift = 0.0;
  for (int i = 0; i < n; ++i) {
    shift += spec.self_log_potentials.row(i).maxCoeff();
  }
  shift += spec.graph.num_undirected_edges() * spec.log_coupling.maxCoeff();

  Matrix marginals = Matrix::Zero(n, c);
  double total = 0.0;
  while (true) {
    const double w = std::exp(log_unnormalized_unchecked(spec, y) - shift);
    total += w;
    for (int i = 0; i < n; ++i) marginals(i, y[i]) += w;
    // odometer over free nodes, last index fastest
    int p = static_cast<int>(free_nodes.size()) - 1;
    while (p >= 0 && y[free_nodes[p]] == c - 1) {
      y[free_nodes[p]] = 0;
      --p;
    }
    if (p < 0) break;
    ++y[free_nodes[p]];
  }
  if (total <= 0.0 || !std::isfinite(total)) {
    throw NumericError("exact_marginals: degenerate total mass");
  }
  for (int i = 0; i < n; ++i) marginals.row(i) /= marginals.row(i).sum();
  return marginals;
}

std::vector<LabelConfig> gibbs_sample(const MrfSpec& spec, int num_sweeps,
                                      int burn_in, std::uint64_t seed) {
  const int c = spec.num_classes;
  Vector logits(c), probs(c);
  return run_chain(spec, num_sweeps, burn_in, seed,
                   [&](LabelConfig& y, int i, Rng& rng) {
                     for (int k = 0; k < c; ++k) {
                       logits[k] = local_log_potential(spec, y, i, k);
                     }
                     const double m = logits.maxCoeff();
                     probs = (logits.array() - m).exp();
                     double u = rng.uniform() * probs.sum();
                     int k = 0;
                     while (k + 1 < c && u >= probs[k]) {
                       u -= probs[k];
                       ++k;
                     }
                     y[i] = k;
                   });
}

std::vector<LabelConfig> metropolis_sample(const MrfSpec& spec, int num_sweeps,
                                           int burn_in, std::uint64_t seed) {
  const int c = spec.num_classes;
  if (c < 2) throw InputError("metropolis_sample: needs at least 2 classes");
  return run_chain(spec, num_sweeps, burn_in, seed,
                   [&](LabelConfig& y, int i, Rng& rng) {
                     const int cur = y[i];
                     const int cand = (cur + 1 + rng.uniform_int(c - 1)) % c;
                     const double delta = local_log_potential(spec, y, i, cand) -
                                          local_log_potential(spec, y, i, cur);
                     if (delta >= 0.0 || rng.uniform() < std::exp(delta)) {
                       y[i] = cand;
                     }
                   });
}

Graph grid_graph(int rows, int cols) {
  if (rows < 1 || cols < 1) throw InputError("grid_graph: rows, cols must be >= 1");
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<std::size_t>(rows) * cols * 2);
  for (int r = 0; r < rows; ++r) {
    for (int q = 0; q < cols; ++q) {
      const int id = r * cols + q;
      if (q + 1 < cols) edges.emplace_back(id, id + 1);
      if (r + 1 < rows) edges.emplace_back(id, id + cols);
    }
  }
  return Graph::build(rows * cols, edges);
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "ising+") return SyntheticKind::IsingPlus;
  if (name == "ising-") return SyntheticKind::IsingMinus;
  if (name == "mrf+") return SyntheticKind::MrfPlus;
  if (name == "mrf-") return SyntheticKind::MrfMinus;
  throw InputError("unknown synthetic kind '" + name +
                   "' (expected ising+, ising-, mrf+, mrf-)");
}

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::IsingPlus: return "ising+";
    case SyntheticKind::IsingMinus: return "ising-";
    case SyntheticKind::MrfPlus: return "mrf+";
    case SyntheticKind::MrfMinus: return "mrf-";
  }
  throw InputError("unknown synthetic kind");
}

Matrix grid_coordinates(int rows, int cols) {
  if (rows < 1 || cols < 1) throw InputError("grid_coordinates: rows, cols must be >= 1");
  Matrix coords(rows * cols, 2);
  for (int r = 0; r < rows; ++r) {
    for (int q = 0; q < cols; ++q) {
      const int id = r * cols + q;
      coords(id, 0) = rows == 1 ? 0.0 : -1.0 + 2.0 * r / (rows - 1);
      coords(id, 1) = cols == 1 ? 0.0 : -1.0 + 2.0 * q / (cols - 1);
    }
  }
  return coords;
}

MrfSpec synthetic_spec(SyntheticKind kind, int rows, int cols,
                       double coupling_strength) {
  MrfSpec spec;
  spec.graph = grid_graph(rows, cols);
  const Matrix coords = grid_coordinates(rows, cols);
  const int n = spec.graph.num_nodes();
  const double j = coupling_strength;

  const auto log_sigmoid = [](double x) {
    // -log(1 + exp(-x)), stable on both tails
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  };

  switch (kind) {
    case SyntheticKind::IsingPlus:
    case SyntheticKind::IsingMinus: {
      spec.num_classes = 2;
      spec.self_log_potentials.resize(n, 2);
      for (int i = 0; i < n; ++i) {
        const double f = 0.35 * coords(i, 0) * coords(i, 1);
        spec.self_log_potentials(i, 0) = -f;
        spec.self_log_potentials(i, 1) = f;
      }
      Matrix h(2, 2);
      h << j, -j, -j, j;
      spec.log_coupling = kind == SyntheticKind::IsingPlus ? h : Matrix(-h);
      break;
    }
    case SyntheticKind::MrfPlus:
    case SyntheticKind::MrfMinus: {
      spec.num_classes = 3;
      const bool plus = kind == SyntheticKind::MrfPlus;
      const double gain = plus ? 0.2 : 0.6;
      const double offset = plus ? 0.65 : 0.0;
      spec.self_log_potentials.resize(n, 3);
      for (int i = 0; i < n; ++i) {
        const double s1 =
            coords(i, 0) * coords(i, 0) + coords(i, 1) * coords(i, 1) - offset;
        spec.self_log_potentials(i, 0) = log_sigmoid(0.0);
        spec.self_log_potentials(i, 1) = log_sigmoid(gain * s1);
        spec.self_log_potentials(i, 2) = log_sigmoid(gain * -s1);
      }
      Matrix h = j * (2.0 * Matrix::Identity(3, 3) - Matrix::Ones(3, 3));
      spec.log_coupling = plus ? h : Matrix(-h);
      break;
    }
  }
  return spec;
}

GraphBundle generate_dataset(SyntheticKind kind, int rows, int cols,
                             double coupling_strength, std::uint64_t seed) {
  MrfSpec spec = synthetic_spec(kind, rows, cols, coupling_strength);
  Rng root(seed);
  const std::uint64_t mcmc_seed = root.next_u64();
  const std::uint64_t split_seed = root.next_u64();

  constexpr int kBurnIn = 1000;
  const bool ising = spec.num_classes == 2;
  const LabelConfig labels =
      ising ? metropolis_sample(spec, 1, kBurnIn, mcmc_seed)[0]
            : gibbs_sample(spec, 1, kBurnIn, mcmc_seed)[0];

  GraphBundle bundle;
  bundle.graph = spec.graph;
  bundle.features = grid_coordinates(rows, cols);
  bundle.labels = labels;
  bundle.num_classes = spec.num_classes;
  Splits splits = split_nodes(bundle.num_nodes(), {0.3, 0.2, 0.5}, split_seed);
  bundle.train_ids = std::move(splits.train);
  bundle.val_ids = std::move(splits.val);
  bundle.test_ids = std::move(splits.test);
  bundle.notes = to_string(kind) + " " + std::to_string(rows) + "x" +
                 std::to_string(cols) + " J=" + std::to_string(coupling_strength) +
                 " seed=" + std::to_string(seed);
  bundle.validate();
  return bundle;
}

double edge_agreement(const Graph& graph, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != graph.num_nodes()) {
    throw InputError("edge_agreement: labels length must equal num_nodes");
  }
  if (graph.num_directed_edges() == 0) return 0.0;
  int agree = 0;
  const auto src = graph.src();
  const auto dst = graph.dst();
  for (int e = 0; e < graph.num_directed_edges(); ++e) {
    if (labels[src[e]] == labels[dst[e]]) ++agree;
  }
  return static_cast<double>(agree) / graph.num_directed_edges();
}

}  // namespace gbpn
