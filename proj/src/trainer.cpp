#include "gbpn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gbpn/bp.hpp"
#include "gbpn/errors.hpp"
#include "gbpn/rng.hpp"

namespace gbpn {

namespace {

ClampList clamps_for(const std::vector<int>& ids,
                     const std::vector<int>& labels) {
  ClampList clamps;
  clamps.reserve(ids.size());
  for (int id : ids) clamps.emplace_back(id, labels[id]);
  std::sort(clamps.begin(), clamps.end());
  return clamps;
}

EpochStats evaluate_full(const GraphBundle& bundle, const ModelParams& params,
                         const ModelConfig& config, bool condition_on_val) {
  ad::Tape tape;
  ParamVars vars = bind_params(tape, params, false);
  ClampList clamps;
  if (config.mode == Mode::Transductive) {
    std::vector<int> conditioned = bundle.train_ids;
    if (condition_on_val) {
      conditioned.insert(conditioned.end(), bundle.val_ids.begin(),
                         bundle.val_ids.end());
    }
    clamps = clamps_for(conditioned, bundle.labels);
  }
  ad::Var beliefs = gbpn_forward(tape, bundle.graph, bundle.features, vars,
                                 config, clamps, nullptr);
  const Matrix& lb = tape.value(beliefs);
  EpochStats stats;
  stats.train_acc = accuracy(lb, bundle.labels, bundle.train_ids);
  stats.val_acc = accuracy(lb, bundle.labels, bundle.val_ids);
  stats.test_acc = accuracy(lb, bundle.labels, bundle.test_ids);
  return stats;
}

// Latest checkpoint among equal validation accuracies wins: on a plateau the
// more-converged parameters are kept.
void track_best(TrainResult& result, const ModelParams& params,
                const EpochStats& stats, double& best_val) {
  if (stats.val_acc >= best_val) {
    best_val = stats.val_acc;
    result.best_params = params;
    result.best_epoch = stats.epoch;
    result.best_val_acc = stats.val_acc;
    result.test_acc_at_best = stats.test_acc;
  }
}

}  // namespace

void AdamW::step(std::span<Matrix* const> params,
                 std::span<const Matrix> grads) {
  if (params.size() != grads.size()) {
    throw InputError("adamw_step: one gradient per parameter required");
  }
  if (first_moment_.empty()) {
    for (const Matrix* p : params) {
      first_moment_.push_back(Matrix::Zero(p->rows(), p->cols()));
      second_moment_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (first_moment_.size() != params.size()) {
    throw InputError("adamw_step: parameter count changed between steps");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw InputError("adamw_step: gradient shape mismatch");
    }
    p *= 1.0 - config_.lr * config_.weight_decay;
    Matrix& m = first_moment_[i];
    Matrix& v = second_moment_[i];
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    p.array() -= config_.lr * (m.array() / bc1) /
                 ((v.array() / bc2).sqrt() + config_.eps);
  }
}

SamplingMode parse_sampling_mode(const std::string& name) {
  if (name == "uniform") return SamplingMode::Uniform;
  if (name == "exp3") return SamplingMode::Exp3;
  throw InputError("unknown sampling mode '" + name +
                   "' (expected uniform or exp3)");
}

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::Uniform ? "uniform" : "exp3";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InputError("train config: epochs must be >= 1");
  if (batch_size < 1) throw InputError("train config: batch_size must be >= 1");
  if (fanout < 1) throw InputError("train config: fanout must be >= 1");
  if (exp3_loss_clip <= 0.0) {
    throw InputError("train config: exp3_loss_clip must be positive");
  }
}

TrainResult train_full_batch(const GraphBundle& bundle,
                             const ModelConfig& model_config,
                             const TrainConfig& train_config) {
  bundle.validate();
  model_config.validate();
  train_config.validate();
  if (bundle.train_ids.empty()) {
    throw InputError("train_full_batch: empty train split");
  }

  Rng root(train_config.seed);
  Rng init_rng = root.fork(1);
  Rng drop_rng = root.fork(2);
  Rng cond_rng = root.fork(3);
  ModelParams params =
      ModelParams::init(bundle.feature_dim(), bundle.num_classes,
                        model_config.hidden_width, init_rng);
  AdamW optim(train_config.optim);
  const std::vector<Matrix*> tensors = params.tensors();
  const bool transductive = model_config.mode == Mode::Transductive;

  TrainResult result;
  result.model_config = model_config;
  double best_val = -1.0;

  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    ClampList step_clamps;
    std::vector<int> loss_nodes;
    if (transductive) {
      std::vector<int> shuffled = bundle.train_ids;
      cond_rng.shuffle(shuffled);
      const std::size_t half = shuffled.size() / 2;
      std::vector<int> conditioned(shuffled.begin(), shuffled.begin() + half);
      loss_nodes.assign(shuffled.begin() + half, shuffled.end());
      std::sort(loss_nodes.begin(), loss_nodes.end());
      step_clamps = clamps_for(conditioned, bundle.labels);
    } else {
      loss_nodes = bundle.train_ids;
    }

    ad::Tape tape;
    ParamVars vars = bind_params(tape, params, true);
    Rng* dropout_rng = model_config.dropout > 0.0 ? &drop_rng : nullptr;
    ad::Var beliefs = gbpn_forward(tape, bundle.graph, bundle.features, vars,
                                   model_config, step_clamps, dropout_rng);
    ad::Var batch = ad::gather_rows(tape, beliefs, loss_nodes);
    ad::Var loss =
        marginal_nll(tape, batch, loss_nodes, bundle.labels, bundle.graph,
                     model_config.beta, model_config.weighting);
    tape.backward(loss);
    std::vector<Matrix> grads;
    grads.reserve(tensors.size());
    for (ad::Var v : vars.all()) grads.push_back(tape.grad_or_zero(v));
    optim.step(tensors, grads);

    EpochStats stats = evaluate_full(bundle, params, model_config,
                                     train_config.condition_on_validation);
    stats.epoch = epoch;
    stats.loss = tape.value(loss)(0, 0);
    result.history.push_back(stats);
    track_best(result, params, stats, best_val);
  }
  if (bundle.val_ids.empty()) {
    // no selection signal: return the final parameters
    result.best_params = params;
    result.best_epoch = train_config.epochs;
    result.best_val_acc = 0.0;
    result.test_acc_at_best = result.history.back().test_acc;
  }
  return result;
}

// ---- importance sampling -------------------------------------------------

Vector optimal_sampling_distribution(const Matrix& messages) {
  if (messages.rows() < 1) {
    throw InputError("optimal_sampling_distribution: need >= 1 neighbor");
  }
  Vector norms = messages.rowwise().norm();
  const double total = norms.sum();
  if (total <= 0.0) {
    return Vector::Constant(messages.rows(),
                            1.0 / static_cast<double>(messages.rows()));
  }
  return norms / total;
}

Vector importance_estimate(const Matrix& messages,
                           const std::vector<int>& sampled,
                           const Vector& probs, int neighborhood_size) {
  if (probs.size() != messages.rows()) {
    throw InputError("importance_estimate: one probability per neighbor");
  }
  if (neighborhood_size < 1) {
    throw InputError("importance_estimate: neighborhood_size must be >= 1");
  }
  Vector z = Vector::Zero(messages.cols());
  for (int j : sampled) {
    if (j < 0 || j >= messages.rows()) {
      throw InputError("importance_estimate: sampled index out of range");
    }
    if (probs[j] <= 0.0) {
      throw InputError("importance_estimate: zero probability on sampled index " +
                       std::to_string(j));
    }
    z += messages.row(j).transpose() / (neighborhood_size * probs[j]);
  }
  return z;
}

double estimator_variance(const Matrix& messages, const Vector& probs) {
  if (probs.size() != messages.rows()) {
    throw InputError("estimator_variance: one probability per neighbor");
  }
  double second_moment = 0.0;
  for (Eigen::Index j = 0; j < messages.rows(); ++j) {
    const double nj = messages.row(j).squaredNorm();
    if (probs[j] <= 0.0) {
      if (nj > 0.0) {
        throw InputError("estimator_variance: zero probability on a neighbor "
                         "with nonzero message");
      }
      continue;
    }
    second_moment += nj / probs[j];
  }
  const double mean_sq = messages.colwise().sum().squaredNorm();
  return second_moment - mean_sq;
}

Exp3State make_exp3_state(int num_arms, double loss_clip) {
  if (num_arms < 1) throw InputError("make_exp3_state: need >= 1 arm");
  if (loss_clip <= 0.0) throw InputError("make_exp3_state: clip must be > 0");
  Exp3State state;
  state.log_weights.assign(static_cast<std::size_t>(num_arms), 0.0);
  state.loss_clip = loss_clip;
  return state;
}

Vector Exp3State::probabilities() const {
  const int k = num_arms();
  if (k == 0) throw InputError("Exp3State: uninitialized");
  Vector lw = Eigen::Map<const Vector>(log_weights.data(), k);
  const double mx = lw.maxCoeff();
  Vector w = (lw.array() - mx).exp();
  Vector p = w / w.sum();
  return (1.0 - exploration) * p +
         Vector::Constant(k, exploration / static_cast<double>(k));
}

void exp3_update(Exp3State& state, int arm, const Vector& log_message) {
  const int k = state.num_arms();
  if (arm < 0 || arm >= k) throw InputError("exp3_update: arm out of range");
  ++state.updates;
  const double norm = log_message.norm();
  if (norm == 0.0) return;  // zero loss: distribution unchanged
  const double p = state.probabilities()[arm];
  double weighted_loss = -norm / (p * p * p);  // loss -|m|/p^2, reweighted by 1/p
  weighted_loss = std::clamp(weighted_loss, -state.loss_clip, state.loss_clip);
  state.cumulative_sq_loss += weighted_loss * weighted_loss;
  const double rate = std::sqrt(std::log(static_cast<double>(std::max(2, k))) /
                                std::max(1.0, state.cumulative_sq_loss));
  state.log_weights[arm] -= rate * weighted_loss;
  const double mx =
      *std::max_element(state.log_weights.begin(), state.log_weights.end());
  for (double& lw : state.log_weights) lw -= mx;
}

// ---- mini-batch trainer ---------------------------------------------------

struct MiniBatchTrainer::Impl {
  const GraphBundle& bundle;
  ModelConfig mcfg;
  TrainConfig tcfg;
  ModelParams params;
  std::vector<Matrix*> tensors;
  AdamW optim;
  std::vector<Exp3State> exp3;
  Rng sample_rng;
  Rng drop_rng;
  int epoch_count = 0;
  double last_epoch_loss = 0.0;

  struct Draw {
    int owner = -1;
    int arm = -1;
    int level = -1;
    int row = -1;
  };

  Impl(const GraphBundle& b, ModelConfig m, TrainConfig t, ModelParams p,
       Rng drop, Rng sample)
      : bundle(b),
        mcfg(m),
        tcfg(t),
        params(std::move(p)),
        optim(t.optim),
        sample_rng(sample),
        drop_rng(drop) {
    tensors = params.tensors();
    exp3.resize(static_cast<std::size_t>(bundle.num_nodes()));
  }
};

MiniBatchTrainer::MiniBatchTrainer(const GraphBundle& bundle,
                                   ModelConfig model_config,
                                   TrainConfig train_config,
                                   const ModelParams* warm_start)
    : impl_(nullptr) {
  bundle.validate();
  model_config.validate();
  train_config.validate();
  if (bundle.train_ids.empty()) {
    throw InputError("train_mini_batch: empty train split");
  }
  Rng root(train_config.seed);
  Rng init_rng = root.fork(1);
  Rng drop_rng = root.fork(2);
  Rng sample_rng = root.fork(3);

  ModelParams params =
      warm_start != nullptr
          ? *warm_start
          : ModelParams::init(bundle.feature_dim(), bundle.num_classes,
                              model_config.hidden_width, init_rng);
  params.validate();
  impl_ = std::make_unique<Impl>(bundle, model_config, train_config,
                                 std::move(params), drop_rng, sample_rng);
}

MiniBatchTrainer::~MiniBatchTrainer() = default;

namespace {

// Expands one mini-batch of roots into a flattened forest. Conditioned nodes
// are never expanded below (their beliefs are pinned one-hot, so deeper
// messages cannot reach the loss). Uniform mode takes a fanout-capped subset
// per node; Exp3 mode makes fanout-capped i.i.d. draws with 1/(K q) weights.
void build_forest(MiniBatchTrainer::Impl& t, const std::vector<int>& roots,
                  const std::vector<char>& conditioned, Forest& forest,
                  std::vector<MiniBatchTrainer::Impl::Draw>& draws) {
  const Graph& graph = t.bundle.graph;
  forest = Forest{};
  draws.clear();

  std::vector<int> parent_orig(roots.size(), -1);
  forest.orig_ids = roots;
  forest.parent_pos.assign(roots.size(), -1);
  forest.weights.assign(roots.size(), 1.0);
  forest.levels.emplace_back(0, static_cast<int>(roots.size()));

  std::vector<int> avail;
  for (int level = 0; level < t.mcfg.bp_steps; ++level) {
    const auto [lo, hi] = forest.levels[level];
    const int next_begin = static_cast<int>(forest.orig_ids.size());
    for (int u = lo; u < hi; ++u) {
      const int node = forest.orig_ids[u];
      if (level > 0 && conditioned[node]) continue;
      const auto [elo, ehi] = graph.incoming_range(node);
      const auto src = graph.src();
      avail.clear();
      for (int e = elo; e < ehi; ++e) {
        if (src[e] != parent_orig[u]) avail.push_back(e - elo);
      }
      if (avail.empty()) continue;
      const int take =
          std::min<int>(t.tcfg.fanout, static_cast<int>(avail.size()));

      if (t.tcfg.sampling == SamplingMode::Uniform) {
        if (static_cast<int>(avail.size()) > take) {
          for (int k = 0; k < take; ++k) {
            std::swap(avail[k],
                      avail[k + t.sample_rng.uniform_int(
                                    static_cast<int>(avail.size()) - k)]);
          }
          avail.resize(take);
          std::sort(avail.begin(), avail.end());
        }
        for (int a : avail) {
          parent_orig.push_back(node);
          forest.orig_ids.push_back(src[elo + a]);
          forest.parent_pos.push_back(u - lo);
          forest.weights.push_back(1.0);
        }
      } else {
        Exp3State& state = t.exp3[node];
        if (state.num_arms() == 0) {
          state = make_exp3_state(ehi - elo, t.tcfg.exp3_loss_clip);
        }
        const Vector p = state.probabilities();
        double total = 0.0;
        for (int a : avail) total += p[a];
        const double k_avail = static_cast<double>(avail.size());
        for (int d = 0; d < take; ++d) {
          double x = t.sample_rng.uniform() * total;
          int pick = avail.back();
          for (int a : avail) {
            if (x < p[a]) {
              pick = a;
              break;
            }
            x -= p[a];
          }
          const double q = p[pick] / total;
          MiniBatchTrainer::Impl::Draw draw;
          draw.owner = node;
          draw.arm = pick;
          draw.level = level + 1;
          draw.row = static_cast<int>(forest.orig_ids.size()) - next_begin;
          draws.push_back(draw);
          parent_orig.push_back(node);
          forest.orig_ids.push_back(src[elo + pick]);
          forest.parent_pos.push_back(u - lo);
          forest.weights.push_back(1.0 / (k_avail * q));
        }
      }
    }
    if (static_cast<int>(forest.orig_ids.size()) == next_begin) break;
    forest.levels.emplace_back(next_begin,
                               static_cast<int>(forest.orig_ids.size()));
  }
}

double minibatch_step(MiniBatchTrainer::Impl& t, const std::vector<int>& roots) {
  const GraphBundle& bundle = t.bundle;
  std::vector<char> conditioned(bundle.num_nodes(), 0);
  ClampList clamps;
  if (t.mcfg.mode == Mode::Transductive) {
    std::vector<char> in_batch(bundle.num_nodes(), 0);
    for (int r : roots) in_batch[r] = 1;
    std::vector<int> pool;
    pool.reserve(bundle.train_ids.size());
    for (int id : bundle.train_ids) {
      if (!in_batch[id]) pool.push_back(id);
    }
    t.sample_rng.shuffle(pool);
    const std::size_t want = bundle.train_ids.size() / 2;
    pool.resize(std::min(pool.size(), want));
    for (int id : pool) conditioned[id] = 1;
    clamps = clamps_for(pool, bundle.labels);
  }

  Forest forest;
  std::vector<MiniBatchTrainer::Impl::Draw> draws;
  build_forest(t, roots, conditioned, forest, draws);

  ad::Tape tape;
  ParamVars vars = bind_params(tape, t.params, true);
  Rng* dropout_rng = t.mcfg.dropout > 0.0 ? &t.drop_rng : nullptr;
  ad::Var self = self_log_beliefs(tape, tape.constant(bundle.features), vars,
                                  t.mcfg.dropout, dropout_rng);
  if (!clamps.empty()) {
    std::vector<int> nodes;
    nodes.reserve(clamps.size());
    for (auto [node, cls] : clamps) nodes.push_back(node);
    self = ad::overwrite_rows(tape, self, nodes,
                              one_hot_log_rows(clamps, bundle.num_classes));
  }
  ad::Var log_h = coupling(tape, vars.log_coupling_raw);
  ForestBp fb = forest_bp(tape, forest, self, log_h);
  ad::Var loss =
      marginal_nll(tape, fb.root_beliefs, roots, bundle.labels, bundle.graph,
                   t.mcfg.beta, t.mcfg.weighting);
  tape.backward(loss);
  std::vector<Matrix> grads;
  grads.reserve(t.tensors.size());
  for (ad::Var v : vars.all()) grads.push_back(tape.grad_or_zero(v));
  t.optim.step(t.tensors, grads);

  for (const auto& draw : draws) {
    const Matrix& messages = tape.value(fb.level_messages[draw.level]);
    exp3_update(t.exp3[draw.owner], draw.arm,
                messages.row(draw.row).transpose());
  }
  return tape.value(loss)(0, 0);
}

}  // namespace

void MiniBatchTrainer::run_epoch() {
  Impl& t = *impl_;
  ++t.epoch_count;
  std::vector<int> order = t.bundle.train_ids;
  t.sample_rng.shuffle(order);
  double loss_sum = 0.0;
  int steps = 0;
  for (std::size_t begin = 0; begin < order.size();
       begin += static_cast<std::size_t>(t.tcfg.batch_size)) {
    const std::size_t end = std::min(
        order.size(), begin + static_cast<std::size_t>(t.tcfg.batch_size));
    std::vector<int> roots(order.begin() + begin, order.begin() + end);
    std::sort(roots.begin(), roots.end());
    loss_sum += minibatch_step(t, roots);
    ++steps;
  }
  t.last_epoch_loss = steps > 0 ? loss_sum / steps : 0.0;
}

EpochStats MiniBatchTrainer::evaluate() {
  Impl& t = *impl_;
  EpochStats stats = evaluate_full(t.bundle, t.params, t.mcfg,
                                   t.tcfg.condition_on_validation);
  stats.epoch = t.epoch_count;
  stats.loss = t.last_epoch_loss;
  return stats;
}

int MiniBatchTrainer::epoch() const { return impl_->epoch_count; }

const ModelParams& MiniBatchTrainer::params() const { return impl_->params; }

Vector MiniBatchTrainer::node_sampling_distribution(int node) const {
  const Impl& t = *impl_;
  if (node < 0 || node >= t.bundle.num_nodes()) {
    throw InputError("node_sampling_distribution: node out of range");
  }
  const int degree = t.bundle.graph.degree(node);
  if (degree == 0) return Vector();
  const Exp3State& state = t.exp3[static_cast<std::size_t>(node)];
  if (state.num_arms() == 0) {
    return Vector::Constant(degree, 1.0 / static_cast<double>(degree));
  }
  return state.probabilities();
}

TrainResult train_mini_batch(const GraphBundle& bundle,
                             const ModelConfig& model_config,
                             const TrainConfig& train_config) {
  MiniBatchTrainer trainer(bundle, model_config, train_config);
  TrainResult result;
  result.model_config = model_config;
  double best_val = -1.0;
  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    trainer.run_epoch();
    EpochStats stats = trainer.evaluate();
    result.history.push_back(stats);
    track_best(result, trainer.params(), stats, best_val);
  }
  if (bundle.val_ids.empty()) {
    result.best_params = trainer.params();
    result.best_epoch = train_config.epochs;
    result.best_val_acc = 0.0;
    result.test_acc_at_best = result.history.back().test_acc;
  }
  return result;
}

namespace {

VarianceRow variance_row(const GraphBundle& bundle,
                         const MiniBatchTrainer& trainer,
                         const ModelConfig& mcfg, int epoch) {
  ad::Tape tape;
  ParamVars vars = bind_params(tape, trainer.params(), false);
  ad::Var self = self_log_beliefs(tape, tape.constant(bundle.features), vars,
                                  0.0, nullptr);
  ad::Var log_h = coupling(tape, vars.log_coupling_raw);
  BpRun run =
      run_bp(tape, bundle.graph, self, log_h, mcfg.bp_steps, {}, {});
  const Matrix& messages = tape.value(run.state.log_messages);

  double sum_imp_opt = 0.0, sum_unif_opt = 0.0, sum_rho = 0.0;
  int n_imp_opt = 0, n_unif_opt = 0, n_rho = 0;
  for (int i = 0; i < bundle.num_nodes(); ++i) {
    const auto [lo, hi] = bundle.graph.incoming_range(i);
    const int degree = hi - lo;
    if (degree == 0) continue;
    if (degree == 1) {
      // one neighbor: every sampling distribution is the point mass,
      // variances are all zero and the ratios are defined as 1
      sum_imp_opt += 1.0;
      sum_unif_opt += 1.0;
      sum_rho += 1.0;
      ++n_imp_opt;
      ++n_unif_opt;
      ++n_rho;
      continue;
    }
    const Matrix block = messages.middleRows(lo, degree);
    const Vector p_opt = optimal_sampling_distribution(block);
    const Vector p_unif =
        Vector::Constant(degree, 1.0 / static_cast<double>(degree));
    const Vector p_imp = trainer.node_sampling_distribution(i);
    const double var_opt = estimator_variance(block, p_opt);
    const double var_unif = estimator_variance(block, p_unif);
    const double var_imp = estimator_variance(block, p_imp);
    const double tiny = 1e-12 * std::max(1.0, block.squaredNorm());

    if (var_opt > tiny) {
      sum_imp_opt += var_imp / var_opt;
      ++n_imp_opt;
      sum_unif_opt += var_unif / var_opt;
      ++n_unif_opt;
    } else if (var_imp <= tiny && var_unif <= tiny) {
      sum_imp_opt += 1.0;
      ++n_imp_opt;
      sum_unif_opt += 1.0;
      ++n_unif_opt;
    }
    if (var_unif > tiny) {
      sum_rho += var_imp / var_unif;
      ++n_rho;
    } else if (var_imp <= tiny) {
      sum_rho += 1.0;
      ++n_rho;
    }
  }

  VarianceRow row;
  row.epoch = epoch;
  row.imp_over_opt = n_imp_opt > 0 ? sum_imp_opt / n_imp_opt : 1.0;
  row.unif_over_opt = n_unif_opt > 0 ? sum_unif_opt / n_unif_opt : 1.0;
  row.rho = n_rho > 0 ? sum_rho / n_rho : 1.0;
  return row;
}

}  // namespace

std::vector<VarianceRow> variance_report(const GraphBundle& bundle,
                                         const ModelConfig& model_config,
                                         const TrainConfig& train_config,
                                         const ModelParams* warm_start) {
  if (model_config.bp_steps < 1) {
    throw InputError("variance_report: bp_steps must be >= 1");
  }
  TrainConfig config = train_config;
  config.sampling = SamplingMode::Exp3;
  MiniBatchTrainer trainer(bundle, model_config, config, warm_start);
  std::vector<VarianceRow> rows;
  rows.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    trainer.run_epoch();
    rows.push_back(variance_row(bundle, trainer, model_config, epoch));
  }
  return rows;
}

}  // namespace gbpn
