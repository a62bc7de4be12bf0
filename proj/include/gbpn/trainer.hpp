#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gbpn/bundle.hpp"
#include "gbpn/model.hpp"

namespace gbpn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 2.5e-4;
};

/// AdamW: decoupled weight decay (param *= 1 - lr*wd) followed by the Adam
/// moment update with bias correction.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(std::span<Matrix* const> params, std::span<const Matrix> grads);

  std::int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
  std::int64_t step_ = 0;
};

enum class SamplingMode { Uniform, Exp3 };

SamplingMode parse_sampling_mode(const std::string& name);
std::string to_string(SamplingMode mode);

struct TrainConfig {
  int epochs = 500;
  int batch_size = 256;  // roots per mini-batch step
  int fanout = 5;        // max sampled neighbors per node when unrolling
  SamplingMode sampling = SamplingMode::Uniform;
  std::uint64_t seed = 0;
  AdamWConfig optim;
  double exp3_loss_clip = 1e4;
  /// Transductive evaluation conditions on the training split only unless
  /// this is set (validation labels then leak into model selection).
  bool condition_on_validation = false;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  ModelConfig model_config;
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  double test_acc_at_best = 0.0;
};

/// Full-batch training. Inductive: loss on every training node. Transductive:
/// per step, a random half of the training nodes is clamped and the loss runs
/// on the other half; evaluation clamps the whole training split. Returns the
/// best-validation-accuracy checkpoint (final params when there is no
/// validation split).
TrainResult train_full_batch(const GraphBundle& bundle,
                             const ModelConfig& model_config,
                             const TrainConfig& train_config);

/// Mini-batch training over sampled computation trees: per step, a batch of
/// training roots is unrolled to depth bp_steps with at most `fanout`
/// children per node (uniform subsets, or Exp3-driven importance draws with
/// 1/(K p) message weights), and the loss runs on the root beliefs.
/// Evaluation is full-neighborhood full-graph inference.
TrainResult train_mini_batch(const GraphBundle& bundle,
                             const ModelConfig& model_config,
                             const TrainConfig& train_config);

// ---- neighbor importance sampling --------------------------------------

/// Variance-minimizing draw distribution p*_j proportional to the Euclidean
/// norm of neighbor j's log-message vector; uniform when all norms are zero.
Vector optimal_sampling_distribution(const Matrix& messages);

/// Unbiased estimate sum_j X_j / (K p_j) of the scaled aggregate message,
/// from i.i.d. draws `sampled` under `probs`. K = neighborhood_size.
Vector importance_estimate(const Matrix& messages,
                           const std::vector<int>& sampled, const Vector& probs,
                           int neighborhood_size);

/// Sum over classes of the estimator's per-draw variance under `probs`,
/// up to the shared |N'|/K^2 factor (which cancels in every ratio we report).
double estimator_variance(const Matrix& messages, const Vector& probs);

/// Adversarial-bandit state for one node's neighbor draws. Weights live in
/// log domain; the sampling distribution mixes in a 0.01 uniform floor.
struct Exp3State {
  std::vector<double> log_weights;
  std::int64_t updates = 0;
  double cumulative_sq_loss = 0.0;
  double loss_clip = 1e4;
  double exploration = 0.01;

  int num_arms() const { return static_cast<int>(log_weights.size()); }
  Vector probabilities() const;
};

Exp3State make_exp3_state(int num_arms, double loss_clip = 1e4);

/// One bandit update from the sampled arm's observed log-message: loss
/// -|m|/p^2, importance-weighted by 1/p for partial information, clipped,
/// applied with the adaptive rate sqrt(ln K / max(1, cumulative sq loss)).
void exp3_update(Exp3State& state, int arm, const Vector& log_message);

struct VarianceRow {
  int epoch = 0;
  double imp_over_opt = 1.0;
  double unif_over_opt = 1.0;
  double rho = 1.0;  // Var(importance) / Var(uniform)
};

/// Trains with Exp3 sampling and, after every epoch, analytically evaluates
/// the estimator variance per node from a full-graph message pass (final BP
/// step, no conditioning, dropout off) under the importance, uniform, and
/// optimal distributions, averaging the per-node ratios.
std::vector<VarianceRow> variance_report(const GraphBundle& bundle,
                                         const ModelConfig& model_config,
                                         const TrainConfig& train_config,
                                         const ModelParams* warm_start = nullptr);

// ---- mini-batch internals exposed for diagnostics -----------------------

class MiniBatchTrainer {
 public:
  MiniBatchTrainer(const GraphBundle& bundle, ModelConfig model_config,
                   TrainConfig train_config,
                   const ModelParams* warm_start = nullptr);
  ~MiniBatchTrainer();

  void run_epoch();
  EpochStats evaluate();

  int epoch() const;
  const ModelParams& params() const;
  /// Current distribution over a node's neighbors (uniform until sampled).
  Vector node_sampling_distribution(int node) const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace gbpn
