#pragma once

#include <string>
#include <vector>

#include "gbpn/bp.hpp"
#include "gbpn/bundle.hpp"

namespace gbpn {

/// Inductive: predict from features alone. Transductive: additionally
/// condition on known labels by clamping them during inference.
enum class Mode { Inductive, Transductive };

/// How the degree weights alpha_i enter the loss: Tempered renormalizes
/// exp(alpha * log p) per node, Scaled just multiplies the NLL terms.
enum class LossWeighting { Tempered, Scaled };

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);
LossWeighting parse_loss_weighting(const std::string& name);
std::string to_string(LossWeighting weighting);

struct ModelConfig {
  int hidden_width = 256;
  int bp_steps = 5;
  double dropout = 0.1;  // drop probability on hidden activations
  double beta = 0.5;     // alpha_i = d(i)^-beta
  Mode mode = Mode::Transductive;
  LossWeighting weighting = LossWeighting::Tempered;

  void validate() const;
};

/// Trainable state: a 2-hidden-layer MLP mapping features to class logits,
/// plus an unconstrained log-coupling matrix (symmetrized on use, so H > 0
/// is implicit and training can start from the uncoupled MLP solution).
struct ModelParams {
  std::vector<Matrix> weights;  // d x h, h x h, h x c
  std::vector<Matrix> biases;   // 1 x h, 1 x h, 1 x c
  Matrix log_coupling_raw;      // c x c

  /// Uniform(+-sqrt(6/fan_in)) weights, zero biases, zero raw coupling.
  static ModelParams init(int feature_dim, int num_classes, int hidden_width,
                          Rng& rng);

  int feature_dim() const { return static_cast<int>(weights.front().rows()); }
  int num_classes() const { return static_cast<int>(weights.back().cols()); }
  int hidden_width() const { return static_cast<int>(weights.front().cols()); }

  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;

  /// Checks the layer shape chain; throws InputError.
  void validate() const;
};

/// Tape handles for one forward pass over a fixed parameter set.
struct ParamVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
  ad::Var log_coupling_raw;

  std::vector<ad::Var> all() const;
};

ParamVars bind_params(ad::Tape& tape, const ModelParams& params,
                      bool trainable);

/// Symmetrized coupling (raw + raw^T)/2; gradients split evenly across twins.
ad::Var coupling(ad::Tape& tape, ad::Var log_coupling_raw);

/// Log-softmax MLP outputs, one normalized row per node. Dropout (inverted)
/// is applied to hidden activations only when dropout_rng is non-null.
ad::Var self_log_beliefs(ad::Tape& tape, ad::Var features,
                         const ParamVars& params, double dropout,
                         Rng* dropout_rng);

/// Full forward pass: MLP self beliefs -> clamped init -> bp_steps of BP,
/// all on the tape. conditioned must be empty in inductive mode.
ad::Var gbpn_forward(ad::Tape& tape, const Graph& graph,
                     const Matrix& features, const ParamVars& params,
                     const ModelConfig& config, const ClampList& conditioned,
                     Rng* dropout_rng = nullptr);

/// Degree-reweighting factors alpha_i = d(i)^-beta (1 for isolated nodes).
Vector degree_loss_weights(const Graph& graph, const std::vector<int>& node_ids,
                           double beta);

/// Negative mean log-likelihood of the given nodes' labels under the
/// degree-tempered beliefs. batch_log_beliefs row k corresponds to
/// node_ids[k]; labels is the full per-node label vector.
ad::Var marginal_nll(ad::Tape& tape, ad::Var batch_log_beliefs,
                     const std::vector<int>& node_ids,
                     const std::vector<int>& labels, const Graph& graph,
                     double beta, LossWeighting weighting);

/// Row-wise argmax; ties break toward the lowest class index.
std::vector<int> predict(const Matrix& log_beliefs);

/// Fraction of ids whose argmax matches labels.
double accuracy(const Matrix& log_beliefs, const std::vector<int>& labels,
                const std::vector<int>& ids);

}  // namespace gbpn
