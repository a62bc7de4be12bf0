#include "gbpn/model.hpp"

#include <cmath>
#include <string>

#include "gbpn/errors.hpp"

namespace gbpn {

Mode parse_mode(const std::string& name) {
  if (name == "inductive") return Mode::Inductive;
  if (name == "transductive") return Mode::Transductive;
  throw InputError("unknown mode '" + name +
                   "' (expected inductive or transductive)");
}

std::string to_string(Mode mode) {
  return mode == Mode::Inductive ? "inductive" : "transductive";
}

LossWeighting parse_loss_weighting(const std::string& name) {
  if (name == "tempered") return LossWeighting::Tempered;
  if (name == "scaled") return LossWeighting::Scaled;
  throw InputError("unknown loss weighting '" + name +
                   "' (expected tempered or scaled)");
}

std::string to_string(LossWeighting weighting) {
  return weighting == LossWeighting::Tempered ? "tempered" : "scaled";
}

void ModelConfig::validate() const {
  if (hidden_width < 1) throw InputError("config: hidden_width must be >= 1");
  if (bp_steps < 0) throw InputError("config: bp_steps must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw InputError("config: dropout must be in [0,1)");
  }
  if (beta < 0.0) throw InputError("config: beta must be >= 0");
}

ModelParams ModelParams::init(int feature_dim, int num_classes,
                              int hidden_width, Rng& rng) {
  if (feature_dim < 1 || num_classes < 1 || hidden_width < 1) {
    throw InputError("ModelParams::init: dimensions must be >= 1");
  }
  ModelParams p;
  const int dims[4] = {feature_dim, hidden_width, hidden_width, num_classes};
  for (int l = 0; l < 3; ++l) {
    const double bound = std::sqrt(6.0 / dims[l]);
    Matrix w(dims[l], dims[l + 1]);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        w(i, j) = rng.uniform(-bound, bound);
      }
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Matrix::Zero(1, dims[l + 1]));
  }
  p.log_coupling_raw = Matrix::Zero(num_classes, num_classes);
  return p;
}

std::vector<Matrix*> ModelParams::tensors() {
  std::vector<Matrix*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  out.push_back(&log_coupling_raw);
  return out;
}

std::vector<const Matrix*> ModelParams::tensors() const {
  std::vector<const Matrix*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  out.push_back(&log_coupling_raw);
  return out;
}

void ModelParams::validate() const {
  if (weights.size() != 3 || biases.size() != 3) {
    throw InputError("params: expected 3 layers");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (biases[l].rows() != 1 || biases[l].cols() != weights[l].cols()) {
      throw InputError("params: bias " + std::to_string(l) +
                       " does not match its weight matrix");
    }
    if (l > 0 && weights[l].rows() != weights[l - 1].cols()) {
      throw InputError("params: layer " + std::to_string(l) +
                       " input does not chain from previous layer");
    }
  }
  const int c = num_classes();
  if (log_coupling_raw.rows() != c || log_coupling_raw.cols() != c) {
    throw InputError("params: log_coupling_raw must be c x c");
  }
}

std::vector<ad::Var> ParamVars::all() const {
  std::vector<ad::Var> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(weights[l]);
    out.push_back(biases[l]);
  }
  out.push_back(log_coupling_raw);
  return out;
}

ParamVars bind_params(ad::Tape& tape, const ModelParams& params,
                      bool trainable) {
  params.validate();
  ParamVars vars;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    vars.weights.push_back(trainable ? tape.parameter(params.weights[l])
                                     : tape.constant(params.weights[l]));
    vars.biases.push_back(trainable ? tape.parameter(params.biases[l])
                                    : tape.constant(params.biases[l]));
  }
  vars.log_coupling_raw = trainable
                              ? tape.parameter(params.log_coupling_raw)
                              : tape.constant(params.log_coupling_raw);
  return vars;
}

ad::Var coupling(ad::Tape& tape, ad::Var log_coupling_raw) {
  ad::Var sym =
      ad::add(tape, log_coupling_raw, ad::transpose(tape, log_coupling_raw));
  return ad::scale(tape, sym, 0.5);
}

ad::Var self_log_beliefs(ad::Tape& tape, ad::Var features,
                         const ParamVars& params, double dropout,
                         Rng* dropout_rng) {
  const Eigen::Index in_dim = tape.value(features).cols();
  if (in_dim != tape.value(params.weights.front()).rows()) {
    throw InputError("self_log_beliefs: feature dim " + std::to_string(in_dim) +
                     " does not match first layer");
  }
  ad::Var x = features;
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    x = ad::add_row(tape, ad::matmul(tape, x, params.weights[l]),
                    params.biases[l]);
    if (l + 1 < layers) {
      x = ad::relu(tape, x);
      if (dropout_rng != nullptr && dropout > 0.0) {
        x = ad::dropout(tape, x, 1.0 - dropout, *dropout_rng);
      }
    }
  }
  return ad::log_softmax_rows(tape, x);
}

ad::Var gbpn_forward(ad::Tape& tape, const Graph& graph,
                     const Matrix& features, const ParamVars& params,
                     const ModelConfig& config, const ClampList& conditioned,
                     Rng* dropout_rng) {
  config.validate();
  if (config.mode == Mode::Inductive && !conditioned.empty()) {
    throw InputError("forward: conditioning labels given in inductive mode");
  }
  if (features.rows() != graph.num_nodes()) {
    throw InputError("forward: features must have one row per node");
  }
  ad::Var self = self_log_beliefs(tape, tape.constant(features), params,
                                  config.dropout, dropout_rng);
  ad::Var log_h = coupling(tape, params.log_coupling_raw);
  BpRun run =
      run_bp(tape, graph, self, log_h, config.bp_steps, conditioned, {});
  return run.state.log_beliefs;
}

Vector degree_loss_weights(const Graph& graph,
                           const std::vector<int>& node_ids, double beta) {
  Vector alpha(static_cast<Eigen::Index>(node_ids.size()));
  for (std::size_t k = 0; k < node_ids.size(); ++k) {
    const int d = graph.degree(node_ids[k]);
    alpha[static_cast<Eigen::Index>(k)] =
        d == 0 ? 1.0 : std::pow(static_cast<double>(d), -beta);
  }
  return alpha;
}

ad::Var marginal_nll(ad::Tape& tape, ad::Var batch_log_beliefs,
                     const std::vector<int>& node_ids,
                     const std::vector<int>& labels, const Graph& graph,
                     double beta, LossWeighting weighting) {
  if (node_ids.empty()) throw InputError("loss: empty node batch");
  if (tape.value(batch_log_beliefs).rows() !=
      static_cast<Eigen::Index>(node_ids.size())) {
    throw InputError("loss: one belief row per node id required");
  }
  std::vector<int> batch_labels(node_ids.size());
  for (std::size_t k = 0; k < node_ids.size(); ++k) {
    if (node_ids[k] < 0 || node_ids[k] >= static_cast<int>(labels.size())) {
      throw InputError("loss: node id out of range");
    }
    batch_labels[k] = labels[node_ids[k]];
  }
  ad::Var x = ad::scale_rows(tape, batch_log_beliefs,
                             degree_loss_weights(graph, node_ids, beta));
  if (weighting == LossWeighting::Tempered) {
    x = ad::log_softmax_rows(tape, x);
  }
  return ad::scale(tape, ad::mean_select(tape, x, std::move(batch_labels)),
                   -1.0);
}

std::vector<int> predict(const Matrix& log_beliefs) {
  std::vector<int> out(log_beliefs.rows());
  for (Eigen::Index r = 0; r < log_beliefs.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < log_beliefs.cols(); ++c) {
      if (log_beliefs(r, c) > log_beliefs(r, best)) {
        best = static_cast<int>(c);
      }
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

double accuracy(const Matrix& log_beliefs, const std::vector<int>& labels,
                const std::vector<int>& ids) {
  if (ids.empty()) return 0.0;
  const std::vector<int> pred = predict(log_beliefs);
  int correct = 0;
  for (int id : ids) {
    if (pred[static_cast<std::size_t>(id)] == labels[static_cast<std::size_t>(id)]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

}  // namespace gbpn
