#pragma once

#include <functional>
#include <vector>

#include "gbpn/rng.hpp"
#include "gbpn/types.hpp"

namespace gbpn::ad {

/// Handle to a tensor recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Define-by-run reverse-mode tape over dense double matrices.
///
/// Every op appends one node holding the forward value and a closure that
/// scatters the upstream gradient to the parents. Creation order is a
/// topological order, so backward() is a single reverse sweep. A tape is
/// single-owner and rebuilt per forward pass; independent tapes may run
/// concurrently.
class Tape {
 public:
  using Vjp = std::function<void(Tape&, const Matrix& upstream)>;

  Var constant(Matrix value) { return emplace(std::move(value), false, {}); }
  Var parameter(Matrix value) { return emplace(std::move(value), true, {}); }

  const Matrix& value(Var v) const { return node(v.id).value; }
  bool requires_grad(Var v) const { return node(v.id).requires_grad; }

  /// Gradient accumulated by the last backward(); empty if untouched.
  const Matrix& grad(Var v) const { return node(v.id).grad; }

  /// Like grad(), but materializes zeros for parameters no path reached.
  Matrix grad_or_zero(Var v) const;

  /// Backpropagates from a 1x1 output. Gradients sum over all paths.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

  // Recording interface used by the op free functions.
  Var emplace(Matrix value, bool requires_grad, Vjp vjp);
  Matrix& grad_buffer(Var v);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Vjp vjp;
  };

  const Node& node(int id) const;
  Node& node(int id);

  std::vector<Node> nodes_;
};

// ---- op suite ------------------------------------------------------------
// Free functions recording one tape node each. Shapes are validated; each op
// registers the exact vector-Jacobian product of its forward map.

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
/// Adds a 1xN row vector to every row of an MxN matrix.
Var add_row(Tape& t, Var a, Var row);
Var scale(Tape& t, Var a, double s);
Var relu(Tape& t, Var a);
Var exp(Tape& t, Var a);
Var transpose(Tape& t, Var a);
Var sum_all(Tape& t, Var a);

/// Log-sum-exp reduction. axis=0 collapses rows (result 1xN), axis=1
/// collapses columns (result Mx1). Max-shifted, so inputs up to ~1e308 in
/// magnitude never overflow.
Var logsumexp(Tape& t, Var a, int axis);

/// Row-wise x - LSE(x); every output row has logsumexp exactly 0.
Var log_softmax_rows(Tape& t, Var a);

/// out.row(k) = a.row(ids[k]).
Var gather_rows(Tape& t, Var a, std::vector<int> ids);

/// out.row(ids[k]) += a.row(k); out has num_segments rows.
Var segment_sum(Tape& t, Var a, std::vector<int> segment_ids,
                int num_segments);

/// Inverted dropout: entries kept with probability keep_prob and scaled by
/// 1/keep_prob, so the expectation is the identity. keep_prob in (0,1].
Var dropout(Tape& t, Var a, double keep_prob, Rng& rng);

/// out[r,j] = LSE_i(a[r,i] + b[i,j]) — a log-space matrix product; the
/// single primitive a belief-propagation message update reduces to.
Var log_matmul_exp(Tape& t, Var a, Var b);

/// Replaces rows `ids` with constant `replacement` rows; gradients do not
/// flow through replaced rows.
Var overwrite_rows(Tape& t, Var a, std::vector<int> ids, Matrix replacement);

/// Multiplies row r by the constant factors[r].
Var scale_rows(Tape& t, Var a, Vector factors);

/// (1/M) * sum_r a[r, cols[r]] as a 1x1 tensor.
Var mean_select(Tape& t, Var a, std::vector<int> cols);

// ---- verification harness -------------------------------------------------

/// Compares the tape gradient of a scalar function against central finite
/// differences, coordinate by coordinate (or a random subset of at most
/// max_coords_per_tensor when >= 0). Returns the max relative error with
/// denominator max(1, |analytic|, |numeric|). f must be deterministic.
double grad_check(
    const std::function<Var(Tape&, const std::vector<Var>&)>& f,
    const std::vector<Matrix>& params, double epsilon,
    int max_coords_per_tensor = -1, Rng* rng = nullptr);

}  // namespace gbpn::ad
