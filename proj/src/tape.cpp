#include "gbpn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "gbpn/errors.hpp"

namespace gbpn::ad {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw InputError(msg);
}

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

const Tape::Node& Tape::node(int id) const {
  require(id >= 0 && id < static_cast<int>(nodes_.size()),
          "Tape: invalid Var id " + std::to_string(id));
  return nodes_[id];
}

Tape::Node& Tape::node(int id) {
  require(id >= 0 && id < static_cast<int>(nodes_.size()),
          "Tape: invalid Var id " + std::to_string(id));
  return nodes_[id];
}

Var Tape::emplace(Matrix value, bool requires_grad, Vjp vjp) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.vjp = std::move(vjp);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_buffer(Var v) {
  Node& n = node(v.id);
  if (n.grad.size() == 0) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Matrix Tape::grad_or_zero(Var v) const {
  const Node& n = node(v.id);
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var output) {
  const Node& out = node(output.id);
  require(out.value.rows() == 1 && out.value.cols() == 1,
          "backward: output must be a 1x1 scalar, got " +
              shape_of(out.value));
  for (Node& n : nodes_) n.grad.resize(0, 0);
  grad_buffer(output)(0, 0) = 1.0;
  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.vjp) continue;
    n.vjp(*this, n.grad);
  }
}

namespace {

bool any_grad(const Tape& t, Var a) { return t.requires_grad(a); }
bool any_grad(const Tape& t, Var a, Var b) {
  return t.requires_grad(a) || t.requires_grad(b);
}

void accumulate(Tape& t, Var v, const Matrix& g) {
  if (t.requires_grad(v)) t.grad_buffer(v) += g;
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require(av.cols() == bv.rows(), "matmul: inner dimensions differ, " +
                                      shape_of(av) + " * " + shape_of(bv));
  Matrix out = av * bv;
  if (!any_grad(t, a, b)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true,
                   [a, b](Tape& tp, const Matrix& g) {
                     if (tp.requires_grad(a)) {
                       tp.grad_buffer(a).noalias() += g * tp.value(b).transpose();
                     }
                     if (tp.requires_grad(b)) {
                       tp.grad_buffer(b).noalias() += tp.value(a).transpose() * g;
                     }
                   });
}

Var add(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(),
          "add: shape mismatch " + shape_of(av) + " vs " + shape_of(bv));
  Matrix out = av + bv;
  if (!any_grad(t, a, b)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true, [a, b](Tape& tp, const Matrix& g) {
    accumulate(tp, a, g);
    accumulate(tp, b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(),
          "sub: shape mismatch " + shape_of(av) + " vs " + shape_of(bv));
  Matrix out = av - bv;
  if (!any_grad(t, a, b)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true, [a, b](Tape& tp, const Matrix& g) {
    accumulate(tp, a, g);
    if (tp.requires_grad(b)) tp.grad_buffer(b) -= g;
  });
}

Var add_row(Tape& t, Var a, Var row) {
  const Matrix& av = t.value(a);
  const Matrix& rv = t.value(row);
  require(rv.rows() == 1 && rv.cols() == av.cols(),
          "add_row: expected 1x" + std::to_string(av.cols()) + " row, got " +
              shape_of(rv));
  Matrix out = av.rowwise() + rv.row(0);
  if (!any_grad(t, a, row)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true,
                   [a, row](Tape& tp, const Matrix& g) {
                     accumulate(tp, a, g);
                     if (tp.requires_grad(row)) {
                       tp.grad_buffer(row).row(0) += g.colwise().sum();
                     }
                   });
}

Var scale(Tape& t, Var a, double s) {
  Matrix out = t.value(a) * s;
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true, [a, s](Tape& tp, const Matrix& g) {
    tp.grad_buffer(a) += s * g;
  });
}

Var relu(Tape& t, Var a) {
  Matrix out = t.value(a).cwiseMax(0.0);
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  // Subgradient at exactly 0 is 0.
  return t.emplace(std::move(out), true, [a](Tape& tp, const Matrix& g) {
    tp.grad_buffer(a).array() +=
        g.array() * (tp.value(a).array() > 0.0).cast<double>();
  });
}

Var exp(Tape& t, Var a) {
  Matrix out = t.value(a).array().exp();
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  Matrix saved = out;
  return t.emplace(std::move(out), true,
                   [a, saved = std::move(saved)](Tape& tp, const Matrix& g) {
                     tp.grad_buffer(a).array() += g.array() * saved.array();
                   });
}

Var transpose(Tape& t, Var a) {
  Matrix out = t.value(a).transpose();
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true, [a](Tape& tp, const Matrix& g) {
    tp.grad_buffer(a) += g.transpose();
  });
}

Var sum_all(Tape& t, Var a) {
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum();
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true, [a](Tape& tp, const Matrix& g) {
    tp.grad_buffer(a).array() += g(0, 0);
  });
}

Var logsumexp(Tape& t, Var a, int axis) {
  require(axis == 0 || axis == 1, "logsumexp: axis must be 0 or 1");
  const Matrix& av = t.value(a);
  require(av.size() > 0, "logsumexp: empty input");
  Matrix out;
  if (axis == 1) {
    out.resize(av.rows(), 1);
    for (Eigen::Index r = 0; r < av.rows(); ++r) {
      const double m = av.row(r).maxCoeff();
      out(r, 0) = m + std::log((av.row(r).array() - m).exp().sum());
    }
  } else {
    out.resize(1, av.cols());
    for (Eigen::Index c = 0; c < av.cols(); ++c) {
      const double m = av.col(c).maxCoeff();
      out(0, c) = m + std::log((av.col(c).array() - m).exp().sum());
    }
  }
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  Matrix saved = out;
  return t.emplace(std::move(out), true,
                   [a, axis, saved](Tape& tp, const Matrix& g) {
                     const Matrix& av = tp.value(a);
                     Matrix& ga = tp.grad_buffer(a);
                     if (axis == 1) {
                       for (Eigen::Index r = 0; r < av.rows(); ++r) {
                         ga.row(r).array() +=
                             g(r, 0) * (av.row(r).array() - saved(r, 0)).exp();
                       }
                     } else {
                       for (Eigen::Index c = 0; c < av.cols(); ++c) {
                         ga.col(c).array() +=
                             g(0, c) * (av.col(c).array() - saved(0, c)).exp();
                       }
                     }
                   });
}

Var log_softmax_rows(Tape& t, Var a) {
  const Matrix& av = t.value(a);
  require(av.size() > 0, "log_softmax_rows: empty input");
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    const double m = av.row(r).maxCoeff();
    const double lse = m + std::log((av.row(r).array() - m).exp().sum());
    out.row(r) = av.row(r).array() - lse;
  }
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  Matrix saved = out;
  return t.emplace(std::move(out), true,
                   [a, saved = std::move(saved)](Tape& tp, const Matrix& g) {
                     Matrix& ga = tp.grad_buffer(a);
                     for (Eigen::Index r = 0; r < saved.rows(); ++r) {
                       const double gsum = g.row(r).sum();
                       ga.row(r).array() +=
                           g.row(r).array() - gsum * saved.row(r).array().exp();
                     }
                   });
}

Var gather_rows(Tape& t, Var a, std::vector<int> ids) {
  const Matrix& av = t.value(a);
  Matrix out(static_cast<Eigen::Index>(ids.size()), av.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    require(ids[k] >= 0 && ids[k] < av.rows(),
            "gather_rows: row id " + std::to_string(ids[k]) + " out of range");
    out.row(static_cast<Eigen::Index>(k)) = av.row(ids[k]);
  }
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true,
                   [a, ids = std::move(ids)](Tape& tp, const Matrix& g) {
                     Matrix& ga = tp.grad_buffer(a);
                     for (std::size_t k = 0; k < ids.size(); ++k) {
                       ga.row(ids[k]) += g.row(static_cast<Eigen::Index>(k));
                     }
                   });
}

Var segment_sum(Tape& t, Var a, std::vector<int> segment_ids,
                int num_segments) {
  const Matrix& av = t.value(a);
  require(static_cast<Eigen::Index>(segment_ids.size()) == av.rows(),
          "segment_sum: need one segment id per row");
  require(num_segments >= 0, "segment_sum: negative segment count");
  Matrix out = Matrix::Zero(num_segments, av.cols());
  for (std::size_t k = 0; k < segment_ids.size(); ++k) {
    require(segment_ids[k] >= 0 && segment_ids[k] < num_segments,
            "segment_sum: segment id " + std::to_string(segment_ids[k]) +
                " out of range");
    out.row(segment_ids[k]) += av.row(static_cast<Eigen::Index>(k));
  }
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  return t.emplace(
      std::move(out), true,
      [a, ids = std::move(segment_ids)](Tape& tp, const Matrix& g) {
        Matrix& ga = tp.grad_buffer(a);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          ga.row(static_cast<Eigen::Index>(k)) += g.row(ids[k]);
        }
      });
}

Var dropout(Tape& t, Var a, double keep_prob, Rng& rng) {
  require(keep_prob > 0.0 && keep_prob <= 1.0,
          "dropout: keep_prob must be in (0,1]");
  const Matrix& av = t.value(a);
  Matrix mask(av.rows(), av.cols());
  const double inv = 1.0 / keep_prob;
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    for (Eigen::Index c = 0; c < av.cols(); ++c) {
      mask(r, c) = rng.uniform() < keep_prob ? inv : 0.0;
    }
  }
  Matrix out = av.cwiseProduct(mask);
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true,
                   [a, mask = std::move(mask)](Tape& tp, const Matrix& g) {
                     tp.grad_buffer(a) += g.cwiseProduct(mask);
                   });
}

Var log_matmul_exp(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require(av.cols() == bv.rows(), "log_matmul_exp: inner dimensions differ, " +
                                      shape_of(av) + " * " + shape_of(bv));
  const Eigen::Index m = av.rows(), k = av.cols(), n = bv.cols();
  Matrix out(m, n);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double mx = av(r, 0) + bv(0, j);
      for (Eigen::Index i = 1; i < k; ++i) {
        mx = std::max(mx, av(r, i) + bv(i, j));
      }
      double s = 0.0;
      for (Eigen::Index i = 0; i < k; ++i) {
        s += std::exp(av(r, i) + bv(i, j) - mx);
      }
      out(r, j) = mx + std::log(s);
    }
  }
  if (!any_grad(t, a, b)) return t.emplace(std::move(out), false, {});
  Matrix saved = out;
  return t.emplace(
      std::move(out), true,
      [a, b, saved = std::move(saved)](Tape& tp, const Matrix& g) {
        const Matrix& av = tp.value(a);
        const Matrix& bv = tp.value(b);
        const bool ga_on = tp.requires_grad(a);
        const bool gb_on = tp.requires_grad(b);
        Matrix* ga = ga_on ? &tp.grad_buffer(a) : nullptr;
        Matrix* gb = gb_on ? &tp.grad_buffer(b) : nullptr;
        for (Eigen::Index r = 0; r < av.rows(); ++r) {
          for (Eigen::Index j = 0; j < bv.cols(); ++j) {
            const double grj = g(r, j);
            if (grj == 0.0) continue;
            for (Eigen::Index i = 0; i < av.cols(); ++i) {
              const double w = std::exp(av(r, i) + bv(i, j) - saved(r, j));
              if (ga_on) (*ga)(r, i) += grj * w;
              if (gb_on) (*gb)(i, j) += grj * w;
            }
          }
        }
      });
}

Var overwrite_rows(Tape& t, Var a, std::vector<int> ids, Matrix replacement) {
  const Matrix& av = t.value(a);
  require(replacement.rows() == static_cast<Eigen::Index>(ids.size()) &&
              replacement.cols() == av.cols(),
          "overwrite_rows: replacement shape mismatch");
  Matrix out = av;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    require(ids[k] >= 0 && ids[k] < av.rows(),
            "overwrite_rows: row id out of range");
    out.row(ids[k]) = replacement.row(static_cast<Eigen::Index>(k));
  }
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true,
                   [a, ids = std::move(ids)](Tape& tp, const Matrix& g) {
                     Matrix masked = g;
                     for (int id : ids) masked.row(id).setZero();
                     tp.grad_buffer(a) += masked;
                   });
}

Var scale_rows(Tape& t, Var a, Vector factors) {
  const Matrix& av = t.value(a);
  require(factors.size() == av.rows(),
          "scale_rows: need one factor per row");
  Matrix out = factors.asDiagonal() * av;
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true,
                   [a, factors = std::move(factors)](Tape& tp,
                                                     const Matrix& g) {
                     tp.grad_buffer(a) += factors.asDiagonal() * g;
                   });
}

Var mean_select(Tape& t, Var a, std::vector<int> cols) {
  const Matrix& av = t.value(a);
  require(static_cast<Eigen::Index>(cols.size()) == av.rows(),
          "mean_select: need one column per row");
  require(!cols.empty(), "mean_select: empty selection");
  double s = 0.0;
  for (std::size_t r = 0; r < cols.size(); ++r) {
    require(cols[r] >= 0 && cols[r] < av.cols(),
            "mean_select: column out of range");
    s += av(static_cast<Eigen::Index>(r), cols[r]);
  }
  Matrix out(1, 1);
  out(0, 0) = s / static_cast<double>(cols.size());
  if (!any_grad(t, a)) return t.emplace(std::move(out), false, {});
  return t.emplace(std::move(out), true,
                   [a, cols = std::move(cols)](Tape& tp, const Matrix& g) {
                     Matrix& ga = tp.grad_buffer(a);
                     const double w = g(0, 0) / static_cast<double>(cols.size());
                     for (std::size_t r = 0; r < cols.size(); ++r) {
                       ga(static_cast<Eigen::Index>(r), cols[r]) += w;
                     }
                   });
}

double grad_check(
    const std::function<Var(Tape&, const std::vector<Var>&)>& f,
    const std::vector<Matrix>& params, double epsilon,
    int max_coords_per_tensor, Rng* rng) {
  std::vector<Matrix> analytic;
  {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Matrix& p : params) vars.push_back(t.parameter(p));
    Var y = f(t, vars);
    t.backward(y);
    for (Var v : vars) analytic.push_back(t.grad_or_zero(v));
  }

  auto forward = [&f](const std::vector<Matrix>& p) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(p.size());
    for (const Matrix& m : p) vars.push_back(t.constant(m));
    Var y = f(t, vars);
    return t.value(y)(0, 0);
  };

  double max_rel = 0.0;
  std::vector<Matrix> work = params;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const Eigen::Index count = params[pi].size();
    std::vector<Eigen::Index> coords;
    if (max_coords_per_tensor >= 0 &&
        count > static_cast<Eigen::Index>(max_coords_per_tensor)) {
      Rng fallback(12345);
      Rng& r = rng ? *rng : fallback;
      for (int k = 0; k < max_coords_per_tensor; ++k) {
        coords.push_back(r.uniform_int(static_cast<int>(count)));
      }
    } else {
      for (Eigen::Index k = 0; k < count; ++k) coords.push_back(k);
    }
    for (Eigen::Index idx : coords) {
      double* slot = work[pi].data() + idx;
      const double orig = *slot;
      *slot = orig + epsilon;
      const double up = forward(work);
      *slot = orig - epsilon;
      const double down = forward(work);
      *slot = orig;
      const double fd = (up - down) / (2.0 * epsilon);
      const double an = analytic[pi].data()[idx];
      const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
  }
  return max_rel;
}

}  // namespace gbpn::ad
