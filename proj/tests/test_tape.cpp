#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gbpn/errors.hpp"
#include "gbpn/tape.hpp"

using namespace gbpn;
using namespace gbpn::ad;

namespace {

Matrix randm(Rng& rng, int r, int c, double lo = -2.0, double hi = 2.0) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("logsumexp basics") {
  Tape t;
  Matrix x(1, 2);
  x << 0.0, 0.0;
  Var v = logsumexp(t, t.constant(x), 1);
  CHECK(t.value(v)(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Matrix big(1, 2);
  big << 1000.0, 1000.0;
  Var w = logsumexp(t, t.constant(big), 1);
  CHECK(std::isfinite(t.value(w)(0, 0)));
  CHECK(t.value(w)(0, 0) ==
        doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));

  Matrix far(1, 2);
  far << 700.0, -700.0;
  Var u = logsumexp(t, t.constant(far), 1);
  CHECK(std::isfinite(t.value(u)(0, 0)));
  CHECK(t.value(u)(0, 0) == doctest::Approx(700.0));
}

TEST_CASE("segment_sum forward") {
  Tape t;
  Matrix x(3, 1);
  x << 1.0, 2.0, 3.0;
  Var v = segment_sum(t, t.constant(x), {0, 0, 1}, 2);
  CHECK(t.value(v)(0, 0) == 3.0);
  CHECK(t.value(v)(1, 0) == 3.0);
}

TEST_CASE("relu subgradient at zero is zero") {
  Tape t;
  Matrix x(1, 3);
  x << -1.0, 0.0, 2.0;
  Var p = t.parameter(x);
  Var y = sum_all(t, relu(t, p));
  t.backward(y);
  const Matrix& g = t.grad(p);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(0, 2) == 1.0);
}

TEST_CASE("backward of x*x at 3 is 6") {
  Tape t;
  Matrix x(1, 1);
  x << 3.0;
  Var p = t.parameter(x);
  Var y = matmul(t, p, p);
  t.backward(y);
  CHECK(t.grad(p)(0, 0) == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("sum(relu(W)) gradient") {
  Tape t;
  Matrix w(1, 2);
  w << -1.0, 2.0;
  Var p = t.parameter(w);
  Var y = sum_all(t, relu(t, p));
  t.backward(y);
  CHECK(t.grad(p)(0, 0) == 0.0);
  CHECK(t.grad(p)(0, 1) == 1.0);
}

TEST_CASE("fan-out sums contributions: d(x+x)/dx = 2") {
  Tape t;
  Matrix x(1, 1);
  x << 0.7;
  Var p = t.parameter(x);
  Var y = add(t, p, p);
  t.backward(y);
  CHECK(t.grad(p)(0, 0) == 2.0);
}

TEST_CASE("untouched parameter gets zero gradient") {
  Tape t;
  Var a = t.parameter(Matrix::Ones(1, 1));
  Var b = t.parameter(Matrix::Ones(2, 2));
  t.backward(scale(t, a, 3.0));
  CHECK(t.grad(b).size() == 0);
  CHECK(t.grad_or_zero(b).isZero());
  CHECK(t.grad(a)(0, 0) == 3.0);
}

TEST_CASE("backward requires a scalar output") {
  Tape t;
  Var a = t.parameter(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(a), InputError);
}

TEST_CASE("shape mismatches are input errors") {
  Tape t;
  Rng rng(1);
  Var a = t.constant(Matrix::Ones(2, 3));
  Var b = t.constant(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(matmul(t, a, b), InputError);
  CHECK_THROWS_AS(add(t, a, t.constant(Matrix::Ones(3, 2))), InputError);
  CHECK_THROWS_AS(segment_sum(t, a, {0}, 2), InputError);
  CHECK_THROWS_AS(segment_sum(t, a, {0, 2}, 2), InputError);
  CHECK_THROWS_AS(gather_rows(t, a, {5}), InputError);
  CHECK_THROWS_AS(dropout(t, a, 0.0, rng), InputError);
  CHECK_THROWS_AS(dropout(t, a, 1.5, rng), InputError);
}

TEST_CASE("quadratic form grad_check is tight") {
  Rng rng(11);
  Matrix a = randm(rng, 4, 4);
  Matrix x0 = randm(rng, 4, 1);
  auto f = [&](Tape& t, const std::vector<Var>& p) {
    Var ax = matmul(t, t.constant(a), p[0]);
    return matmul(t, transpose(t, p[0]), ax);
  };
  CHECK(grad_check(f, {x0}, 1e-5) < 1e-9);
}

TEST_CASE("log_softmax + NLL composite grad_check") {
  Rng rng(13);
  Matrix x0 = randm(rng, 5, 3);
  std::vector<int> labels = {0, 2, 1, 1, 0};
  auto f = [&](Tape& t, const std::vector<Var>& p) {
    Var lp = log_softmax_rows(t, p[0]);
    return scale(t, mean_select(t, lp, labels), -1.0);
  };
  CHECK(grad_check(f, {x0}, 1e-5) < 1e-6);
}

TEST_CASE("every primitive matches central finite differences") {
  Rng rng(17);
  const double tol = 1e-6;
  const double eps = 1e-5;

  for (int trial = 0; trial < 5; ++trial) {
    const int m = 2 + rng.uniform_int(4);
    const int k = 2 + rng.uniform_int(3);
    const int n = 2 + rng.uniform_int(3);
    Matrix a = randm(rng, m, k);
    Matrix b = randm(rng, k, n);
    Matrix c = randm(rng, m, k);
    Matrix row = randm(rng, 1, k);

    auto scalarize = [](Tape& t, Var v) { return sum_all(t, exp(t, scale(t, v, 0.3))); };

    auto check1 = [&](const char* name, auto op, const Matrix& x) {
      auto f = [&](Tape& t, const std::vector<Var>& p) {
        return scalarize(t, op(t, p[0]));
      };
      INFO(name);
      CHECK(grad_check(f, {x}, eps) < tol);
    };

    check1("relu", [](Tape& t, Var v) { return relu(t, v); }, a);
    check1("exp", [](Tape& t, Var v) { return exp(t, v); }, a);
    check1("transpose", [](Tape& t, Var v) { return transpose(t, v); }, a);
    check1("scale", [](Tape& t, Var v) { return scale(t, v, -1.7); }, a);
    check1("lse_rows", [](Tape& t, Var v) { return logsumexp(t, v, 1); }, a);
    check1("lse_cols", [](Tape& t, Var v) { return logsumexp(t, v, 0); }, a);
    check1("log_softmax",
           [](Tape& t, Var v) { return log_softmax_rows(t, v); }, a);
    check1("sum_all", [](Tape& t, Var v) { return sum_all(t, v); }, a);

    std::vector<int> gidx(m + 1);
    for (int i = 0; i <= m; ++i) gidx[i] = rng.uniform_int(m);
    check1("gather_rows",
           [&](Tape& t, Var v) { return gather_rows(t, v, gidx); }, a);

    std::vector<int> seg(m);
    for (int i = 0; i < m; ++i) seg[i] = rng.uniform_int(3);
    check1("segment_sum",
           [&](Tape& t, Var v) { return segment_sum(t, v, seg, 3); }, a);

    std::vector<int> ow = {rng.uniform_int(m)};
    Matrix rep = randm(rng, 1, k);
    check1("overwrite_rows",
           [&](Tape& t, Var v) { return overwrite_rows(t, v, ow, rep); }, a);

    Vector factors = randm(rng, m, 1).col(0);
    check1("scale_rows",
           [&](Tape& t, Var v) { return scale_rows(t, v, factors); }, a);

    std::vector<int> cols(m);
    for (int i = 0; i < m; ++i) cols[i] = rng.uniform_int(k);
    {
      auto f = [&](Tape& t, const std::vector<Var>& p) {
        return mean_select(t, p[0], cols);
      };
      INFO("mean_select");
      CHECK(grad_check(f, {a}, eps) < tol);
    }

    auto f2 = [&](auto op) {
      return [op](Tape& t, const std::vector<Var>& p) {
        return sum_all(t, exp(t, scale(t, op(t, p[0], p[1]), 0.3)));
      };
    };
    INFO("matmul");
    CHECK(grad_check(f2([](Tape& t, Var x, Var y) { return matmul(t, x, y); }),
                     {a, b}, eps) < tol);
    INFO("log_matmul_exp");
    CHECK(grad_check(
              f2([](Tape& t, Var x, Var y) { return log_matmul_exp(t, x, y); }),
              {a, b}, eps) < tol);
    INFO("add");
    CHECK(grad_check(f2([](Tape& t, Var x, Var y) { return add(t, x, y); }),
                     {a, c}, eps) < tol);
    INFO("sub");
    CHECK(grad_check(f2([](Tape& t, Var x, Var y) { return sub(t, x, y); }),
                     {a, c}, eps) < tol);
    INFO("add_row");
    CHECK(grad_check(
              f2([](Tape& t, Var x, Var y) { return add_row(t, x, y); }),
              {a, row}, eps) < tol);
  }
}

TEST_CASE("dropout: inverted scaling and exact mask reuse in backward") {
  Rng rng(23);
  Matrix x = randm(rng, 30, 20, 0.5, 1.5);
  Tape t;
  Var p = t.parameter(x);
  Rng drop_rng(99);
  Var y = dropout(t, p, 0.75, drop_rng);
  const Matrix& yv = t.value(y);
  int kept = 0;
  for (int i = 0; i < yv.rows(); ++i) {
    for (int j = 0; j < yv.cols(); ++j) {
      if (yv(i, j) != 0.0) {
        ++kept;
        CHECK(yv(i, j) == doctest::Approx(x(i, j) / 0.75).epsilon(1e-12));
      }
    }
  }
  CHECK(kept > 300);  // keep_prob 0.75 of 600
  CHECK(kept < 540);
  t.backward(sum_all(t, y));
  const Matrix& g = t.grad(p);
  for (int i = 0; i < yv.rows(); ++i) {
    for (int j = 0; j < yv.cols(); ++j) {
      CHECK(g(i, j) == (yv(i, j) == 0.0 ? 0.0 : doctest::Approx(1.0 / 0.75)));
    }
  }
}

TEST_CASE("log_matmul_exp handles the log-zero sentinel without NaN") {
  Tape t;
  Matrix a(1, 2);
  a << 0.0, kLogZero;
  Matrix h(2, 2);
  h << 0.6, -0.4, -0.4, 0.6;
  Var p = t.parameter(a);
  Var out = log_matmul_exp(t, p, t.constant(h));
  CHECK(t.value(out)(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(t.value(out)(0, 1) == doctest::Approx(-0.4).epsilon(1e-12));
  t.backward(sum_all(t, out));
  CHECK(t.grad(p).allFinite());
}
