#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "mxpool/tensor.hpp"

using mxpool::Matrix;
using mxpool::Tensor;

namespace {

Matrix m22(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST_CASE("matmul values", "[tensor]") {
  Tensor i3 = Tensor::constant(Matrix::Identity(3, 3));
  mxpool::Rng rng(1);
  Tensor m = Tensor::constant(testutil::random_matrix(rng, 3, 4));
  REQUIRE(mxpool::matmul(i3, m).value().isApprox(m.value()));

  Tensor a = Tensor::constant(m22(1, 2, 3, 4));
  Matrix col(2, 1);
  col << 0, 1;
  Tensor b = Tensor::constant(col);
  Matrix expect(2, 1);
  expect << 2, 4;
  REQUIRE(mxpool::matmul(a, b).value() == expect);

  REQUIRE_THROWS_AS(mxpool::matmul(a, Tensor::constant(Matrix::Zero(3, 2))), mxpool::ShapeError);
}

TEST_CASE("matmul gradients match central differences", "[tensor]") {
  mxpool::Rng rng(7);
  mxpool::Parameter a("a", testutil::random_matrix(rng, 5, 4));
  mxpool::Parameter b("b", testutil::random_matrix(rng, 4, 3));
  auto loss = [&]() { return mxpool::sum_all(mxpool::matmul(a.tensor, b.tensor)); };
  Tensor l = loss();
  mxpool::zero_grads({&a, &b});
  l.backward();
  const double err = testutil::fd_max_rel_error([&]() { return loss().value()(0, 0); }, {&a, &b},
                                                {a.tensor.grad(), b.tensor.grad()});
  REQUIRE(err < 1e-6);
}

TEST_CASE("relu", "[tensor]") {
  Tensor neg = Tensor::constant(m22(-1, -2, -3, -0.5));
  REQUIRE(mxpool::relu(neg).value() == Matrix::Zero(2, 2));
  Tensor pos = Tensor::constant(m22(1, 0, 2, 3));
  REQUIRE(mxpool::relu(pos).value() == pos.value());

  // gradient at kink-free points
  mxpool::Rng rng(3);
  Matrix x0 = testutil::random_matrix(rng, 4, 4);
  for (Eigen::Index k = 0; k < x0.size(); ++k) {
    if (std::abs(x0(k)) < 1e-3) x0(k) = 0.1;  // keep clear of the kink
  }
  mxpool::Parameter x("x", x0);
  auto loss = [&]() { return mxpool::sum_all(mxpool::relu(x.tensor)); };
  Tensor l = loss();
  mxpool::zero_grads({&x});
  l.backward();
  const double err = testutil::fd_max_rel_error([&]() { return loss().value()(0, 0); }, {&x},
                                                {x.tensor.grad()});
  REQUIRE(err < 1e-6);
}

TEST_CASE("row_softmax values", "[tensor]") {
  Tensor one_col = Tensor::constant(Matrix::Constant(3, 1, 5.0));
  REQUIRE(mxpool::row_softmax(one_col).value() == Matrix::Ones(3, 1));

  Tensor zeros = Tensor::constant(Matrix::Zero(1, 3));
  REQUIRE(mxpool::row_softmax(zeros).value().isApprox(Matrix::Constant(1, 3, 1.0 / 3.0)));

  Matrix big(1, 2);
  big << 1000.0, 0.0;
  Matrix sm = mxpool::row_softmax(Tensor::constant(big)).value();
  REQUIRE(std::isfinite(sm(0, 0)));
  REQUIRE(sm(0, 0) == Catch::Approx(1.0));
  REQUIRE(sm(0, 1) < 1e-300);
}

TEST_CASE("row_softmax rows sum to one and lie in (0,1)", "[tensor]") {
  mxpool::Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    Matrix x = testutil::random_matrix(rng, 1 + rng.below(6), 1 + rng.below(6), 5.0);
    Matrix y = mxpool::row_softmax(Tensor::constant(x)).value();
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      REQUIRE(std::abs(y.row(i).sum() - 1.0) < 1e-12);
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        REQUIRE(y(i, j) > 0.0);
        REQUIRE(y(i, j) <= 1.0);
      }
    }
  }
}

TEST_CASE("concat_cols", "[tensor]") {
  mxpool::Rng rng(5);
  Tensor a = Tensor::constant(testutil::random_matrix(rng, 2, 3));
  REQUIRE(mxpool::concat_cols({a}).value() == a.value());

  Matrix ca(2, 1), cb(2, 1);
  ca << 1, 2;
  cb << 3, 4;
  Matrix joined = mxpool::concat_cols({Tensor::constant(ca), Tensor::constant(cb)}).value();
  REQUIRE(joined.col(0) == ca.col(0));
  REQUIRE(joined.col(1) == cb.col(0));

  REQUIRE_THROWS_AS(
      mxpool::concat_cols({Tensor::constant(Matrix::Zero(2, 1)), Tensor::constant(Matrix::Zero(3, 1))}),
      mxpool::ShapeError);

  // linearity: grad through concat equals grads of the separate parts
  mxpool::Parameter p("p", testutil::random_matrix(rng, 3, 2));
  mxpool::Parameter q("q", testutil::random_matrix(rng, 3, 4));
  Tensor joint = mxpool::sum_all(mxpool::concat_cols({p.tensor, q.tensor}));
  mxpool::zero_grads({&p, &q});
  joint.backward();
  Matrix gp = p.tensor.grad(), gq = q.tensor.grad();
  mxpool::zero_grads({&p, &q});
  mxpool::add(mxpool::sum_all(p.tensor), mxpool::sum_all(q.tensor)).backward();
  REQUIRE(gp == p.tensor.grad());
  REQUIRE(gq == q.tensor.grad());
}

TEST_CASE("scale_by_scalar and col_block", "[tensor]") {
  mxpool::Rng rng(9);
  Tensor m = Tensor::constant(testutil::random_matrix(rng, 3, 3));
  REQUIRE(mxpool::scale_by_scalar(m, Tensor::scalar_constant(1.0)).value() == m.value());

  mxpool::Parameter alpha("alpha", testutil::random_matrix(rng, 1, 4));
  mxpool::Parameter z("z", testutil::random_matrix(rng, 3, 2));
  auto loss = [&]() {
    Tensor a2 = mxpool::col_block(alpha.tensor, 2, 1);
    return mxpool::sum_all(mxpool::scale_by_scalar(z.tensor, a2));
  };
  Tensor l = loss();
  mxpool::zero_grads({&alpha, &z});
  l.backward();
  const double err = testutil::fd_max_rel_error([&]() { return loss().value()(0, 0); },
                                                {&alpha, &z},
                                                {alpha.tensor.grad(), z.tensor.grad()});
  REQUIRE(err < 1e-6);
  // only the selected column of alpha can carry gradient
  REQUIRE(alpha.tensor.grad()(0, 0) == 0.0);
  REQUIRE(alpha.tensor.grad()(0, 2) != 0.0);
}

TEST_CASE("row_mean and reductions", "[tensor]") {
  Matrix x(2, 2);
  x << 1, 3, 5, 7;
  Matrix rm = mxpool::row_mean(Tensor::constant(x)).value();
  REQUIRE(rm.rows() == 1);
  REQUIRE(rm(0, 0) == Catch::Approx(3.0));
  REQUIRE(rm(0, 1) == Catch::Approx(5.0));

  REQUIRE(mxpool::row_sum(Tensor::constant(x)).value()(1, 0) == Catch::Approx(12.0));
  REQUIRE(mxpool::sum_all(Tensor::constant(x)).value()(0, 0) == Catch::Approx(16.0));
}

TEST_CASE("cross entropy from logits", "[tensor]") {
  Tensor uniform = Tensor::constant(Matrix::Zero(1, 2));
  REQUIRE(mxpool::cross_entropy_from_logits(uniform, 0).value()(0, 0) ==
          Catch::Approx(std::log(2.0)));
  REQUIRE_THROWS_AS(mxpool::cross_entropy_from_logits(uniform, 2), mxpool::ContractError);
  REQUIRE_THROWS_AS(mxpool::cross_entropy_from_logits(uniform, -1), mxpool::ContractError);

  mxpool::Rng rng(13);
  mxpool::Parameter logits("logits", testutil::random_matrix(rng, 1, 5, 2.0));
  auto loss = [&]() { return mxpool::cross_entropy_from_logits(logits.tensor, 3); };
  Tensor l = loss();
  mxpool::zero_grads({&logits});
  l.backward();
  const double err = testutil::fd_max_rel_error([&]() { return loss().value()(0, 0); }, {&logits},
                                                {logits.tensor.grad()});
  REQUIRE(err < 1e-6);
}

TEST_CASE("backward basics", "[tensor]") {
  mxpool::Parameter w("w", m22(0.5, -1, 2, 3));
  Tensor l = mxpool::sum_all(w.tensor);
  mxpool::zero_grads({&w});
  l.backward();
  REQUIRE(w.tensor.grad() == Matrix::Ones(2, 2));

  // loss = sum(A W) -> grad W = A^T 1
  Matrix a(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  mxpool::Parameter w2("w2", m22(1, 1, 1, 1));
  Tensor l2 = mxpool::sum_all(mxpool::matmul(Tensor::constant(a), w2.tensor));
  mxpool::zero_grads({&w2});
  l2.backward();
  Matrix expect = a.transpose() * Matrix::Ones(3, 2);
  REQUIRE(w2.tensor.grad() == expect);

  REQUIRE_THROWS_AS(Tensor::constant(Matrix::Zero(2, 2)).backward(), mxpool::ContractError);
}

TEST_CASE("backward accumulates over multiple consumers", "[tensor]") {
  // x feeds two paths: loss = sum(x C1) + sum(C2 x).
  Matrix c1(2, 2), c2(3, 2);
  c1 << 1, 2, 3, 4;
  c2 << 1, 0, 2, 1, 0, 3;
  mxpool::Parameter x("x", m22(0.1, 0.2, 0.3, 0.4));
  Tensor path1 = mxpool::sum_all(mxpool::matmul(x.tensor, Tensor::constant(c1)));
  Tensor path2 = mxpool::sum_all(mxpool::matmul(Tensor::constant(c2), x.tensor));
  mxpool::zero_grads({&x});
  mxpool::add(path1, path2).backward();
  // hand-computed: d/dx sum(x C1) = 1 C1^T (row sums of C1 broadcast), plus
  // d/dx sum(C2 x) = C2^T 1 broadcast across columns.
  Matrix g1 = Matrix::Ones(2, 2) * c1.transpose();
  Matrix g2 = c2.transpose() * Matrix::Ones(3, 2);
  REQUIRE(x.tensor.grad() == g1 + g2);
}

TEST_CASE("elementwise and norm ops differentiate correctly", "[tensor]") {
  mxpool::Rng rng(17);
  mxpool::Parameter a("a", testutil::random_matrix(rng, 3, 4));
  mxpool::Parameter b("b", testutil::random_matrix(rng, 3, 4));

  SECTION("hadamard and sub") {
    auto loss = [&]() {
      return mxpool::sum_all(mxpool::hadamard(mxpool::sub(a.tensor, b.tensor), a.tensor));
    };
    Tensor l = loss();
    mxpool::zero_grads({&a, &b});
    l.backward();
    const double err = testutil::fd_max_rel_error([&]() { return loss().value()(0, 0); },
                                                  {&a, &b}, {a.tensor.grad(), b.tensor.grad()});
    REQUIRE(err < 1e-6);
  }

  SECTION("frobenius_norm") {
    auto loss = [&]() { return mxpool::frobenius_norm(mxpool::sub(a.tensor, b.tensor)); };
    Tensor l = loss();
    mxpool::zero_grads({&a, &b});
    l.backward();
    const double err = testutil::fd_max_rel_error([&]() { return loss().value()(0, 0); },
                                                  {&a, &b}, {a.tensor.grad(), b.tensor.grad()});
    REQUIRE(err < 1e-6);
  }

  SECTION("elem_pow on positive input") {
    mxpool::Parameter c("c", testutil::random_matrix(rng, 4, 1, 0.4).array().abs().matrix() +
                                 Matrix::Constant(4, 1, 0.5));
    auto loss = [&]() { return mxpool::sum_all(mxpool::elem_pow(c.tensor, -0.5)); };
    Tensor l = loss();
    mxpool::zero_grads({&c});
    l.backward();
    const double err = testutil::fd_max_rel_error([&]() { return loss().value()(0, 0); }, {&c},
                                                  {c.tensor.grad()});
    REQUIRE(err < 1e-6);
  }

  SECTION("row_entropy_mean on softmax rows") {
    auto loss = [&]() { return mxpool::row_entropy_mean(mxpool::row_softmax(a.tensor)); };
    Tensor l = loss();
    mxpool::zero_grads({&a});
    l.backward();
    const double err = testutil::fd_max_rel_error([&]() { return loss().value()(0, 0); }, {&a},
                                                  {a.tensor.grad()});
    REQUIRE(err < 1e-6);
  }

  SECTION("transpose and add_bias_row_broadcast") {
    mxpool::Parameter bias("bias", testutil::random_matrix(rng, 1, 3));
    auto loss = [&]() {
      return mxpool::sum_all(mxpool::hadamard(
          mxpool::add_bias_row_broadcast(mxpool::transpose(a.tensor), bias.tensor),
          mxpool::transpose(b.tensor)));
    };
    Tensor l = loss();
    mxpool::zero_grads({&a, &b, &bias});
    l.backward();
    const double err = testutil::fd_max_rel_error(
        [&]() { return loss().value()(0, 0); }, {&a, &b, &bias},
        {a.tensor.grad(), b.tensor.grad(), bias.tensor.grad()});
    REQUIRE(err < 1e-6);
  }
}

// Property sweep: every differentiable op agrees with central differences at
// random kink-free points across random shapes.
TEST_CASE("autodiff matches finite differences across random ops", "[tensor]") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    mxpool::Rng rng(seed);
    const Eigen::Index r = 1 + rng.below(5);
    const Eigen::Index c = 1 + rng.below(5);
    mxpool::Parameter a("a", testutil::random_matrix(rng, r, c));
    mxpool::Parameter b("b", testutil::random_matrix(rng, c, r));
    auto loss = [&]() {
      Tensor prod = mxpool::matmul(a.tensor, b.tensor);           // r x r
      Tensor sm = mxpool::row_softmax(prod);                      // r x r
      Tensor act = mxpool::relu(mxpool::sub(sm, mxpool::transpose(prod)));
      return mxpool::add(mxpool::sum_all(act), mxpool::frobenius_norm(mxpool::row_mean(prod)));
    };
    Tensor l = loss();
    mxpool::zero_grads({&a, &b});
    l.backward();
    const double err = testutil::fd_max_rel_error([&]() { return loss().value()(0, 0); },
                                                  {&a, &b}, {a.tensor.grad(), b.tensor.grad()});
    CAPTURE(seed, r, c);
    REQUIRE(err < 1e-4);
  }
}
