#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "mxpool/optim.hpp"

using mxpool::Matrix;
using mxpool::Tensor;

TEST_CASE("adam leaves parameters alone on zero gradient", "[optim]") {
  mxpool::Parameter p("p", Matrix::Constant(2, 2, 1.5));
  p.tensor.mutable_grad().setZero();
  Matrix before = p.tensor.value();
  mxpool::adam_step({&p}, 0.001);
  REQUIRE(p.tensor.value() == before);
}

TEST_CASE("adam first step matches the hand-evaluated recurrence", "[optim]") {
  // From m = v = 0 and gradient g, one bias-corrected step moves each
  // coordinate by -lr * g / (|g| + eps).
  const double lr = 0.01, eps = 1e-8;
  Matrix g(2, 2);
  g << 0.3, -2.0, 0.001, 7.5;
  mxpool::Parameter p("p", Matrix::Zero(2, 2));
  p.tensor.mutable_grad() = g;
  mxpool::adam_step({&p}, lr, 0.9, 0.999, eps);
  for (Eigen::Index k = 0; k < 4; ++k) {
    const double expect = -lr * g(k) / (std::abs(g(k)) + eps);
    REQUIRE(p.tensor.value()(k) == Catch::Approx(expect).epsilon(1e-12));
  }
  REQUIRE(p.step_count == 1);
}

TEST_CASE("adam update magnitude approaches lr under a constant gradient", "[optim]") {
  const double lr = 0.05;
  mxpool::Parameter p("p", Matrix::Zero(1, 1));
  double prev = 0.0;
  for (int t = 0; t < 300; ++t) {
    prev = p.tensor.value()(0, 0);
    p.tensor.zero_grad();
    p.tensor.mutable_grad() = Matrix::Constant(1, 1, 2.0);
    mxpool::adam_step({&p}, lr);
  }
  REQUIRE(std::abs(prev - p.tensor.value()(0, 0)) == Catch::Approx(lr).epsilon(1e-3));
}

TEST_CASE("adam with lr zero is a bit-exact no-op on values", "[optim]") {
  mxpool::Rng rng(5);
  mxpool::Parameter p("p", testutil::random_matrix(rng, 3, 3));
  Matrix before = p.tensor.value();
  p.tensor.mutable_grad() = testutil::random_matrix(rng, 3, 3);
  mxpool::adam_step({&p}, 0.0);
  REQUIRE(p.tensor.value() == before);
}

TEST_CASE("gradient_check on a quadratic is near-exact", "[optim]") {
  mxpool::Rng rng(2);
  mxpool::Parameter w("w", testutil::random_matrix(rng, 3, 3));
  auto forward = [&]() { return mxpool::sum_all(mxpool::hadamard(w.tensor, w.tensor)); };
  const double err = mxpool::gradient_check(forward, {&w}, 1e-5);
  REQUIRE(err < 1e-8);
}

TEST_CASE("gradient_check on a small relu network", "[optim]") {
  // Seed chosen so no pre-activation sits within h of the kink.
  mxpool::Rng rng(4);
  mxpool::Parameter w1("w1", testutil::random_matrix(rng, 4, 6));
  mxpool::Parameter w2("w2", testutil::random_matrix(rng, 6, 2));
  Tensor x = Tensor::constant(testutil::random_matrix(rng, 3, 4));
  auto forward = [&]() {
    Tensor h = mxpool::relu(mxpool::matmul(x, w1.tensor));
    return mxpool::sum_all(mxpool::relu(mxpool::matmul(h, w2.tensor)));
  };
  const double err = mxpool::gradient_check(forward, {&w1, &w2}, 1e-5);
  REQUIRE(err < 1e-6);
}

TEST_CASE("gradient_check rejects a non-deterministic forward", "[optim]") {
  mxpool::Parameter w("w", Matrix::Ones(1, 1));
  int calls = 0;
  auto forward = [&]() {
    ++calls;
    return mxpool::scale_by_scalar(w.tensor, Tensor::scalar_constant(1.0 + 0.1 * calls));
  };
  REQUIRE_THROWS_AS(mxpool::gradient_check(forward, {&w}), mxpool::ContractError);
}
