#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "delayh2/conic.hpp"
#include "oracles.hpp"

using namespace delayh2;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

double min_eig(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("affine expressions evaluate like their matrices") {
  FeasibilityProblem fp;
  auto X = fp.add_variable("X", 2, 3);
  auto S = fp.add_variable("S", 3, 3, true);
  CHECK(X.size() == 6);
  CHECK(S.size() == 6);
  CHECK(fp.num_scalars() == 12);
  oracle::Rng rng(3);
  Vector x(12);
  for (int i = 0; i < 12; ++i) x(i) = rng.normal();
  const Matrix Xv = X.value(x), Sv = S.value(x);
  CHECK((Sv - Sv.transpose()).norm() == 0.0);
  const Matrix L = rng.gaussian(4, 2), R = rng.gaussian(3, 2);
  AffineExpr e = L * AffineExpr::of(X) * R + 2.0 * AffineExpr(Matrix::Ones(4, 2));
  CHECK((e.evaluate(x) - (L * Xv * R + 2.0 * Matrix::Ones(4, 2))).norm() < 1e-12);
  AffineExpr st = AffineExpr::of(S).transpose() - AffineExpr::of(S);
  CHECK(st.evaluate(x).norm() == 0.0);
  CHECK(st.terms().empty());
  AffineExpr big = AffineExpr::blocks({{AffineExpr::of(S), AffineExpr::of(X).transpose()},
                                       {AffineExpr::of(X), AffineExpr::zero(2, 2)}});
  Matrix expect(5, 5);
  expect << Sv, Xv.transpose(), Xv, Matrix::Zero(2, 2);
  CHECK((big.evaluate(x) - expect).norm() == 0.0);
  CHECK((big.block(3, 0, 2, 3).evaluate(x) - Xv).norm() == 0.0);
  CHECK_THROWS_AS(AffineExpr::of(X) + AffineExpr::of(S), Error);
}

TEST_CASE("scalar multiple of identity") {
  FeasibilityProblem fp;
  auto x = fp.add_scalar("x");
  fp.require_psd(AffineExpr::scaled_identity(AffineExpr::of(x), 2), 1.0);
  fp.minimize(AffineExpr::of(x));
  auto r = solve_feasibility(fp);
  CHECK(r[x](0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("unit ball") {
  FeasibilityProblem fp;
  auto v = fp.add_variable("v", 1, 2);
  fp.require_norm_cap(AffineExpr::of(v), AffineExpr::scalar(1.0));
  Matrix c(2, 1);
  c << -1, 0;
  fp.minimize(AffineExpr::of(v) * c);
  auto r = solve_feasibility(fp);
  CHECK(r[v](0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(r[v](0, 1)) < 1e-4);
}

TEST_CASE("spectral norm encoding examples") {
  auto feasible_with = [](const Matrix& M, double t) {
    FeasibilityProblem fp;
    fp.add_scalar("dummy");
    for (const auto& blk : spectral_norm_bound(AffineExpr(M), AffineExpr::scalar(t))) fp.require_psd(blk);
    try {
      solve_feasibility(fp);
      return true;
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Infeasible);
      return false;
    }
  };
  Matrix M(2, 2);
  M << 0, 2, 0, 0;
  CHECK_FALSE(feasible_with(M, 1.0));
  CHECK(feasible_with(Matrix::Zero(3, 2), 0.0));
  CHECK(feasible_with(Matrix::Zero(3, 2), 2.0));
  Matrix D = Vector(Eigen::Vector2d(1, 3)).asDiagonal();
  CHECK(feasible_with(D, 3.0));
  CHECK_FALSE(feasible_with(D, 2.9));
  CHECK(spectral_norm_bound(AffineExpr(D), AffineExpr::scalar(1)).size() == 2);
  CHECK(spectral_norm_bound(AffineExpr(M), AffineExpr::scalar(1)).size() == 1);
}

TEST_CASE("largest eigenvalue as an SDP") {
  oracle::Rng rng(7);
  for (int t = 0; t < 5; ++t) {
    const int n = rng.integer(2, 6);
    Matrix G = rng.gaussian(n, n);
    const Matrix S = G + G.transpose();
    FeasibilityProblem fp;
    auto s = fp.add_scalar("s");
    fp.require_psd(AffineExpr::scaled_identity(AffineExpr::of(s), n) - AffineExpr(S));
    fp.minimize(AffineExpr::of(s));
    auto r = solve_feasibility(fp);
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    CHECK(r.objective == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-6));
  }
}

TEST_CASE("Lyapunov LMI feasibility matches stability") {
  oracle::Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    const int n = rng.integer(2, 4);
    const bool stable = t % 2 == 0;
    LtiPlant plant = oracle::random_plant(rng, n, 1, 1, stable ? -0.3 : 0.3);
    const Matrix& A = plant.A();
    FeasibilityProblem fp;
    auto P = fp.add_variable("P", n, n, true);
    AffineExpr Pe = AffineExpr::of(P);
    fp.require_psd(Pe, 1e-3);
    fp.require_psd(-(A.transpose() * Pe) - Pe * A, 1e-3);
    if (stable) {
      auto r = solve_feasibility(fp);
      CHECK(min_eig(r[P]) >= 1e-3 - 1e-7);
      CHECK(min_eig(-(A.transpose() * r[P] + r[P] * A)) >= 1e-3 - 1e-7);
      CHECK(r.max_violation <= 1e-6);
      CHECK(min_slack(fp, r.x) >= -1e-6);
    } else {
      CHECK(code_of([&] { solve_feasibility(fp); }) == ErrorCode::Infeasible);
    }
  }
}

TEST_CASE("linear inequalities and determinism") {
  FeasibilityProblem fp;
  auto v = fp.add_variable("v", 2, 1);
  Matrix a(1, 2);
  a << 1, 1;
  fp.require_nonneg(a * AffineExpr::of(v) - AffineExpr::scalar(1.0));  // v0 + v1 >= 1
  fp.require_nonneg(AffineExpr::of(v));                                 // v >= 0
  Matrix c(1, 2);
  c << 2, 3;
  fp.minimize(c * AffineExpr::of(v));
  auto r1 = solve_feasibility(fp);
  auto r2 = solve_feasibility(fp);
  CHECK(r1.objective == doctest::Approx(2.0).epsilon(1e-6));
  CHECK((r1.x - r2.x).norm() == 0.0);

  FeasibilityProblem bad;
  auto w = bad.add_scalar("w");
  bad.require_nonneg(AffineExpr::of(w) - AffineExpr::scalar(2.0));
  bad.require_nonneg(AffineExpr::scalar(1.0) - AffineExpr::of(w));
  CHECK(code_of([&] { solve_feasibility(bad); }) == ErrorCode::Infeasible);
}

TEST_CASE("malformed problems are rejected") {
  FeasibilityProblem fp;
  auto X = fp.add_variable("X", 2, 2);
  CHECK_THROWS_AS(fp.require_psd(AffineExpr::of(X)), Error);
  CHECK_THROWS_AS(fp.add_variable("S", 2, 3, true), Error);
  FeasibilityProblem other;
  CHECK_THROWS_AS(other.require_nonneg(AffineExpr::of(X)), Error);
}
