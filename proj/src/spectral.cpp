#include "delayh2/spectral.hpp"

#include <cmath>
#include <numbers>

namespace delayh2 {

ChebyshevGrid chebyshev_grid(double tau, int N) {
  if (!(tau > 0.0)) fail(ErrorCode::InvalidArgument, "grid delay must be positive");
  if (N < 2) fail(ErrorCode::InvalidArgument, "grid needs at least two points");
  ChebyshevGrid g{tau, N, Vector(N)};
  const double pi = std::numbers::pi;
  for (int i = 0; i < N; ++i) g.theta(i) = 0.5 * tau * (std::cos(pi - i * pi / (N - 1)) - 1.0);
  g.theta(0) = -tau;
  g.theta(N - 1) = 0.0;
  return g;
}

Matrix differentiation_blocks(const ChebyshevGrid& grid) {
  const int N = grid.N;
  const double pi = std::numbers::pi;
  // Reference nodes x_i = cos(a_i) on [-1, 1]; theta = tau/2 (x - 1).
  Vector a(N), w(N);
  for (int i = 0; i < N; ++i) {
    a(i) = pi - i * pi / (N - 1);
    w(i) = ((i % 2) ? -1.0 : 1.0) * ((i == 0 || i == N - 1) ? 0.5 : 1.0);
  }
  Matrix D = Matrix::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    double diag = 0.0;
    for (int j = 0; j < N; ++j) {
      if (j == i) continue;
      // cos(a_i) - cos(a_j) without cancellation.
      const double dx = -2.0 * std::sin(0.5 * (a(i) + a(j))) * std::sin(0.5 * (a(i) - a(j)));
      D(i, j) = (w(j) / w(i)) / dx;
      diag -= D(i, j);
    }
    D(i, i) = diag;
  }
  return D * (2.0 / grid.tau);
}

Matrix AugmentedSystem::selector(int i) const {
  Matrix M = Matrix::Zero(static_cast<Eigen::Index>(N) * n, n);
  M.block(static_cast<Eigen::Index>(i - 1) * n, 0, n, n).setIdentity();
  return M;
}

AugmentedSystem build_augmented(const LtiPlant& plant, const Matrix& K, double tau, int N,
                                DelayedCost placement) {
  check_gain_shape(plant, K);
  const int n = plant.n();
  AugmentedSystem s;
  s.n = n;
  s.placement = placement;
  if (tau == 0.0) {
    // Delay-free loop; the history collapses onto x(t).
    s.N = 1;
    s.Acal = plant.A() - plant.B() * K;
    s.Bcal = plant.Bw();
    s.CtC = plant.Q() + K.transpose() * plant.R() * K;
    return s;
  }
  const ChebyshevGrid grid = chebyshev_grid(tau, N);
  const Matrix D = differentiation_blocks(grid);
  const Eigen::Index dim = static_cast<Eigen::Index>(N) * n;
  s.N = N;
  s.Acal = Matrix::Zero(dim, dim);
  for (int i = 0; i + 1 < N; ++i)
    for (int j = 0; j < N; ++j)
      s.Acal.block(i * n, j * n, n, n).diagonal().setConstant(D(i, j));
  const Eigen::Index last = dim - n;
  s.Acal.block(last, last, n, n) = plant.A();
  s.Acal.block(last, 0, n, n) -= plant.B() * K;

  s.Bcal = Matrix::Zero(dim, plant.p());
  s.Bcal.bottomRows(n) = plant.Bw();

  s.CtC = Matrix::Zero(dim, dim);
  s.CtC.block(last, last, n, n) = plant.Q();
  const Eigen::Index cost = placement == DelayedCost::AtDelayedState ? 0 : last;
  s.CtC.block(cost, cost, n, n) += K.transpose() * plant.R() * K;
  return s;
}

H2Evaluation::H2Evaluation(const LtiPlant& plant, const Matrix& K, double tau, int N, DelayedCost placement)
    : B_(plant.B()),
      R_(plant.R()),
      K_(K),
      n_(plant.n()),
      sys_(build_augmented(plant, K, tau, N, placement)),
      solver_(sys_.Acal) {
  N_ = sys_.N;
  cost_row_ = placement == DelayedCost::AtDelayedState ? 0 : static_cast<Eigen::Index>(N_ - 1) * n_;
  if (!(solver_.spectral_abscissa() < -kHurwitzTol))
    fail(ErrorCode::Unstable, "discretized closed loop is not Hurwitz");
  L_ = solver_.solve(sys_.Bcal * sys_.Bcal.transpose());
  P_ = solver_.solve_adjoint(sys_.CtC);
  const Eigen::Index last = static_cast<Eigen::Index>(N_ - 1) * n_;
  const Matrix Bw = sys_.Bcal.bottomRows(n_);
  J_ = (Bw.transpose() * P_.block(last, last, n_, n_) * Bw).trace();
  J_dual_ = (sys_.CtC.cwiseProduct(L_)).sum();
}

Matrix H2Evaluation::gradient() const {
  const Eigen::Index last = static_cast<Eigen::Index>(N_ - 1) * n_;
  const Matrix Lc = L_.block(cost_row_, cost_row_, n_, n_);
  const Matrix PL_N1 = P_.middleRows(last, n_) * L_.leftCols(n_);
  return 2.0 * (R_ * K_ * Lc - B_.transpose() * PL_N1);
}

Matrix H2Evaluation::hessian_apply(const Matrix& Kt) const {
  const Eigen::Index dim = L_.rows();
  const Eigen::Index last = dim - n_;
  // A Z1 + Z1 A^T = G1 + G1^T with G1 = M_N B Kt M_1^T L.
  Matrix G1 = Matrix::Zero(dim, dim);
  G1.middleRows(last, n_) = B_ * Kt * L_.topRows(n_);
  const Matrix Z1 = solver_.solve(-(G1 + G1.transpose()));
  // A^T Z2 + Z2 A = G2 + G2^T with G2 = P M_N B Kt M_1^T - M_c K^T R Kt M_c^T,
  // M_c the block carrying the input cost.
  Matrix G2 = Matrix::Zero(dim, dim);
  G2.leftCols(n_) = P_.middleCols(last, n_) * (B_ * Kt);
  G2.block(cost_row_, cost_row_, n_, n_) -= K_.transpose() * R_ * Kt;
  const Matrix Z2 = solver_.solve_adjoint(-(G2 + G2.transpose()));

  const Matrix Lc = L_.block(cost_row_, cost_row_, n_, n_);
  const Matrix Z1c = Z1.block(cost_row_, cost_row_, n_, n_);
  const Matrix cross = Z2.middleRows(last, n_) * L_.leftCols(n_) + P_.middleRows(last, n_) * Z1.leftCols(n_);
  return 2.0 * (R_ * Kt * Lc + R_ * K_ * Z1c - B_.transpose() * cross);
}

double h2_norm(const LtiPlant& plant, const Matrix& K, double tau, int N, DelayedCost placement) {
  return H2Evaluation(plant, K, tau, N, placement).J();
}

Matrix h2_gradient(const LtiPlant& plant, const Matrix& K, double tau, int N, DelayedCost placement) {
  return H2Evaluation(plant, K, tau, N, placement).gradient();
}

int select_grid_size(const LtiPlant& plant, const Matrix& K, double tau, const GridPolicy& policy) {
  if (tau == 0.0 || !policy.adaptive) return policy.N0;
  int N = policy.N0;
  double J = h2_norm(plant, K, tau, N);
  while (2 * N <= policy.N_max) {
    const double J2 = h2_norm(plant, K, tau, 2 * N);
    if (std::abs(J - J2) < policy.rtol * J2) return N;
    N *= 2;
    J = J2;
  }
  return N;
}

namespace {

Matrix masked(const Matrix& X, const SparsityPattern& pattern) {
  return pattern.mask().select(X, Matrix::Zero(X.rows(), X.cols()));
}

}  // namespace

NewtonDirection newton_direction(const H2Evaluation& eval, const SparsityPattern& pattern,
                                 const NewtonOptions& options) {
  const Matrix g = masked(eval.gradient(), pattern);
  NewtonDirection out;
  out.direction = Matrix::Zero(g.rows(), g.cols());
  const double gnorm = g.norm();
  if (gnorm == 0.0) {
    out.converged = true;
    return out;
  }
  const int max_iter = options.max_iter > 0 ? options.max_iter : std::max(1, pattern.card());
  Matrix x = Matrix::Zero(g.rows(), g.cols());
  Matrix r = -g;
  Matrix d = r;
  double rr = r.squaredNorm();
  const double target = options.rtol * gnorm;
  for (int it = 0; it < max_iter; ++it) {
    const Matrix Hd = masked(eval.hessian_apply(d), pattern);
    const double curv = (d.cwiseProduct(Hd)).sum();
    if (!(curv > 0.0)) {
      // Negative curvature: keep the CG iterate if any, else steepest descent.
      out.iterations = it;
      out.residual = std::sqrt(rr);
      if (it == 0) {
        out.direction = -g;
        out.steepest_descent = true;
      } else {
        out.direction = x;
      }
      return out;
    }
    const double alpha = rr / curv;
    x += alpha * d;
    r -= alpha * Hd;
    const double rr_new = r.squaredNorm();
    out.iterations = it + 1;
    if (std::sqrt(rr_new) <= target) {
      out.direction = x;
      out.residual = std::sqrt(rr_new);
      out.converged = true;
      return out;
    }
    d = r + (rr_new / rr) * d;
    rr = rr_new;
  }
  out.residual = std::sqrt(rr);
  // Stalled CG: accept the iterate if it is a descent direction.
  if ((x.cwiseProduct(g)).sum() < 0.0) {
    out.direction = x;
  } else {
    out.direction = -g;
    out.steepest_descent = true;
  }
  return out;
}

NewtonDirection newton_direction(const LtiPlant& plant, const Matrix& K, double tau, int N,
                                 const SparsityPattern& pattern, const NewtonOptions& options) {
  H2Evaluation eval(plant, K, tau, N);
  return newton_direction(eval, pattern, options);
}

}  // namespace delayh2
