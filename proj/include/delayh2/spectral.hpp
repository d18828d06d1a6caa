#pragma once

#include <Eigen/Dense>

#include "delayh2/lyapunov.hpp"
#include "delayh2/model.hpp"

namespace delayh2 {

struct ChebyshevGrid {
  double tau;
  int N;
  Vector theta;  // increasing, theta(0) = -tau, theta(N-1) = 0
};

ChebyshevGrid chebyshev_grid(double tau, int N);

// N x N Lagrange differentiation matrix on the grid (barycentric form).
// Row i gives the derivative at theta(i) of the interpolant of the samples.
Matrix differentiation_blocks(const ChebyshevGrid& grid);

// Where the input-cost term K^T R K enters the augmented output weight.
// AtDelayedState is the block-1 form M_1 K^T R K M_1^T. AtCurrentState puts it on
// the x(t) block; since the history starts at zero, the integrated cost of
// u(t) = -K x(t - tau) equals that of K x(t), so both define the same J in the
// limit, but the current-state form converges much faster in N and is the form
// whose gradient is 2(R K M_N^T L M_N - B^T M_N^T P L M_1).
enum class DelayedCost { AtCurrentState, AtDelayedState };

// Closed-loop spectral discretization. The augmented state stacks the delayed
// history at theta(0..N-2) followed by x(t) at theta(N-1) = 0.
struct AugmentedSystem {
  int n = 0;
  int N = 0;
  DelayedCost placement = DelayedCost::AtCurrentState;
  Matrix Acal;
  Matrix Bcal;
  Matrix CtC;

  // Block selector M_i (1-based) as an (N n) x n matrix.
  Matrix selector(int i) const;
};

AugmentedSystem build_augmented(const LtiPlant& plant, const Matrix& K, double tau, int N,
                                DelayedCost placement = DelayedCost::AtCurrentState);

// N selection rule: start at N0 and double while |J_N - J_2N| >= rtol J_2N, capped at N_max.
struct GridPolicy {
  int N0 = 20;
  int N_max = 80;
  bool adaptive = true;
  double rtol = 1e-6;
};

int select_grid_size(const LtiPlant& plant, const Matrix& K, double tau, const GridPolicy& policy = {});

// Full H2 evaluation at a fixed (K, tau, N). tau = 0 uses the delay-free loop.
class H2Evaluation {
 public:
  H2Evaluation(const LtiPlant& plant, const Matrix& K, double tau, int N,
               DelayedCost placement = DelayedCost::AtCurrentState);

  double J() const { return J_; }
  // Trace(C L C^T), the controllability-side form of the same quantity.
  double J_dual() const { return J_dual_; }
  Matrix gradient() const;
  // Hessian of J applied to a gain direction Kt.
  Matrix hessian_apply(const Matrix& Kt) const;

  const Matrix& L() const { return L_; }
  const Matrix& P() const { return P_; }
  int n() const { return n_; }
  int N() const { return N_; }

 private:
  Matrix B_, R_, K_;
  int n_, N_;
  AugmentedSystem sys_;
  Eigen::Index cost_row_;  // first row of the block carrying K^T R K
  LyapunovSolver solver_;
  Matrix L_, P_;
  double J_, J_dual_;
};

// Throws Unstable when the discretized loop is not Hurwitz.
double h2_norm(const LtiPlant& plant, const Matrix& K, double tau, int N,
               DelayedCost placement = DelayedCost::AtCurrentState);
Matrix h2_gradient(const LtiPlant& plant, const Matrix& K, double tau, int N,
                   DelayedCost placement = DelayedCost::AtCurrentState);

struct NewtonOptions {
  double rtol = 1e-8;
  int max_iter = 0;  // 0 means pattern cardinality
};

struct NewtonDirection {
  Matrix direction;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  bool steepest_descent = false;
};

// Conjugate gradient on the pattern-restricted Hessian system H Kt = -grad J.
NewtonDirection newton_direction(const LtiPlant& plant, const Matrix& K, double tau, int N,
                                 const SparsityPattern& pattern, const NewtonOptions& options = {});
NewtonDirection newton_direction(const H2Evaluation& eval, const SparsityPattern& pattern,
                                 const NewtonOptions& options = {});

}  // namespace delayh2
