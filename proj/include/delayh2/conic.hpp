#pragma once

#include <optional>
#include <string>
#include <vector>

#include "delayh2/affine.hpp"

namespace delayh2 {

// Constraint system over scalar unknowns: symmetric affine blocks required to be
// PSD (shifted by a margin), entrywise nonnegative affine expressions, and
// spectral-norm caps. An optional affine scalar objective is minimized.
class FeasibilityProblem {
 public:
  struct PsdBlock {
    AffineExpr expr;
    double margin;
  };

  MatrixVar add_variable(const std::string& name, int rows, int cols, bool symmetric = false);
  MatrixVar add_scalar(const std::string& name) { return add_variable(name, 1, 1); }

  // expr >= margin I; expr must be symmetric.
  void require_psd(const AffineExpr& expr, double margin = 0.0);
  // Every entry of expr >= 0.
  void require_nonneg(const AffineExpr& expr);
  // ||M||_2 <= bound, bound a 1 x 1 expression.
  void require_norm_cap(const AffineExpr& M, const AffineExpr& bound);
  void minimize(const AffineExpr& objective);

  int num_scalars() const { return num_scalars_; }
  const std::vector<MatrixVar>& variables() const { return variables_; }
  const std::vector<PsdBlock>& psd_blocks() const { return psd_; }
  const std::vector<AffineExpr>& linear() const { return linear_; }
  const std::optional<AffineExpr>& objective() const { return objective_; }

 private:
  void check_refs(const AffineExpr& e) const;

  int num_scalars_ = 0;
  std::vector<MatrixVar> variables_;
  std::vector<PsdBlock> psd_;
  std::vector<AffineExpr> linear_;
  std::optional<AffineExpr> objective_;
};

// PSD encoding of ||M||_2 <= t: [[t I, M], [M^T, t I]], or t I -/+ M when M is
// square and symmetric.
std::vector<AffineExpr> spectral_norm_bound(const AffineExpr& M, const AffineExpr& t);

struct ConicOptions {
  double tol = 1e-7;
  int max_iter = 200;
  // Box |x_i| <= bound that keeps the phase-one program bounded.
  double bound = 1e4;
  // Without an objective, stop as soon as an iterate satisfies every constraint.
  bool stop_when_feasible = true;
};

struct FeasibilityResult {
  Vector x;
  double objective = 0.0;
  double phase_one_t = 0.0;  // largest uniform slack found in phase one
  int iterations = 0;
  double max_violation = 0.0;

  Matrix operator[](const MatrixVar& v) const { return v.value(x); }
};

// Phase one maximizes t with every constraint shifted by t; t < -tol is
// reported as Infeasible (within the box). With an objective, phase two
// minimizes it from scratch. Iteration caps raise NumericalFailure.
FeasibilityResult solve_feasibility(const FeasibilityProblem& problem, const ConicOptions& options = {});

// Smallest slack of every constraint at x: min eigenvalue minus margin for PSD
// blocks, the entries of nonnegative expressions.
double min_slack(const FeasibilityProblem& problem, const Vector& x);

}  // namespace delayh2
