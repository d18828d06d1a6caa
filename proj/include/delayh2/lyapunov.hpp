#pragma once

#include <Eigen/Dense>
#include <vector>

#include "delayh2/model.hpp"

namespace delayh2 {

// Bartels-Stewart solver for M X + X M^T = -W and M^T X + X M = -W.
// The real Schur form of M is computed once and reused across right-hand sides.
class LyapunovSolver {
 public:
  explicit LyapunovSolver(const Matrix& M);

  // Solves M X + X M^T = -W.
  Matrix solve(const Matrix& W) const;
  // Solves M^T X + X M = -W.
  Matrix solve_adjoint(const Matrix& W) const;

  Eigen::VectorXcd eigenvalues() const;
  double spectral_abscissa() const;
  int size() const { return static_cast<int>(T_.rows()); }

 private:
  struct Block {
    int start;
    int size;
  };

  Matrix solve_quasi(const Matrix& C) const;
  Matrix solve_quasi_adjoint(const Matrix& C) const;
  void solve_small(const Matrix& Tk, const Matrix& Tl, bool adjoint, const Matrix& rhs, Eigen::Ref<Matrix> out) const;

  Matrix U_;
  Matrix T_;
  std::vector<Block> blocks_;
  double scale_;
};

Matrix lyapunov_solve(const Matrix& M, const Matrix& W);

}  // namespace delayh2
