#include "delayh2/lyapunov.hpp"

#include <cmath>
#include <limits>

namespace delayh2 {

LyapunovSolver::LyapunovSolver(const Matrix& M) {
  if (M.rows() != M.cols()) fail(ErrorCode::DimensionMismatch, "Lyapunov matrix must be square");
  const int n = static_cast<int>(M.rows());
  Eigen::RealSchur<Matrix> schur(M, true);
  if (schur.info() != Eigen::Success) fail(ErrorCode::NumericalFailure, "real Schur decomposition failed");
  U_ = schur.matrixU();
  T_ = schur.matrixT();
  for (int i = 0; i < n;) {
    if (i + 1 < n && T_(i + 1, i) != 0.0) {
      blocks_.push_back({i, 2});
      i += 2;
    } else {
      blocks_.push_back({i, 1});
      i += 1;
    }
  }
  scale_ = std::max(1.0, T_.cwiseAbs().maxCoeff());
}

Eigen::VectorXcd LyapunovSolver::eigenvalues() const {
  Eigen::VectorXcd ev(T_.rows());
  for (const auto& b : blocks_) {
    if (b.size == 1) {
      ev(b.start) = T_(b.start, b.start);
    } else {
      const double a = T_(b.start, b.start), bb = T_(b.start, b.start + 1);
      const double c = T_(b.start + 1, b.start), d = T_(b.start + 1, b.start + 1);
      const double tr = 0.5 * (a + d);
      const double disc = 0.25 * (a - d) * (a - d) + bb * c;
      const double im = std::sqrt(std::max(0.0, -disc));
      ev(b.start) = {tr, im};
      ev(b.start + 1) = {tr, -im};
    }
  }
  return ev;
}

double LyapunovSolver::spectral_abscissa() const {
  if (T_.rows() == 0) return -std::numeric_limits<double>::infinity();
  return eigenvalues().real().maxCoeff();
}

void LyapunovSolver::solve_small(const Matrix& Tk, const Matrix& Tl, bool adjoint, const Matrix& rhs,
                                 Eigen::Ref<Matrix> out) const {
  const double tiny = 1e3 * std::numeric_limits<double>::epsilon() * scale_;
  if (Tk.size() == 1 && Tl.size() == 1) {
    const double d = Tk(0, 0) + Tl(0, 0);
    if (std::abs(d) <= tiny) fail(ErrorCode::SingularLyapunov, "Lyapunov operator is singular");
    out(0, 0) = rhs(0, 0) / d;
    return;
  }
  const auto bk = Tk.rows(), bl = Tl.rows();
  Matrix Ak = adjoint ? Matrix(Tk.transpose()) : Tk;
  Matrix Al = adjoint ? Tl : Matrix(Tl.transpose());
  // Ak Y + Y Al = rhs in vectorized (column-major) form.
  Matrix S = Matrix::Zero(bk * bl, bk * bl);
  for (Eigen::Index c = 0; c < bl; ++c) S.block(c * bk, c * bk, bk, bk) += Ak;
  for (Eigen::Index c = 0; c < bl; ++c)
    for (Eigen::Index r = 0; r < bl; ++r) S.block(r * bk, c * bk, bk, bk).diagonal().array() += Al(c, r);
  Eigen::FullPivLU<Matrix> lu(S);
  if (std::abs(lu.matrixLU().diagonal().cwiseAbs().minCoeff()) <= tiny)
    fail(ErrorCode::SingularLyapunov, "Lyapunov operator is singular");
  Vector v = lu.solve(Eigen::Map<const Vector>(rhs.data(), rhs.size()));
  out = Eigen::Map<const Matrix>(v.data(), bk, bl);
}

// T Y + Y T^T = C, T upper quasi-triangular; Y symmetric.
Matrix LyapunovSolver::solve_quasi(const Matrix& C) const {
  const int n = static_cast<int>(T_.rows());
  Matrix Y = Matrix::Zero(n, n);
  for (int lb = static_cast<int>(blocks_.size()) - 1; lb >= 0; --lb) {
    const int c0 = blocks_[lb].start, bl = blocks_[lb].size;
    const int tail = n - c0 - bl;
    Matrix rhs = C.middleCols(c0, bl);
    if (tail > 0) rhs.noalias() -= Y.rightCols(tail) * T_.block(c0, c0 + bl, bl, tail).transpose();
    // Rows below the diagonal block are known by symmetry.
    if (tail > 0) Y.block(c0 + bl, c0, tail, bl) = Y.block(c0, c0 + bl, bl, tail).transpose();
    const Matrix Tl = T_.block(c0, c0, bl, bl);
    for (int kb = lb; kb >= 0; --kb) {
      const int r0 = blocks_[kb].start, bk = blocks_[kb].size;
      const int rt = n - r0 - bk;
      Matrix r = rhs.middleRows(r0, bk);
      if (rt > 0) r.noalias() -= T_.block(r0, r0 + bk, bk, rt) * Y.block(r0 + bk, c0, rt, bl);
      solve_small(T_.block(r0, r0, bk, bk), Tl, false, r, Y.block(r0, c0, bk, bl));
    }
  }
  return Y;
}

// T^T Y + Y T = C.
Matrix LyapunovSolver::solve_quasi_adjoint(const Matrix& C) const {
  const int n = static_cast<int>(T_.rows());
  Matrix Y = Matrix::Zero(n, n);
  const int nb = static_cast<int>(blocks_.size());
  for (int lb = 0; lb < nb; ++lb) {
    const int c0 = blocks_[lb].start, bl = blocks_[lb].size;
    Matrix rhs = C.middleCols(c0, bl);
    if (c0 > 0) rhs.noalias() -= Y.leftCols(c0) * T_.block(0, c0, c0, bl);
    if (c0 > 0) Y.block(0, c0, c0, bl) = Y.block(c0, 0, bl, c0).transpose();
    const Matrix Tl = T_.block(c0, c0, bl, bl);
    for (int kb = lb; kb < nb; ++kb) {
      const int r0 = blocks_[kb].start, bk = blocks_[kb].size;
      Matrix r = rhs.middleRows(r0, bk);
      if (r0 > 0) r.noalias() -= T_.block(0, r0, r0, bk).transpose() * Y.block(0, c0, r0, bl);
      solve_small(T_.block(r0, r0, bk, bk), Tl, true, r, Y.block(r0, c0, bk, bl));
    }
  }
  return Y;
}

Matrix LyapunovSolver::solve(const Matrix& W) const {
  if (W.rows() != T_.rows() || W.cols() != T_.cols()) fail(ErrorCode::DimensionMismatch, "W has wrong size");
  Matrix C = -(U_.transpose() * W * U_);
  Matrix Y = solve_quasi(C);
  Matrix X = U_ * Y * U_.transpose();
  return 0.5 * (X + X.transpose());
}

Matrix LyapunovSolver::solve_adjoint(const Matrix& W) const {
  if (W.rows() != T_.rows() || W.cols() != T_.cols()) fail(ErrorCode::DimensionMismatch, "W has wrong size");
  Matrix C = -(U_.transpose() * W * U_);
  Matrix Y = solve_quasi_adjoint(C);
  Matrix X = U_ * Y * U_.transpose();
  return 0.5 * (X + X.transpose());
}

Matrix lyapunov_solve(const Matrix& M, const Matrix& W) { return LyapunovSolver(M).solve(W); }

}  // namespace delayh2
