#include "delayh2/conic.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

namespace delayh2 {

MatrixVar FeasibilityProblem::add_variable(const std::string& name, int rows, int cols, bool symmetric) {
  if (rows <= 0 || cols <= 0) fail(ErrorCode::InvalidArgument, "variable '" + name + "' has an empty shape");
  if (symmetric && rows != cols) fail(ErrorCode::InvalidArgument, "symmetric variable '" + name + "' must be square");
  MatrixVar v{name, num_scalars_, rows, cols, symmetric};
  num_scalars_ += v.size();
  variables_.push_back(v);
  return v;
}

void FeasibilityProblem::check_refs(const AffineExpr& e) const {
  if (!e.terms().empty() && e.terms().rbegin()->first >= num_scalars_)
    fail(ErrorCode::InvalidArgument, "expression references an undeclared variable");
}

void FeasibilityProblem::require_psd(const AffineExpr& expr, double margin) {
  check_refs(expr);
  if (expr.rows() != expr.cols() || expr.rows() == 0) fail(ErrorCode::DimensionMismatch, "PSD block must be square");
  const auto asym = [](double d, double s) { return d > 1e-9 * (1.0 + s); };
  if (asym((expr.constant() - expr.constant().transpose()).norm(), expr.constant().norm()))
    fail(ErrorCode::InvalidArgument, "PSD block is not symmetric");
  for (const auto& [i, F] : expr.terms())
    if (asym(SparseMatrix(F - SparseMatrix(F.transpose())).norm(), F.norm()))
      fail(ErrorCode::InvalidArgument, "PSD block is not symmetric");
  psd_.push_back({0.5 * (expr + expr.transpose()), margin});
}

void FeasibilityProblem::require_nonneg(const AffineExpr& expr) {
  check_refs(expr);
  linear_.push_back(expr);
}

void FeasibilityProblem::require_norm_cap(const AffineExpr& M, const AffineExpr& bound) {
  for (const auto& block : spectral_norm_bound(M, bound)) require_psd(block);
  require_nonneg(bound);
}

void FeasibilityProblem::minimize(const AffineExpr& objective) {
  check_refs(objective);
  if (objective.rows() != 1 || objective.cols() != 1) fail(ErrorCode::DimensionMismatch, "objective must be scalar");
  objective_ = objective;
}

std::vector<AffineExpr> spectral_norm_bound(const AffineExpr& M, const AffineExpr& t) {
  if (t.rows() != 1 || t.cols() != 1) fail(ErrorCode::DimensionMismatch, "norm bound must be scalar");
  auto scaled_identity = [&](int k) { return AffineExpr::scaled_identity(t, k); };
  bool symmetric = M.rows() == M.cols() && (M.constant() - M.constant().transpose()).norm() == 0.0;
  for (const auto& [i, F] : M.terms()) symmetric = symmetric && SparseMatrix(F - SparseMatrix(F.transpose())).norm() == 0.0;
  if (symmetric) {
    const AffineExpr tI = scaled_identity(M.rows());
    return {tI - M, tI + M};
  }
  return {AffineExpr::blocks({{scaled_identity(M.rows()), M}, {M.transpose(), scaled_identity(M.cols())}})};
}

double min_slack(const FeasibilityProblem& problem, const Vector& x) {
  double slack = std::numeric_limits<double>::infinity();
  for (const auto& b : problem.psd_blocks()) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(b.expr.evaluate(x), Eigen::EigenvaluesOnly);
    slack = std::min(slack, es.eigenvalues().minCoeff() - b.margin);
  }
  for (const auto& e : problem.linear()) slack = std::min(slack, e.evaluate(x).minCoeff());
  return slack;
}

namespace {

// Dual-form cone program: maximize b^T y subject to C_k - sum_i y_i A_ki >= 0 for
// every PSD block and c - A y >= 0 entrywise.
struct Program {
  int m = 0;
  Vector b;
  struct Block {
    Matrix C;
    std::vector<std::pair<int, SparseMatrix>> A;
    std::vector<std::vector<int>> rows;  // nonzero rows of each A
  };
  std::vector<Block> blocks;
  Vector c;
  SparseMatrix A;  // rows are linear constraints
};

struct IpmResult {
  Vector y;
  int iterations = 0;
  bool converged = false;
  bool stopped = false;
};

double inner(const Matrix& A, const Matrix& B) { return A.cwiseProduct(B).sum(); }

double sparse_trace(const SparseMatrix& A, const Matrix& G) {
  double s = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) s += it.value() * G(it.col(), it.row());
  return s;
}

Matrix sym(const Matrix& M) { return 0.5 * (M + M.transpose()); }

double max_step_psd(const Matrix& X, const Matrix& dX) {
  Eigen::LLT<Matrix> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  Matrix W = llt.matrixL().solve(dX);
  W = llt.matrixL().solve(W.transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(W), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  return lmin < 0.0 ? -1.0 / lmin : std::numeric_limits<double>::infinity();
}

double max_step_lp(const Vector& x, const Vector& dx) {
  double a = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (dx(i) < 0.0) a = std::min(a, -x(i) / dx(i));
  return a;
}

template <class StopFn>
IpmResult interior_point(const Program& P, const ConicOptions& opt, StopFn&& stop) {
  const int m = P.m;
  const std::size_t nb = P.blocks.size();
  const Eigen::Index nl = P.c.size();
  double nu = static_cast<double>(nl);
  double scale = 1.0, cnorm = P.c.norm();
  for (const auto& B : P.blocks) {
    nu += B.C.rows();
    cnorm = std::hypot(cnorm, B.C.norm());
    scale = std::max(scale, B.C.norm());
    for (const auto& [i, A] : B.A) scale = std::max(scale, A.norm());
  }
  scale = std::max({scale, P.b.cwiseAbs().maxCoeff(), P.c.size() ? P.c.cwiseAbs().maxCoeff() : 0.0, 10.0});

  std::vector<Matrix> X(nb), Z(nb), Zinv(nb), Rd(nb), dX(nb), dZ(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    const auto n = P.blocks[k].C.rows();
    X[k] = scale * Matrix::Identity(n, n);
    Z[k] = scale * Matrix::Identity(n, n);
  }
  Vector x = Vector::Constant(nl, scale), z = Vector::Constant(nl, scale), y = Vector::Zero(m), y_ok = y;

  auto apply_A = [&](const std::vector<Matrix>& W, const Vector& w) {
    Vector out = P.A.transpose() * w;
    for (std::size_t k = 0; k < nb; ++k)
      for (const auto& [i, A] : P.blocks[k].A) out(i) += sparse_trace(A, W[k]);
    return out;
  };
  auto apply_At = [&](std::size_t k, const Vector& v) {
    Matrix S = Matrix::Zero(P.blocks[k].C.rows(), P.blocks[k].C.cols());
    for (const auto& [i, A] : P.blocks[k].A) S += v(i) * A;
    return S;
  };

  IpmResult res;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    res.iterations = iter;
    const Vector Rp = P.b - apply_A(X, x);
    double dinf2 = 0.0, pobj = P.c.dot(x), gap = x.dot(z);
    for (std::size_t k = 0; k < nb; ++k) {
      Rd[k] = P.blocks[k].C - Z[k] - apply_At(k, y);
      dinf2 += Rd[k].squaredNorm();
      pobj += inner(P.blocks[k].C, X[k]);
      gap += inner(X[k], Z[k]);
    }
    const Vector rd = P.c - P.A * y - z;
    dinf2 += rd.squaredNorm();
    const double dobj = P.b.dot(y);
    const double mu = gap / nu;
    const double pinf = Rp.norm() / (1.0 + P.b.norm());
    const double dinf = std::sqrt(dinf2) / (1.0 + cnorm);
    const double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    if (!std::isfinite(mu) || !y.allFinite()) {
      y = y_ok;
      break;
    }
    y_ok = y;
    if (pinf < opt.tol && dinf < opt.tol && relgap < opt.tol) {
      res.converged = true;
      break;
    }
    if (stop(y)) {
      res.stopped = true;
      break;
    }

    // Schur complement M_ij = <A_i, X A_j Z^-1> plus the linear part.
    Matrix M = Matrix(P.A.transpose() * (x.cwiseQuotient(z)).asDiagonal() * P.A);
    std::vector<Matrix> XRdZ(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      Eigen::LLT<Matrix> llt(Z[k]);
      Zinv[k] = llt.solve(Matrix::Identity(Z[k].rows(), Z[k].cols()));
      Zinv[k] = sym(Zinv[k]);
      XRdZ[k] = X[k] * Rd[k] * Zinv[k];
      const auto& A = P.blocks[k].A;
      for (std::size_t jj = 0; jj < A.size(); ++jj) {
        // Only the rows touched by A_j contribute to X A_j Z^-1.
        const auto& rows = P.blocks[k].rows[jj];
        const Matrix T = A[jj].second * Zinv[k];
        const Matrix G = X[k](Eigen::placeholders::all, rows) * T(rows, Eigen::placeholders::all);
        for (std::size_t ii = 0; ii <= jj; ++ii) {
          const double v = sparse_trace(A[ii].second, G);
          M(A[ii].first, A[jj].first) += v;
          if (ii != jj) M(A[jj].first, A[ii].first) += v;
        }
      }
    }
    const double diag_scale = std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());
    Eigen::LLT<Matrix> factor(M);
    for (double reg = 1e-14; factor.info() != Eigen::Success && reg < 1e-4; reg *= 100.0)
      factor.compute(M + reg * diag_scale * Matrix::Identity(m, m));
    if (factor.info() != Eigen::Success) break;
    const Vector xrdz = x.cwiseProduct(rd).cwiseQuotient(z);
    const Vector ARdZ = apply_A(XRdZ, xrdz);

    auto direction = [&](const std::vector<Matrix>& T, const Vector& t, Vector& dy, Vector& dx, Vector& dz) {
      dy = factor.solve(Rp - apply_A(T, t) + ARdZ);
      for (std::size_t k = 0; k < nb; ++k) {
        dZ[k] = Rd[k] - apply_At(k, dy);
        dX[k] = T[k] - sym(X[k] * dZ[k] * Zinv[k]);
      }
      dz = rd - P.A * dy;
      dx = t - x.cwiseProduct(dz).cwiseQuotient(z);
    };
    auto step_lengths = [&](const Vector& dx, const Vector& dz) {
      double ap = max_step_lp(x, dx), ad = max_step_lp(z, dz);
      for (std::size_t k = 0; k < nb; ++k) {
        ap = std::min(ap, max_step_psd(X[k], dX[k]));
        ad = std::min(ad, max_step_psd(Z[k], dZ[k]));
      }
      return std::pair{ap, ad};
    };

    // Predictor.
    std::vector<Matrix> T(nb);
    for (std::size_t k = 0; k < nb; ++k) T[k] = -X[k];
    Vector dy, dx, dz;
    direction(T, -x, dy, dx, dz);
    auto [ap, ad] = step_lengths(dx, dz);
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double gap_aff = (x + ap * dx).dot(z + ad * dz);
    for (std::size_t k = 0; k < nb; ++k) gap_aff += inner(X[k] + ap * dX[k], Z[k] + ad * dZ[k]);
    const double sigma = std::clamp(std::pow(std::max(gap_aff, 0.0) / gap, 3.0), 0.0, 1.0);

    // Corrector.
    for (std::size_t k = 0; k < nb; ++k) T[k] = sigma * mu * Zinv[k] - X[k] - sym(dX[k] * dZ[k] * Zinv[k]);
    const Vector t = (sigma * mu * Vector::Ones(nl) - dx.cwiseProduct(dz)).cwiseQuotient(z) - x;
    direction(T, t, dy, dx, dz);
    std::tie(ap, ad) = step_lengths(dx, dz);
    ap = std::min(1.0, 0.98 * ap);
    ad = std::min(1.0, 0.98 * ad);
    for (std::size_t k = 0; k < nb; ++k) {
      X[k] = sym(X[k] + ap * dX[k]);
      Z[k] = sym(Z[k] + ad * dZ[k]);
    }
    x += ap * dx;
    z += ad * dz;
    y += ad * dy;
    res.iterations = iter + 1;
  }
  res.y = y;
  return res;
}

void add_linear_rows(std::vector<Eigen::Triplet<double>>& trips, std::vector<double>& c, const AffineExpr& e,
                     int t_index) {
  for (int col = 0; col < e.cols(); ++col)
    for (int row = 0; row < e.rows(); ++row) {
      const int r = static_cast<int>(c.size());
      c.push_back(e.constant()(row, col));
      for (const auto& [i, F] : e.terms()) {
        const double v = F.coeff(row, col);
        if (v != 0.0) trips.emplace_back(r, i, -v);
      }
      if (t_index >= 0) trips.emplace_back(r, t_index, 1.0);
    }
}

// Builds the dual-form program. With phase_one, y has an extra entry t that
// shifts every constraint and is maximized (capped at 1).
Program build_program(const FeasibilityProblem& fp, const ConicOptions& opt, bool phase_one) {
  const int nv = fp.num_scalars();
  const int t_index = phase_one ? nv : -1;
  Program P;
  P.m = nv + (phase_one ? 1 : 0);
  P.b = Vector::Zero(P.m);
  if (phase_one) {
    P.b(t_index) = 1.0;
  } else if (fp.objective()) {
    for (const auto& [i, F] : fp.objective()->terms()) P.b(i) = -F.coeff(0, 0);
  }
  for (const auto& blk : fp.psd_blocks()) {
    Program::Block B;
    const int k = blk.expr.rows();
    B.C = blk.expr.constant() - blk.margin * Matrix::Identity(k, k);
    for (const auto& [i, F] : blk.expr.terms()) B.A.emplace_back(i, SparseMatrix(-F));
    if (phase_one) {
      SparseMatrix I(k, k);
      I.setIdentity();
      B.A.emplace_back(t_index, I);
    }
    for (const auto& [i, F] : B.A) {
      std::vector<bool> hit(k, false);
      for (int col = 0; col < F.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(F, col); it; ++it) hit[it.row()] = true;
      std::vector<int> rows;
      for (int r = 0; r < k; ++r)
        if (hit[r]) rows.push_back(r);
      B.rows.push_back(std::move(rows));
    }
    P.blocks.push_back(std::move(B));
  }
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<double> c;
  for (const auto& e : fp.linear()) add_linear_rows(trips, c, e, t_index);
  for (int i = 0; i < nv; ++i) {
    trips.emplace_back(static_cast<int>(c.size()), i, 1.0);
    c.push_back(opt.bound);
    trips.emplace_back(static_cast<int>(c.size()), i, -1.0);
    c.push_back(opt.bound);
  }
  if (phase_one) {
    trips.emplace_back(static_cast<int>(c.size()), t_index, 1.0);
    c.push_back(1.0);
  }
  P.c = Eigen::Map<Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
  P.A = SparseMatrix(static_cast<Eigen::Index>(c.size()), P.m);
  P.A.setFromTriplets(trips.begin(), trips.end());
  return P;
}

}  // namespace

FeasibilityResult solve_feasibility(const FeasibilityProblem& problem, const ConicOptions& options) {
  const int nv = problem.num_scalars();
  if (nv == 0) fail(ErrorCode::InvalidArgument, "problem has no variables");
  auto finite = [](const AffineExpr& e) {
    bool ok = e.constant().allFinite();
    for (const auto& [i, F] : e.terms()) ok = ok && Matrix(F).allFinite();
    return ok;
  };
  for (const auto& b : problem.psd_blocks())
    if (!finite(b.expr) || !std::isfinite(b.margin)) fail(ErrorCode::InvalidArgument, "non-finite PSD block data");
  for (const auto& e : problem.linear())
    if (!finite(e)) fail(ErrorCode::InvalidArgument, "non-finite linear constraint data");
  FeasibilityResult out;

  const bool early = options.stop_when_feasible && !problem.objective();
  const Program p1 = build_program(problem, options, true);
  const IpmResult r1 = interior_point(p1, options, [&](const Vector& y) {
    return early && y(nv) >= 0.0 && min_slack(problem, y.head(nv)) >= 0.0;
  });
  if (!r1.y.allFinite()) fail(ErrorCode::NumericalFailure, "phase one produced a non-finite iterate");
  out.x = r1.y.head(nv);
  out.phase_one_t = r1.y(nv);
  out.iterations = r1.iterations;
  if (!r1.converged && !r1.stopped) {
    const double slack = min_slack(problem, out.x);
    if (slack < -1e-5 || !std::isfinite(slack))
      fail(ErrorCode::NumericalFailure, "phase one did not converge (max violation " + std::to_string(-slack) + ")");
  }
  if (out.phase_one_t < -options.tol) {
    std::ostringstream msg;
    msg << "constraints infeasible within |x| <= " << options.bound << ": best uniform slack " << out.phase_one_t;
    fail(ErrorCode::Infeasible, msg.str());
  }

  if (problem.objective()) {
    const Program p2 = build_program(problem, options, false);
    const IpmResult r2 = interior_point(p2, options, [](const Vector&) { return false; });
    out.iterations += r2.iterations;
    if (!r2.y.allFinite()) fail(ErrorCode::NumericalFailure, "objective phase produced a non-finite iterate");
    if (!r2.converged) {
      const double slack = min_slack(problem, r2.y);
      if (slack < -1e-5 || !std::isfinite(slack))
        fail(ErrorCode::NumericalFailure, "objective phase did not converge");
    }
    out.x = r2.y;
    out.objective = problem.objective()->evaluate(out.x)(0, 0);
  }
  out.max_violation = std::max(0.0, -min_slack(problem, out.x));
  if (out.max_violation > 1e-5)
    fail(ErrorCode::NumericalFailure, "returned point violates constraints by " + std::to_string(out.max_violation));
  return out;
}

}  // namespace delayh2
