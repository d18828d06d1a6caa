#include "delayh2/affine.hpp"

namespace delayh2 {

namespace {

SparseMatrix sparse_of(const Matrix& M) { return M.sparseView(); }

void prune_empty(std::map<int, SparseMatrix>& terms) {
  for (auto it = terms.begin(); it != terms.end();) {
    it->second.prune(0.0, 0.0);
    it = it->second.nonZeros() == 0 ? terms.erase(it) : std::next(it);
  }
}

}  // namespace

Matrix MatrixVar::value(const Vector& x) const {
  Matrix M(rows, cols);
  int k = offset;
  if (symmetric) {
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i <= j; ++i) M(i, j) = M(j, i) = x(k++);
  } else {
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) M(i, j) = x(k++);
  }
  return M;
}

AffineExpr::AffineExpr(Matrix constant) : constant_(std::move(constant)) {}

AffineExpr AffineExpr::zero(int rows, int cols) { return AffineExpr(Matrix::Zero(rows, cols)); }

AffineExpr AffineExpr::scalar(double v) { return AffineExpr(Matrix::Constant(1, 1, v)); }

AffineExpr AffineExpr::of(const MatrixVar& v) {
  AffineExpr e = zero(v.rows, v.cols);
  int k = v.offset;
  auto unit = [&](int i, int j) {
    SparseMatrix S(v.rows, v.cols);
    S.insert(i, j) = 1.0;
    if (v.symmetric && i != j) S.insert(j, i) = 1.0;
    S.makeCompressed();
    return S;
  };
  if (v.symmetric) {
    for (int j = 0; j < v.cols; ++j)
      for (int i = 0; i <= j; ++i) e.terms_.emplace(k++, unit(i, j));
  } else {
    for (int j = 0; j < v.cols; ++j)
      for (int i = 0; i < v.rows; ++i) e.terms_.emplace(k++, unit(i, j));
  }
  return e;
}

AffineExpr AffineExpr::scaled_identity(const AffineExpr& t, int k) {
  if (t.rows() != 1 || t.cols() != 1) fail(ErrorCode::DimensionMismatch, "scaled identity needs a scalar");
  AffineExpr e(t.constant_(0, 0) * Matrix::Identity(k, k));
  for (const auto& [i, F] : t.terms_) {
    SparseMatrix S(k, k);
    S.setIdentity();
    e.terms_.emplace(i, F.coeff(0, 0) * S);
  }
  return e;
}

Matrix AffineExpr::evaluate(const Vector& x) const {
  Matrix M = constant_;
  for (const auto& [i, F] : terms_) {
    if (i >= x.size()) fail(ErrorCode::DimensionMismatch, "assignment shorter than the variable list");
    M += x(i) * Matrix(F);
  }
  return M;
}

AffineExpr AffineExpr::transpose() const {
  AffineExpr e(constant_.transpose());
  for (const auto& [i, F] : terms_) e.terms_.emplace(i, SparseMatrix(F.transpose()));
  return e;
}

AffineExpr AffineExpr::block(int r, int c, int h, int w) const {
  AffineExpr e(constant_.block(r, c, h, w));
  for (const auto& [i, F] : terms_) e.terms_.emplace(i, SparseMatrix(F.block(r, c, h, w)));
  prune_empty(e.terms_);
  return e;
}

AffineExpr& AffineExpr::operator+=(const AffineExpr& o) {
  if (rows() != o.rows() || cols() != o.cols()) fail(ErrorCode::DimensionMismatch, "affine sum shape mismatch");
  constant_ += o.constant_;
  for (const auto& [i, F] : o.terms_) {
    auto it = terms_.find(i);
    if (it == terms_.end())
      terms_.emplace(i, F);
    else
      it->second += F;
  }
  prune_empty(terms_);
  return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& o) { return *this += (-1.0) * o; }

AffineExpr& AffineExpr::operator*=(double s) {
  constant_ *= s;
  for (auto& [i, F] : terms_) F *= s;
  if (s == 0.0) terms_.clear();
  return *this;
}

AffineExpr operator*(const Matrix& L, const AffineExpr& a) {
  if (L.cols() != a.rows()) fail(ErrorCode::DimensionMismatch, "affine left product shape mismatch");
  AffineExpr e(L * a.constant_);
  for (const auto& [i, F] : a.terms_) e.terms_.emplace(i, sparse_of(L * F));
  prune_empty(e.terms_);
  return e;
}

AffineExpr operator*(const AffineExpr& a, const Matrix& R) {
  if (a.cols() != R.rows()) fail(ErrorCode::DimensionMismatch, "affine right product shape mismatch");
  AffineExpr e(a.constant_ * R);
  for (const auto& [i, F] : a.terms_) e.terms_.emplace(i, sparse_of(F * R));
  prune_empty(e.terms_);
  return e;
}

AffineExpr AffineExpr::blocks(const std::vector<std::vector<AffineExpr>>& grid) {
  if (grid.empty() || grid.front().empty()) fail(ErrorCode::InvalidArgument, "empty block grid");
  const std::size_t nr = grid.size(), nc = grid.front().size();
  std::vector<int> heights(nr), widths(nc), roff(nr + 1, 0), coff(nc + 1, 0);
  for (std::size_t i = 0; i < nr; ++i) {
    if (grid[i].size() != nc) fail(ErrorCode::DimensionMismatch, "ragged block grid");
    heights[i] = grid[i][0].rows();
    roff[i + 1] = roff[i] + heights[i];
  }
  for (std::size_t j = 0; j < nc; ++j) {
    widths[j] = grid[0][j].cols();
    coff[j + 1] = coff[j] + widths[j];
  }
  AffineExpr e = zero(roff[nr], coff[nc]);
  std::map<int, std::vector<Eigen::Triplet<double>>> trips;
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) {
      const AffineExpr& b = grid[i][j];
      if (b.rows() != heights[i] || b.cols() != widths[j])
        fail(ErrorCode::DimensionMismatch, "block grid shape mismatch");
      e.constant_.block(roff[i], coff[j], heights[i], widths[j]) = b.constant_;
      for (const auto& [v, F] : b.terms_) {
        auto& t = trips[v];
        for (int k = 0; k < F.outerSize(); ++k)
          for (SparseMatrix::InnerIterator it(F, k); it; ++it)
            t.emplace_back(roff[i] + it.row(), coff[j] + it.col(), it.value());
      }
    }
  for (auto& [v, t] : trips) {
    SparseMatrix S(e.rows(), e.cols());
    S.setFromTriplets(t.begin(), t.end());
    e.terms_.emplace(v, std::move(S));
  }
  prune_empty(e.terms_);
  return e;
}

}  // namespace delayh2
