#pragma once

#include <Eigen/Sparse>
#include <map>
#include <string>
#include <vector>

#include "delayh2/model.hpp"

namespace delayh2 {

using SparseMatrix = Eigen::SparseMatrix<double>;

// A matrix-valued variable laid out over consecutive scalar unknowns.
// Symmetric variables store the upper triangle column by column.
struct MatrixVar {
  std::string name;
  int offset = 0;
  int rows = 0;
  int cols = 0;
  bool symmetric = false;

  int size() const { return symmetric ? rows * (rows + 1) / 2 : rows * cols; }
  Matrix value(const Vector& x) const;
};

// Matrix-valued affine function C + sum_i x_i F_i of the scalar unknowns.
class AffineExpr {
 public:
  AffineExpr() = default;
  AffineExpr(Matrix constant);
  static AffineExpr zero(int rows, int cols);
  static AffineExpr scalar(double v);
  static AffineExpr of(const MatrixVar& v);
  // t I_k for a 1 x 1 expression t.
  static AffineExpr scaled_identity(const AffineExpr& t, int k);

  int rows() const { return static_cast<int>(constant_.rows()); }
  int cols() const { return static_cast<int>(constant_.cols()); }
  const Matrix& constant() const { return constant_; }
  const std::map<int, SparseMatrix>& terms() const { return terms_; }

  Matrix evaluate(const Vector& x) const;
  AffineExpr transpose() const;
  AffineExpr block(int r, int c, int rows, int cols) const;

  AffineExpr& operator+=(const AffineExpr& o);
  AffineExpr& operator-=(const AffineExpr& o);
  AffineExpr& operator*=(double s);

  friend AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
  friend AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }
  friend AffineExpr operator-(AffineExpr a) { return a *= -1.0; }
  friend AffineExpr operator*(double s, AffineExpr a) { return a *= s; }
  friend AffineExpr operator*(AffineExpr a, double s) { return a *= s; }
  friend AffineExpr operator*(const Matrix& L, const AffineExpr& a);
  friend AffineExpr operator*(const AffineExpr& a, const Matrix& R);

  // Assembles a block matrix; every row of blocks must share heights and every
  // column of blocks widths.
  static AffineExpr blocks(const std::vector<std::vector<AffineExpr>>& grid);

 private:
  Matrix constant_;
  std::map<int, SparseMatrix> terms_;
};

}  // namespace delayh2
