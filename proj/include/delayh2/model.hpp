#pragma once

#include <Eigen/Dense>

#include <utility>

#include "delayh2/errors.hpp"

namespace delayh2 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

constexpr double kHurwitzTol = 1e-9;

// Plant dx = A x + B u + Bw w with quadratic cost weights Q (state) and R (input).
class LtiPlant {
 public:
  LtiPlant(Matrix A, Matrix B, Matrix Bw, Matrix Q, Matrix R);

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const Matrix& Bw() const { return Bw_; }
  const Matrix& Q() const { return Q_; }
  const Matrix& R() const { return R_; }
  const Matrix& Q_sqrt() const { return Q_sqrt_; }
  const Matrix& R_sqrt() const { return R_sqrt_; }

  // Performance output z = C1 x + D2 u with C1 = [Q^1/2; 0], D2 = [0; R^1/2].
  Matrix C1() const;
  Matrix D2() const;

  int n() const { return static_cast<int>(A_.rows()); }
  int m() const { return static_cast<int>(B_.cols()); }
  int p() const { return static_cast<int>(Bw_.cols()); }

 private:
  Matrix A_, B_, Bw_, Q_, R_, Q_sqrt_, R_sqrt_;
};

struct NetworkModel {
  double c;      // bandwidth, cardinality units per second
  double tau_p;  // propagation delay [s]
  double kappa;  // proportionality constant [s]

  NetworkModel(double c, double tau_p, double kappa);
};

class SparsityPattern {
 public:
  explicit SparsityPattern(Mask mask);
  static SparsityPattern full(int m, int n);
  static SparsityPattern of(const Matrix& K, double zero_tol);

  const Mask& mask() const { return mask_; }
  int card() const { return card_; }
  int s() const { return static_cast<int>(mask_.size()) - card_; }
  bool operator==(const SparsityPattern& other) const { return mask_ == other.mask_; }

 private:
  Mask mask_;
  int card_;
};

enum class Certification { Uncertified, SpectralStable, LmiCertified };

class ControllerDesign {
 public:
  ControllerDesign(Matrix K, double tau, SparsityPattern pattern,
                   Certification certified = Certification::Uncertified);

  const Matrix& K() const { return K_; }
  double tau() const { return tau_; }
  const SparsityPattern& pattern() const { return pattern_; }
  Certification certified() const { return certified_; }

 private:
  Matrix K_;
  double tau_;
  SparsityPattern pattern_;
  Certification certified_;
};

double default_zero_tol(const Matrix& K);
int cardinality(const Matrix& K, double zero_tol);
inline int cardinality(const Matrix& K) { return cardinality(K, default_zero_tol(K)); }

// Delay map: kappa * card / c + tau_p.
double link_delay(int card, const NetworkModel& net);

// Bandwidth that makes link_delay(card) equal to tau.
double bandwidth_for_delay(int card, double tau, const NetworkModel& net);

// Returns A - B K and whether all its eigenvalues lie left of -kHurwitzTol.
std::pair<Matrix, bool> closed_loop_delay_free(const LtiPlant& plant, const Matrix& K);

Matrix apply_pattern(const Matrix& K, const SparsityPattern& pattern);

void check_gain_shape(const LtiPlant& plant, const Matrix& K);

// Symmetric square root via eigendecomposition; negative eigenvalues clamped at 0.
Matrix psd_sqrt(const Matrix& S);

double spectral_abscissa(const Matrix& M);

}  // namespace delayh2
