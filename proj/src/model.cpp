#include "delayh2/model.hpp"

#include <cmath>
#include <string>

namespace delayh2 {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Unstable: return "Unstable";
    case ErrorCode::SingularLyapunov: return "SingularLyapunov";
    case ErrorCode::NotDelayFreeStable: return "NotDelayFreeStable";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::CgNonConvergence: return "CgNonConvergence";
    case ErrorCode::StepInfeasible: return "StepInfeasible";
    case ErrorCode::NoStabilizingPair: return "NoStabilizingPair";
    case ErrorCode::LostStability: return "LostStability";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::NoStableInterval: return "NoStableInterval";
    case ErrorCode::MiqpInfeasible: return "MiqpInfeasible";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

int exit_code(ErrorCode code) {
  if (code == ErrorCode::ConfigError) return 2;
  return 10 + static_cast<int>(code);
}

namespace {

bool is_symmetric(const Matrix& S) {
  double scale = std::max(1.0, S.norm());
  return (S - S.transpose()).norm() <= 1e-10 * scale;
}

}  // namespace

Matrix psd_sqrt(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
  Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

double spectral_abscissa(const Matrix& M) {
  if (M.size() == 0) return -INFINITY;
  Eigen::EigenSolver<Matrix> es(M, false);
  return es.eigenvalues().real().maxCoeff();
}

LtiPlant::LtiPlant(Matrix A, Matrix B, Matrix Bw, Matrix Q, Matrix R)
    : A_(std::move(A)), B_(std::move(B)), Bw_(std::move(Bw)), Q_(std::move(Q)), R_(std::move(R)) {
  const auto n = A_.rows();
  if (n < 1 || A_.cols() != n) fail(ErrorCode::DimensionMismatch, "A must be square and nonempty");
  if (B_.rows() != n || B_.cols() < 1) fail(ErrorCode::DimensionMismatch, "B must be n x m with m >= 1");
  if (Bw_.rows() != n || Bw_.cols() < 1) fail(ErrorCode::DimensionMismatch, "Bw must be n x p with p >= 1");
  if (Q_.rows() != n || Q_.cols() != n) fail(ErrorCode::DimensionMismatch, "Q must be n x n");
  if (R_.rows() != B_.cols() || R_.cols() != B_.cols()) fail(ErrorCode::DimensionMismatch, "R must be m x m");
  if (!is_symmetric(Q_)) fail(ErrorCode::InvalidArgument, "Q must be symmetric");
  if (!is_symmetric(R_)) fail(ErrorCode::InvalidArgument, "R must be symmetric");
  Q_ = 0.5 * (Q_ + Q_.transpose());
  R_ = 0.5 * (R_ + R_.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> qe(Q_);
  if (qe.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, Q_.norm()))
    fail(ErrorCode::InvalidArgument, "Q must be positive semidefinite");
  Eigen::SelfAdjointEigenSolver<Matrix> re(R_);
  if (re.eigenvalues().minCoeff() <= 0.0) fail(ErrorCode::InvalidArgument, "R must be positive definite");

  Q_sqrt_ = psd_sqrt(Q_);
  R_sqrt_ = psd_sqrt(R_);
}

Matrix LtiPlant::C1() const {
  Matrix C = Matrix::Zero(n() + m(), n());
  C.topRows(n()) = Q_sqrt_;
  return C;
}

Matrix LtiPlant::D2() const {
  Matrix D = Matrix::Zero(n() + m(), m());
  D.bottomRows(m()) = R_sqrt_;
  return D;
}

NetworkModel::NetworkModel(double c_, double tau_p_, double kappa_) : c(c_), tau_p(tau_p_), kappa(kappa_) {
  if (!(c > 0.0)) fail(ErrorCode::InvalidArgument, "bandwidth c must be positive");
  if (!(tau_p >= 0.0)) fail(ErrorCode::InvalidArgument, "propagation delay must be nonnegative");
  if (!(kappa > 0.0)) fail(ErrorCode::InvalidArgument, "kappa must be positive");
}

SparsityPattern::SparsityPattern(Mask mask) : mask_(std::move(mask)) {
  card_ = static_cast<int>(mask_.count());
}

SparsityPattern SparsityPattern::full(int m, int n) { return SparsityPattern(Mask::Constant(m, n, true)); }

SparsityPattern SparsityPattern::of(const Matrix& K, double zero_tol) {
  return SparsityPattern((K.array().abs() > zero_tol).matrix());
}

ControllerDesign::ControllerDesign(Matrix K, double tau, SparsityPattern pattern, Certification certified)
    : K_(std::move(K)), tau_(tau), pattern_(std::move(pattern)), certified_(certified) {
  if (pattern_.mask().rows() != K_.rows() || pattern_.mask().cols() != K_.cols())
    fail(ErrorCode::DimensionMismatch, "pattern shape differs from K");
  if (!(tau_ >= 0.0)) fail(ErrorCode::InvalidArgument, "delay must be nonnegative");
  for (Eigen::Index i = 0; i < K_.rows(); ++i)
    for (Eigen::Index j = 0; j < K_.cols(); ++j)
      if (!pattern_.mask()(i, j) && K_(i, j) != 0.0)
        fail(ErrorCode::InvalidArgument, "K has a nonzero entry outside the pattern");
}

double default_zero_tol(const Matrix& K) { return 1e-9 * std::max(1.0, K.norm()); }

int cardinality(const Matrix& K, double zero_tol) {
  if (zero_tol < 0.0) fail(ErrorCode::InvalidArgument, "zero_tol must be nonnegative");
  return static_cast<int>((K.array().abs() > zero_tol).count());
}

double link_delay(int card, const NetworkModel& net) {
  if (card < 0) fail(ErrorCode::InvalidArgument, "cardinality must be nonnegative");
  return net.kappa * card / net.c + net.tau_p;
}

double bandwidth_for_delay(int card, double tau, const NetworkModel& net) {
  if (!(tau > net.tau_p)) fail(ErrorCode::InvalidArgument, "delay must exceed the propagation delay");
  return net.kappa * card / (tau - net.tau_p);
}

void check_gain_shape(const LtiPlant& plant, const Matrix& K) {
  if (K.rows() != plant.m() || K.cols() != plant.n())
    fail(ErrorCode::DimensionMismatch, "K must be m x n (" + std::to_string(plant.m()) + " x " +
                                           std::to_string(plant.n()) + ")");
}

std::pair<Matrix, bool> closed_loop_delay_free(const LtiPlant& plant, const Matrix& K) {
  check_gain_shape(plant, K);
  Matrix Acl = plant.A() - plant.B() * K;
  return {Acl, spectral_abscissa(Acl) < -kHurwitzTol};
}

Matrix apply_pattern(const Matrix& K, const SparsityPattern& pattern) {
  if (pattern.mask().rows() != K.rows() || pattern.mask().cols() != K.cols())
    fail(ErrorCode::DimensionMismatch, "pattern shape differs from K");
  return pattern.mask().select(K, Matrix::Zero(K.rows(), K.cols()));
}

}  // namespace delayh2
