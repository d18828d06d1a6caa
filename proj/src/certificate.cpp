#include "delayh2/certificate.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace delayh2 {

namespace {

double min_eig(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void pack_one(const MatrixVar& v, const Matrix& M, Vector& x) {
  int k = v.offset;
  if (v.symmetric) {
    for (int j = 0; j < v.cols; ++j)
      for (int i = 0; i <= j; ++i) x(k++) = 0.5 * (M(i, j) + M(j, i));
  } else {
    for (int j = 0; j < v.cols; ++j)
      for (int i = 0; i < v.rows; ++i) x(k++) = M(i, j);
  }
}

}  // namespace

LmiVariables LmiVariables::declare(FeasibilityProblem& fp, int n, const std::string& prefix) {
  LmiVariables v;
  v.P = fp.add_variable(prefix + "P", n, n, true);
  v.Q0 = fp.add_variable(prefix + "Q0", n, n);
  v.Q1 = fp.add_variable(prefix + "Q1", n, n);
  v.S0 = fp.add_variable(prefix + "S0", n, n, true);
  v.S1 = fp.add_variable(prefix + "S1", n, n, true);
  v.R00 = fp.add_variable(prefix + "R00", n, n, true);
  v.R01 = fp.add_variable(prefix + "R01", n, n);
  v.R11 = fp.add_variable(prefix + "R11", n, n, true);
  return v;
}

void LmiVariables::pack(const LmiCertificate& c, Vector& x) const {
  pack_one(P, c.P, x);
  pack_one(Q0, c.Q0, x);
  pack_one(Q1, c.Q1, x);
  pack_one(S0, c.S0, x);
  pack_one(S1, c.S1, x);
  pack_one(R00, c.R00, x);
  pack_one(R01, c.R01, x);
  pack_one(R11, c.R11, x);
}

LmiCertificate LmiVariables::unpack(const Vector& x) const {
  LmiCertificate c;
  c.P = P.value(x);
  c.Q0 = Q0.value(x);
  c.Q1 = Q1.value(x);
  c.S0 = S0.value(x);
  c.S1 = S1.value(x);
  c.R00 = R00.value(x);
  c.R01 = R01.value(x);
  c.R11 = R11.value(x);
  return c;
}

LmiTerms LmiTerms::of(const LmiVariables& v) {
  return {AffineExpr::of(v.P),  AffineExpr::of(v.Q0),  AffineExpr::of(v.Q1),  AffineExpr::of(v.S0),
          AffineExpr::of(v.S1), AffineExpr::of(v.R00), AffineExpr::of(v.R01), AffineExpr::of(v.R11)};
}

LmiTerms LmiTerms::constant(const LmiCertificate& c) {
  return {AffineExpr(c.P),  AffineExpr(c.Q0),  AffineExpr(c.Q1),  AffineExpr(c.S0),
          AffineExpr(c.S1), AffineExpr(c.R00), AffineExpr(c.R01), AffineExpr(c.R11)};
}

AffineExpr lmi_phi(const Matrix& A, const Matrix& BK, double tau, const LmiTerms& t) {
  const int n = static_cast<int>(A.rows());
  const double h = 0.5 * tau;
  const Matrix At = A.transpose(), BKt = BK.transpose();
  const AffineExpr Qs = t.Q0 + t.Q1, Qd = t.Q0 - t.Q1;
  const AffineExpr d0 = -(t.P * A) - At * t.P - t.Q0 - t.Q0.transpose() - t.S0;
  const AffineExpr d1 = t.Q1 + t.P * BK;
  const AffineExpr d2 = tau * (t.R00 - t.R11) + (t.S0 - t.S1);
  const AffineExpr d3 = 3.0 * (t.S0 - t.S1);
  const AffineExpr d1a = h * (At * Qs) + h * (t.R00 + t.R01) - Qd;
  const AffineExpr d2a = -h * (BKt * Qs) - h * (t.R01.transpose() + t.R11);
  const AffineExpr d1b = -h * (At * Qd) - h * (t.R00 - t.R01);
  const AffineExpr d2b = h * (BKt * Qd) + h * (t.R01.transpose() - t.R11);
  const AffineExpr Z = AffineExpr::zero(n, n);
  return AffineExpr::blocks({{d0, d1, -d1a, -d1b},
                             {d1.transpose(), t.S1, -d2a, -d2b},
                             {-d1a.transpose(), -d2a.transpose(), d2, Z},
                             {-d1b.transpose(), -d2b.transpose(), Z, d3}});
}

AffineExpr lmi_psi(double tau, const LmiTerms& t) {
  return AffineExpr::blocks({{t.P, t.Q0, t.Q1},
                             {t.Q0.transpose(), t.R00 + (1.0 / tau) * t.S0, t.R01},
                             {t.Q1.transpose(), t.R01.transpose(), t.R11 + (1.0 / tau) * t.S1}});
}

Matrix lmi_phi(const Matrix& A, const Matrix& BK, double tau, const LmiCertificate& c) {
  return lmi_phi(A, BK, tau, LmiTerms::constant(c)).constant();
}

Matrix lmi_psi(double tau, const LmiCertificate& c) { return lmi_psi(tau, LmiTerms::constant(c)).constant(); }

std::pair<double, double> lmi_min_eigenvalues(const LtiPlant& plant, const Matrix& K, double tau,
                                              const LmiCertificate& c) {
  return {min_eig(lmi_phi(plant.A(), plant.B() * K, tau, c)), min_eig(lmi_psi(tau, c))};
}

LmiCertificate scale_certificate(const LmiCertificate& c, double s) {
  if (!(s > 0.0)) fail(ErrorCode::InvalidArgument, "certificate scale must be positive");
  return {s * c.P,   s * c.Q0,  s * c.Q1,  s * c.S0,          s * c.S1,
          s * c.R00, s * c.R01, s * c.R11, s * c.phi_min_eig, s * c.psi_min_eig};
}

LmiCertificate lmi_certificate(const LtiPlant& plant, const Matrix& K, double tau, double margin,
                               const ConicOptions& options) {
  check_gain_shape(plant, K);
  if (!(tau > 0.0) || !std::isfinite(tau)) fail(ErrorCode::InvalidArgument, "certificate needs a finite positive delay");
  if (!(margin >= 0.0)) fail(ErrorCode::InvalidArgument, "margin must be nonnegative");
  FeasibilityProblem fp;
  const LmiVariables vars = LmiVariables::declare(fp, plant.n());
  const LmiTerms terms = LmiTerms::of(vars);
  fp.require_psd(lmi_phi(plant.A(), plant.B() * K, tau, terms), margin);
  fp.require_psd(lmi_psi(tau, terms), margin);
  const FeasibilityResult r = solve_feasibility(fp, options);
  LmiCertificate cert = vars.unpack(r.x);
  std::tie(cert.phi_min_eig, cert.psi_min_eig) = lmi_min_eigenvalues(plant, K, tau, cert);
  const double slack = std::min(cert.phi_min_eig, cert.psi_min_eig);
  if (!(slack >= margin - options.tol)) fail(ErrorCode::NumericalFailure, "certificate failed its eigenvalue re-check");
  return slack > 0.0 ? scale_certificate(cert, std::max(1.0, margin) / slack) : cert;
}

}  // namespace delayh2
