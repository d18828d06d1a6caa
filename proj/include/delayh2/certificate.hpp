#pragma once

#include "delayh2/conic.hpp"
#include "delayh2/model.hpp"

namespace delayh2 {

// Auxiliary matrices of the discretized Lyapunov-Krasovskii condition for
// dx = A x(t) + A1 x(t - tau) with A1 = -B K.
struct LmiCertificate {
  Matrix P, Q0, Q1, S0, S1, R00, R01, R11;
  double phi_min_eig = 0.0;
  double psi_min_eig = 0.0;
};

// Unknowns of the condition inside a FeasibilityProblem.
struct LmiVariables {
  MatrixVar P, Q0, Q1, S0, S1, R00, R01, R11;

  static LmiVariables declare(FeasibilityProblem& fp, int n, const std::string& prefix = "");
  // Writes a certificate into an assignment vector.
  void pack(const LmiCertificate& c, Vector& x) const;
  LmiCertificate unpack(const Vector& x) const;
};

// Auxiliary blocks as affine expressions (constant parts allowed, so the same
// builders serve both the plain condition and its perturbed relaxations).
struct LmiTerms {
  AffineExpr P, Q0, Q1, S0, S1, R00, R01, R11;

  static LmiTerms of(const LmiVariables& v);
  static LmiTerms constant(const LmiCertificate& c);
};

// Phi_L (4n x 4n) and Psi_L (3n x 3n) for fixed A, B K and tau.
AffineExpr lmi_phi(const Matrix& A, const Matrix& BK, double tau, const LmiTerms& t);
AffineExpr lmi_psi(double tau, const LmiTerms& t);

Matrix lmi_phi(const Matrix& A, const Matrix& BK, double tau, const LmiCertificate& c);
Matrix lmi_psi(double tau, const LmiCertificate& c);

// Both conditions are homogeneous in the auxiliaries; this multiplies all of
// them (and the recorded eigenvalues) by s > 0.
LmiCertificate scale_certificate(const LmiCertificate& c, double s);

// Searches for auxiliaries with Phi_L >= margin I and Psi_L >= margin I. The
// result is scaled so that its smaller eigenvalue is max(1, margin).
// Infeasible is inconclusive about stability: the condition is only sufficient.
LmiCertificate lmi_certificate(const LtiPlant& plant, const Matrix& K, double tau, double margin = 1e-6,
                               const ConicOptions& options = {});

// Smallest eigenvalues of Phi_L and Psi_L at a given certificate.
std::pair<double, double> lmi_min_eigenvalues(const LtiPlant& plant, const Matrix& K, double tau,
                                              const LmiCertificate& c);

}  // namespace delayh2
