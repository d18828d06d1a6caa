#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "delayh2/certificate.hpp"
#include "delayh2/conic.hpp"
#include "delayh2/model.hpp"

namespace delayh2 {

// A gain and delay together with auxiliaries certifying them.
struct RelaxationPoint {
  Matrix K;
  double tau = 0.0;
  LmiCertificate aux;

  // Runs lmi_certificate at (K, tau) with margin eps.
  static RelaxationPoint certify(const LtiPlant& plant, const Matrix& K, double tau, double eps = 1e-6,
                                 const ConicOptions& options = {});
};

// Convex inner approximation of the certified set around a base point. The
// gain perturbation is restricted to the support of the base gain, so the
// cardinality never grows.
struct Relaxation {
  FeasibilityProblem problem;
  RelaxationPoint base;
  LmiVariables delta;  // auxiliary perturbations
  AffineExpr dK;       // m x n
  MatrixVar dtau;
  MatrixVar alpha, beta;
  AffineExpr phi0, psi0;

  // base + perturbation encoded in x.
  RelaxationPoint at(const Vector& x) const;
};

// Any feasible point of the returned problem yields (K, tau, aux) with
// Phi_L >= eps I and Psi_L >= eps I at the perturbed values. tau_cap further
// limits the delay increase below gamma.
Relaxation assemble_relaxation(const LtiPlant& plant, const RelaxationPoint& base, double gamma, double eta,
                               double eps, double tau_cap = std::numeric_limits<double>::infinity());

// Auxiliaries certifying (K, tau) that are closest to anchor in the Euclidean
// norm of the packed unknowns. Throws StepInfeasible when none are found.
LmiCertificate project_auxiliaries(const LtiPlant& plant, const Matrix& K, double tau, const LmiCertificate& anchor,
                                   double eps, const ConicOptions& options = {});

// One trust-region iteration toward the delay target T. The quadratic model of
// (T - tau)^2 is minimized by scalar Steihaug CG within |tau - tau_k| <= Delta,
// the relaxation then maximizes the delay increase up to that step, and the
// auxiliaries are re-solved at the new pair. Throws StepInfeasible when the
// relaxation has no solution for these (gamma, eta).
RelaxationPoint trust_region_step(const LtiPlant& plant, const RelaxationPoint& current, double T, double Delta,
                                  double gamma, double eta, double eps, const ConicOptions& options = {});

struct PreconditionOptions {
  double eps = 1e-6;
  double gamma_fraction = 1e-2;  // gamma = fraction * tau_k
  double eta_fraction = 1e-2;    // eta = fraction * ||K_k||_F
  int shrink_attempts = 6;
  double delta_fraction = 0.2;  // trust radius = fraction * tau_k
  std::optional<double> target;  // T, default link_delay(m n)
  int max_iterations = 60;
  int bisection_steps = 6;
  ConicOptions conic;
};

struct PreconditionStep {
  int k;
  double tau;
  int card;
  bool accepted;
};

struct PreconditionResult {
  Matrix K_prime;
  double tau_prime = 0.0;
  double c_final = 0.0;
  std::vector<PreconditionStep> trace;
  bool fast_path = false;
  bool snapped = false;
  bool iteration_cap = false;
};

// Finds (K', tau', c_final) with K' stable at tau' = link_delay(Card K') under
// bandwidth c_final.
PreconditionResult precondition(const LtiPlant& plant, const NetworkModel& net, const Matrix& K0,
                                const PreconditionOptions& options = {});

}  // namespace delayh2
