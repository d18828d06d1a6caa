#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "delayh2/precondition.hpp"
#include "delayh2/stability.hpp"
#include "oracles.hpp"

using namespace delayh2;

namespace {

LtiPlant scalar_plant(double a, double b = 1.0) {
  return LtiPlant(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b), Matrix::Identity(1, 1),
                  Matrix::Identity(1, 1), Matrix::Identity(1, 1));
}

Matrix gain(double k) { return Matrix::Constant(1, 1, k); }

double exact_min_eig(const LtiPlant& plant, const RelaxationPoint& p) {
  auto [phi, psi] = lmi_min_eigenvalues(plant, p.K, p.tau, p.aux);
  return std::min(phi, psi);
}

}  // namespace

TEST_CASE("zero perturbation is feasible and the relaxation is sound") {
  const LtiPlant plant = scalar_plant(-1.0);
  const RelaxationPoint base = RelaxationPoint::certify(plant, gain(0.2), 0.5);
  Relaxation rel = assemble_relaxation(plant, base, 0.05, 0.02, 1e-6);

  // Hand-built assignment with every perturbation at zero.
  Vector x = Vector::Zero(rel.problem.num_scalars());
  const double slack = std::min(base.aux.phi_min_eig, base.aux.psi_min_eig);
  x(rel.alpha.offset) = slack;
  x(rel.beta.offset) = slack;
  CHECK(min_slack(rel.problem, x) >= -1e-9);
  const RelaxationPoint same = rel.at(x);
  CHECK((same.K - base.K).norm() == 0.0);
  CHECK(same.tau == base.tau);
  CHECK((rel.phi0.evaluate(x) - lmi_phi(plant.A(), plant.B() * base.K, base.tau, base.aux)).norm() < 1e-12);

  rel.problem.minimize(-AffineExpr::of(rel.dtau));
  const FeasibilityResult r = solve_feasibility(rel.problem);
  const RelaxationPoint p = rel.at(r.x);
  CHECK(p.tau - base.tau <= 0.05 + 1e-7);
  CHECK(p.tau > base.tau);
  CHECK(exact_min_eig(plant, p) >= 1e-6 - 1e-7);
  CHECK(lmi_certificate(plant, p.K, p.tau).phi_min_eig >= 0.0);
}

TEST_CASE("tiny gamma and eta keep the step near the base") {
  const LtiPlant plant = scalar_plant(-1.0);
  const RelaxationPoint base = RelaxationPoint::certify(plant, gain(0.2), 0.5);
  for (double g : {1e-3, 1e-5}) {
    Relaxation rel = assemble_relaxation(plant, base, g, g, 1e-6);
    rel.problem.minimize(-AffineExpr::of(rel.dtau));
    const RelaxationPoint p = rel.at(solve_feasibility(rel.problem).x);
    CHECK(p.tau - base.tau <= g + 1e-7);
    CHECK(std::abs(p.K(0, 0) - 0.2) <= g + 1e-7);
  }
  CHECK_THROWS_AS(assemble_relaxation(plant, base, 0.0, 1e-2, 1e-6), Error);
  RelaxationPoint forged = base;
  forged.aux.P *= -1.0;
  CHECK_THROWS_AS(assemble_relaxation(plant, forged, 1e-2, 1e-2, 1e-6), Error);
}

TEST_CASE("relaxation points are certified under random objectives") {
  oracle::Rng rng(21);
  for (int t = 0; t < 4; ++t) {
    const int n = rng.integer(2, 3);
    LtiPlant plant = oracle::random_plant(rng, n, 1, 1, -0.5);
    const Matrix K = 0.3 * rng.gaussian(1, n);
    if (!closed_loop_delay_free(plant, K).second) continue;
    const double tau = 0.25 * std::min(delay_margin(plant, K), 2.0);
    RelaxationPoint base;
    try {
      base = RelaxationPoint::certify(plant, K, tau);
    } catch (const Error&) {
      continue;
    }
    const double gamma = 0.2 * tau, eta = 0.2 * std::max(K.norm(), 1.0);
    Relaxation rel = assemble_relaxation(plant, base, gamma, eta, 1e-6);
    // Push hard on the gain and the delay so the remainder bounds become active.
    AffineExpr obj = -AffineExpr::of(rel.dtau);
    obj += Matrix(rng.gaussian(1, 1)) * rel.dK * Matrix(rng.gaussian(n, 1));
    rel.problem.minimize(obj);
    const RelaxationPoint p = rel.at(solve_feasibility(rel.problem).x);
    CHECK(p.tau >= tau - 1e-9);
    CHECK(p.tau <= tau + gamma + 1e-7);
    CHECK(Eigen::JacobiSVD<Matrix>(p.K - K).singularValues()(0) <= eta + 1e-6);
    CHECK(exact_min_eig(plant, p) >= 1e-6 - 1e-7);
    CHECK(is_stable(plant, p.K, p.tau));
  }
}

TEST_CASE("trust region step examples") {
  const LtiPlant plant = scalar_plant(-1.0);
  const RelaxationPoint base = RelaxationPoint::certify(plant, gain(0.2), 0.5);

  const RelaxationPoint still = trust_region_step(plant, base, 0.5, 0.1, 0.01, 0.01, 1e-6);
  CHECK(still.tau == base.tau);

  const RelaxationPoint moved = trust_region_step(plant, base, 2.0, 0.1, 0.02, 0.01, 1e-6);
  CHECK(moved.tau > base.tau);
  CHECK(moved.tau <= base.tau + 0.02 + 1e-7);
  CHECK(exact_min_eig(plant, moved) >= 1e-6 - 1e-7);
  CHECK_NOTHROW(lmi_certificate(plant, moved.K, moved.tau));

  // Radius below gamma: the step lands on the trust-region boundary exactly.
  const RelaxationPoint edge = trust_region_step(plant, base, 2.0, 0.004, 0.02, 0.01, 1e-6);
  CHECK(edge.tau == base.tau + 0.004);
  CHECK(is_stable(plant, edge.K, edge.tau));
}

TEST_CASE("fast path when the initial gain tolerates the link delay") {
  const LtiPlant plant = scalar_plant(0.0);
  const NetworkModel net(1.0, 0.1, 0.01);  // tau* = 0.11 < pi/2
  const PreconditionResult r = precondition(plant, net, gain(1.0));
  CHECK(r.fast_path);
  CHECK(r.trace.empty());
  CHECK(r.c_final == 1.0);
  CHECK(r.tau_prime == doctest::Approx(0.11));
  CHECK((r.K_prime - gain(1.0)).norm() == 0.0);
}

TEST_CASE("bandwidth adaptation on the scalar integrator") {
  const LtiPlant plant = scalar_plant(0.0);
  const NetworkModel net(0.005, 0.0, 0.01);  // tau* = 2 > pi/2
  PreconditionOptions opt;
  opt.max_iterations = 15;
  const PreconditionResult r = precondition(plant, net, gain(1.0), opt);
  CHECK_FALSE(r.fast_path);
  CHECK(r.snapped);
  CHECK(is_stable(plant, r.K_prime, r.tau_prime));
  const int card = cardinality(r.K_prime);
  CHECK(std::abs(r.tau_prime - link_delay(card, NetworkModel(r.c_final, net.tau_p, net.kappa))) <= 1e-9);
  CHECK(r.c_final > net.c);
  CHECK(r.tau_prime <= delay_margin(plant, r.K_prime));
  for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].tau >= r.trace[i - 1].tau);
  for (const auto& s : r.trace)
    if (s.accepted) CHECK(s.tau < 2.0);
}

TEST_CASE("preconditioning contract on random plants") {
  oracle::Rng rng(5);
  int done = 0;
  for (int t = 0; t < 20 && done < 3; ++t) {
    const int n = rng.integer(2, 3);
    LtiPlant plant = oracle::random_plant(rng, n, 1, 1, -0.2);
    const Matrix K = 0.5 * rng.gaussian(1, n);
    if (!closed_loop_delay_free(plant, K).second) continue;
    const double margin = delay_margin(plant, K);
    if (!std::isfinite(margin) || margin > 5.0) continue;
    const int card = cardinality(K);
    const NetworkModel net(0.01 * card / (1.5 * margin), 0.0, 0.01);
    PreconditionOptions opt;
    opt.max_iterations = 8;
    const PreconditionResult r = precondition(plant, net, K, opt);
    CHECK(is_stable(plant, r.K_prime, r.tau_prime));
    CHECK(std::abs(r.tau_prime - link_delay(cardinality(r.K_prime), NetworkModel(r.c_final, 0.0, 0.01))) <= 1e-9);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].tau >= r.trace[i - 1].tau);
    ++done;
  }
  CHECK(done == 3);
}
