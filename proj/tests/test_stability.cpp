#include <doctest.h>

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "delayh2/certificate.hpp"
#include "delayh2/stability.hpp"
#include "oracles.hpp"

using namespace delayh2;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

LtiPlant scalar_plant(double a) { return LtiPlant(scalar(a), scalar(1), scalar(1), scalar(1), scalar(1)); }

// Closed-form margin of dx = a x - k x(t - tau) when k > |a|.
double scalar_margin(double a, double k) {
  const double omega = std::sqrt(k * k - a * a);
  return std::acos(a / k) / omega;
}

// Random instance with A - B K Hurwitz and a finite delay margin.
bool random_delayed_instance(oracle::Rng& rng, int n, LtiPlant& plant, Matrix& K) {
  const int m = rng.integer(1, n);
  plant = oracle::random_plant(rng, n, m, 1, rng.uniform(-0.5, 0.5));
  K = rng.gaussian(m, n);
  Matrix Acl = plant.A() - plant.B() * K;
  const double shift = spectral_abscissa(Acl);
  if (shift > -0.05) K += plant.B().transpose() * (shift + 0.5);
  return closed_loop_delay_free(plant, K).second;
}

}  // namespace

TEST_CASE("is_stable examples") {
  CHECK(is_stable(scalar_plant(-1), scalar(0.5), 0.1));
  CHECK_FALSE(is_stable(scalar_plant(0), scalar(1), 2.0));
  CHECK(is_stable(scalar_plant(0), scalar(1), 1.5));
  CHECK(is_stable(scalar_plant(0), scalar(1), 0.0));
  CHECK_FALSE(is_stable(scalar_plant(1), scalar(0.5), 0.0));
  oracle::Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    LtiPlant p = oracle::random_plant(rng, 3, 2, 1, -0.3);
    for (double tau : {0.0, 0.1, 3.0, 50.0}) CHECK(is_stable(p, Matrix::Zero(2, 3), tau));
  }
}

TEST_CASE("is_stable agrees with the scalar characteristic root") {
  oracle::Rng rng(17);
  for (int t = 0; t < 30; ++t) {
    const double a = rng.uniform(-1.0, 0.5), k = rng.uniform(-2.0, 3.0), tau = rng.uniform(0.05, 2.0);
    const double re = oracle::scalar_rightmost_root(-a, k, tau).real();
    if (std::abs(re) < 1e-3) continue;
    CHECK(is_stable(scalar_plant(a), scalar(k), tau) == (re < 0.0));
  }
}

TEST_CASE("zero crossings examples") {
  auto set = zero_crossings(scalar_plant(0), scalar(1));
  REQUIRE(set.count() == 1);
  CHECK(set.crossings[0].omega == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(set.crossings[0].theta == doctest::Approx(std::numbers::pi / 2).epsilon(1e-9));
  CHECK(set.crossings[0].nu == doctest::Approx(std::numbers::pi / 2).epsilon(1e-9));
  CHECK(zero_crossings(scalar_plant(-1), scalar(0)).count() == 0);
  CHECK(zero_crossings(scalar_plant(-1), scalar(0.5)).count() == 0);
}

TEST_CASE("crossing residuals are small") {
  oracle::Rng rng(9);
  int seen = 0;
  for (int t = 0; t < 20; ++t) {
    LtiPlant p = scalar_plant(0);
    Matrix K;
    if (!random_delayed_instance(rng, rng.integer(2, 4), p, K)) continue;
    const auto set = zero_crossings(p, K);
    const int n = p.n();
    const double scale = std::pow(1.0 + p.A().norm() + (p.B() * K).norm(), n);
    for (const auto& c : set.crossings) {
      using C = std::complex<double>;
      Eigen::MatrixXcd M = C(0, c.omega) * Eigen::MatrixXcd::Identity(n, n) - p.A().cast<C>() +
                           (p.B() * K).cast<C>() * std::polar(1.0, -c.theta);
      CHECK(std::abs(M.determinant()) < 1e-8 * scale);
      CHECK(c.nu == doctest::Approx(c.theta / c.omega));
      ++seen;
    }
    for (int i = 1; i < set.count(); ++i) CHECK(set.crossings[i - 1].nu <= set.crossings[i].nu);
  }
  CHECK(seen > 5);
}

TEST_CASE("delay margin examples") {
  CHECK(delay_margin(scalar_plant(0), scalar(1)) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-9));
  CHECK(delay_margin(scalar_plant(-1), scalar(0.5)) == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(delay_margin(scalar_plant(1), scalar(0.5)), Error);
  try {
    delay_margin(scalar_plant(1), scalar(0.5));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotDelayFreeStable);
  }
  oracle::Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const double a = rng.uniform(-1.0, 1.0), k = rng.uniform(1.1, 3.0);
    CHECK(delay_margin(scalar_plant(a), scalar(k)) == doctest::Approx(scalar_margin(a, k)).epsilon(1e-8));
  }
}

TEST_CASE("pade loop approximates the delayed spectrum") {
  const Matrix M = pade_closed_loop(scalar_plant(-1), scalar(0.5), 0.1);
  CHECK(M.rows() == 9);
  const double re = oracle::scalar_rightmost_root(1.0, 0.5, 0.1).real();
  CHECK(spectral_abscissa(M) == doctest::Approx(re).epsilon(1e-8));
  CHECK(pade_margin(scalar_plant(0), scalar(1), 3.0) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-3));
  CHECK(pade_margin(scalar_plant(-1), scalar(0.5), 5.0) == std::numeric_limits<double>::infinity());
}

TEST_CASE("crossing and Pade margins agree") {
  oracle::Rng rng(23);
  int checked = 0;
  for (int t = 0; t < 200 && checked < 20; ++t) {
    LtiPlant p = scalar_plant(0);
    Matrix K;
    if (!random_delayed_instance(rng, rng.integer(2, 4), p, K)) continue;
    const double margin = delay_margin(p, K);
    if (!std::isfinite(margin) || margin > 20.0) continue;
    const double pade = pade_margin(p, K, 2.0 * margin);
    CHECK(std::abs(pade - margin) <= 0.01 * margin);
    CHECK(is_stable(p, K, 0.95 * margin));
    CHECK_FALSE(is_stable(p, K, 1.05 * margin));
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("stable interval examples") {
  oracle::Rng rng(2);
  LtiPlant p = oracle::random_plant(rng, 3, 1, 1, -0.2);
  auto all = stable_intervals(p, Matrix::Zero(1, 3), 4.0);
  REQUIRE(all.intervals.size() == 1);
  CHECK(all.intervals[0].lo == 0.0);
  CHECK(all.intervals[0].hi == 4.0);

  auto one = stable_intervals(scalar_plant(0), scalar(1), 3.0);
  REQUIRE(one.intervals.size() == 1);
  CHECK(one.intervals[0].lo == 0.0);
  CHECK(one.intervals[0].hi == doctest::Approx(std::numbers::pi / 2).epsilon(1e-9));
}

TEST_CASE("delay can stabilize a loop that is unstable without it") {
  // Lightly unstable oscillator with positive velocity feedback: a delay near
  // half the oscillation period turns it into damping.
  Matrix A(2, 2), B(2, 1), K(1, 2);
  A << 0, 1, -1, 0.1;
  B << 0, 1;
  K << 0, -0.5;
  LtiPlant p(A, B, B, Matrix::Identity(2, 2), scalar(1));
  CHECK_FALSE(closed_loop_delay_free(p, K).second);
  auto iv = stable_intervals(p, K, 8.0);
  REQUIRE_FALSE(iv.intervals.empty());
  CHECK(iv.intervals.front().lo > 0.5);
  CHECK_FALSE(iv.contains(0.1));
  for (const auto& I : iv.intervals) CHECK(is_stable(p, K, 0.5 * (I.lo + I.hi)));
}

TEST_CASE("stable intervals agree with is_stable at probe delays") {
  oracle::Rng rng(31);
  int instances = 0;
  for (int t = 0; t < 40 && instances < 8; ++t) {
    LtiPlant p = scalar_plant(0);
    Matrix K;
    if (!random_delayed_instance(rng, rng.integer(2, 3), p, K)) continue;
    const double tau_max = 4.0;
    const auto iv = stable_intervals(p, K, tau_max);
    for (int k = 0; k < 10; ++k) {
      const double tau = rng.uniform(0.0, tau_max);
      bool near_boundary = false;
      for (double b : iv.boundaries) near_boundary |= std::abs(tau - b) < 1e-3;
      if (near_boundary) continue;
      CHECK(iv.contains(tau) == is_stable(p, K, tau));
    }
    ++instances;
  }
  CHECK(instances == 8);
}

TEST_CASE("LMI certificate examples") {
  auto cert = lmi_certificate(scalar_plant(-1), scalar(0.2), 0.5);
  CHECK(cert.phi_min_eig >= 1e-6 - 1e-7);
  CHECK(cert.psi_min_eig >= 1e-6 - 1e-7);
  CHECK(is_stable(scalar_plant(-1), scalar(0.2), 0.5));
  auto again = lmi_min_eigenvalues(scalar_plant(-1), scalar(0.2), 0.5, cert);
  CHECK(again.first == doctest::Approx(cert.phi_min_eig));

  CHECK_NOTHROW(lmi_certificate(scalar_plant(0), scalar(1), 1.4));
  try {
    lmi_certificate(scalar_plant(0), scalar(1), 2.0);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
  }
}

TEST_CASE("LMI sign convention matches the delayed feedback u = -K x(t - tau)") {
  // dx = -x(t - 0.5) is stable; the condition written with A1 = +B K cannot certify it.
  FeasibilityProblem fp;
  const auto vars = LmiVariables::declare(fp, 1);
  const auto terms = LmiTerms::of(vars);
  fp.require_psd(lmi_phi(scalar(0), -scalar(1), 0.5, terms), 1e-6);
  fp.require_psd(lmi_psi(0.5, terms), 1e-6);
  CHECK_THROWS_AS(solve_feasibility(fp), Error);
  CHECK_NOTHROW(lmi_certificate(scalar_plant(0), scalar(1), 0.5));
}

TEST_CASE("LMI certificate is sound") {
  oracle::Rng rng(41);
  int certified = 0;
  for (int t = 0; t < 15; ++t) {
    const int n = rng.integer(1, 3);
    LtiPlant p = oracle::random_plant(rng, n, 1, 1, rng.uniform(-1.0, 0.3));
    const Matrix K = rng.gaussian(1, n);
    const double tau = rng.uniform(0.05, 1.0);
    try {
      const auto c = lmi_certificate(p, K, tau);
      CHECK(is_stable(p, K, tau));
      CHECK(std::min(c.phi_min_eig, c.psi_min_eig) > 0.0);
      ++certified;
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Infeasible);
    }
  }
  CHECK(certified > 0);
}
