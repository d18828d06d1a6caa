#include "delayh2/stability.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "delayh2/spectral.hpp"

namespace delayh2 {

namespace {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double abscissa_at(const LtiPlant& plant, const Matrix& K, double tau, int N) {
  if (tau == 0.0) return spectral_abscissa(plant.A() - plant.B() * K);
  return spectral_abscissa(build_augmented(plant, K, tau, N).Acal);
}

CVector sweep_eigenvalues(const Matrix& A, const Matrix& BK, double theta) {
  const CMatrix M = A.cast<Complex>() - BK.cast<Complex>() * std::polar(1.0, -theta);
  Eigen::ComplexEigenSolver<CMatrix> es(M, false);
  return es.eigenvalues();
}

// Reorders `next` so that next[i] continues the branch prev[i].
CVector match_branches(const CVector& prev, const CVector& next) {
  const Eigen::Index n = prev.size();
  CVector out(n);
  std::vector<bool> used(n, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = -1;
    double dist = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (used[j]) continue;
      const double d = std::abs(next(j) - prev(i));
      if (best < 0 || d < dist) {
        best = j;
        dist = d;
      }
    }
    used[best] = true;
    out(i) = next(best);
  }
  return out;
}

Complex nearest(const CVector& v, Complex target) {
  Eigen::Index idx = 0;
  (v.array() - target).abs().minCoeff(&idx);
  return v(idx);
}

// Diagonal Pade approximant of exp(-x): N(x)/D(x) with D(x) = sum c_k x^k.
std::vector<double> pade_coefficients(int m) {
  std::vector<double> c(m + 1);
  c[0] = 1.0;
  for (int k = 1; k <= m; ++k) c[k] = c[k - 1] * (m - k + 1) / (static_cast<double>(k) * (2 * m - k + 1));
  return c;
}

}  // namespace

double delayed_abscissa(const LtiPlant& plant, const Matrix& K, double tau, int N) {
  check_gain_shape(plant, K);
  if (tau < 0.0) fail(ErrorCode::InvalidArgument, "delay must be nonnegative");
  if (tau == 0.0 || N > 0) return abscissa_at(plant, K, tau, N);
  int grid = 16;
  double alpha = abscissa_at(plant, K, tau, grid);
  while (grid < 128) {
    const double next = abscissa_at(plant, K, tau, 2 * grid);
    grid *= 2;
    const double diff = std::abs(next - alpha);
    const bool same_sign = (next < -kHurwitzTol) == (alpha < -kHurwitzTol);
    alpha = next;
    if (same_sign && (diff <= 1e-6 * (1.0 + std::abs(next)) || std::abs(next) > 10.0 * diff)) break;
  }
  return alpha;
}

bool is_stable(const LtiPlant& plant, const Matrix& K, double tau, int N) {
  return delayed_abscissa(plant, K, tau, N) < -kHurwitzTol;
}

CrossingSet zero_crossings(const LtiPlant& plant, const Matrix& K, int theta_grid_size) {
  check_gain_shape(plant, K);
  if (theta_grid_size < 8) fail(ErrorCode::InvalidArgument, "theta grid too coarse");
  const Matrix& A = plant.A();
  const Matrix BK = plant.B() * K;
  CrossingSet out;
  if (BK.norm() == 0.0) return out;

  const double h = kTwoPi / theta_grid_size;
  CVector prev = sweep_eigenvalues(A, BK, 0.0);
  for (int k = 1; k <= theta_grid_size; ++k) {
    const double t0 = (k - 1) * h, t1 = k * h;
    const CVector cur = match_branches(prev, sweep_eigenvalues(A, BK, t1));
    for (Eigen::Index b = 0; b < prev.size(); ++b) {
      Complex lo = prev(b), hi = cur(b);
      if ((lo.real() < 0.0) == (hi.real() < 0.0)) continue;
      double a = t0, c = t1;
      Complex mid = lo;
      for (int it = 0; it < 200; ++it) {
        const double t = 0.5 * (a + c);
        const double w = (lo.real() == hi.real()) ? 0.5 : lo.real() / (lo.real() - hi.real());
        mid = nearest(sweep_eigenvalues(A, BK, t), lo + w * (hi - lo));
        if (std::abs(mid.real()) < 1e-12 || c - a < 1e-15) {
          a = c = t;
          break;
        }
        if ((mid.real() < 0.0) == (lo.real() < 0.0)) {
          a = t;
          lo = mid;
        } else {
          c = t;
          hi = mid;
        }
      }
      const double omega = mid.imag();
      if (omega <= 1e-12) continue;
      double theta = std::fmod(0.5 * (a + c), kTwoPi);
      if (theta < 0.0) theta += kTwoPi;
      out.crossings.push_back({omega, theta, theta / omega});
    }
    prev = cur;
  }
  std::sort(out.crossings.begin(), out.crossings.end(),
            [](const Crossing& x, const Crossing& y) { return x.nu < y.nu; });
  std::vector<Crossing> unique;
  for (const auto& c : out.crossings) {
    if (!unique.empty() && std::abs(unique.back().omega - c.omega) < 1e-9 &&
        std::abs(unique.back().theta - c.theta) < 1e-9)
      continue;
    unique.push_back(c);
  }
  out.crossings = std::move(unique);
  for (std::size_t i = 1; i < out.crossings.size(); ++i)
    if (out.crossings[i].nu - out.crossings[i - 1].nu < 1e-8) out.degenerate = true;
  return out;
}

double delay_margin(const LtiPlant& plant, const Matrix& K, int theta_grid_size) {
  if (!closed_loop_delay_free(plant, K).second)
    fail(ErrorCode::NotDelayFreeStable, "A - B K is not Hurwitz; the delay margin is undefined");
  const CrossingSet set = zero_crossings(plant, K, theta_grid_size);
  if (set.crossings.empty()) return std::numeric_limits<double>::infinity();
  return set.crossings.front().nu;
}

Matrix pade_closed_loop(const LtiPlant& plant, const Matrix& K, double tau, int order) {
  check_gain_shape(plant, K);
  if (!(tau > 0.0)) fail(ErrorCode::InvalidArgument, "Pade loop needs a positive delay");
  if (order < 1) fail(ErrorCode::InvalidArgument, "Pade order must be positive");
  const int m = order, n = plant.n();
  const std::vector<double> c = pade_coefficients(m);
  // Substitute x = rho y so that the constant and leading coefficients match.
  const double rho = std::pow(c[0] / c[m], 1.0 / m);
  Vector d(m), num(m);
  const double sign_m = (m % 2) ? -1.0 : 1.0;
  for (int k = 0; k < m; ++k) {
    const double scaled = c[k] * std::pow(rho, k) / (c[m] * std::pow(rho, m));
    d(k) = scaled;
    const double nk = ((k % 2) ? -1.0 : 1.0) * scaled;
    num(k) = nk - sign_m * scaled;
  }
  // Controllable canonical realization in y, then x = tau s = rho y.
  Matrix Ad = Matrix::Zero(m, m);
  Ad.topRightCorner(m - 1, m - 1).setIdentity();
  Ad.row(m - 1) = -d.transpose();
  Vector Bd = Vector::Zero(m);
  Bd(m - 1) = 1.0;
  const double scale = rho / tau;

  const Matrix I = Matrix::Identity(n, n);
  const Matrix BK = plant.B() * K;
  Matrix M = Matrix::Zero(n + m * n, n + m * n);
  M.topLeftCorner(n, n) = plant.A() - sign_m * BK;
  for (int k = 0; k < m; ++k) {
    M.block(0, n + k * n, n, n) = -num(k) * BK;
    M.block(n + k * n, 0, n, n) = (scale * Bd(k)) * I;
    for (int l = 0; l < m; ++l)
      if (Ad(k, l) != 0.0) M.block(n + k * n, n + l * n, n, n) = (scale * Ad(k, l)) * I;
  }
  return M;
}

double pade_margin(const LtiPlant& plant, const Matrix& K, double tau_max, int order) {
  if (!(tau_max > 0.0)) fail(ErrorCode::InvalidArgument, "tau_max must be positive");
  if (!closed_loop_delay_free(plant, K).second)
    fail(ErrorCode::NotDelayFreeStable, "A - B K is not Hurwitz; the delay margin is undefined");
  auto stable = [&](double tau) { return spectral_abscissa(pade_closed_loop(plant, K, tau, order)) < 0.0; };
  const int samples = 400;
  double last_stable = 0.0;
  for (int i = 1; i <= samples; ++i) {
    const double tau = tau_max * i / samples;
    if (stable(tau)) {
      last_stable = tau;
      continue;
    }
    double lo = last_stable, hi = tau;
    while (hi - lo > 1e-12 * (1.0 + hi)) {
      const double mid = 0.5 * (lo + hi);
      (mid > 0.0 && stable(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
  return std::numeric_limits<double>::infinity();
}

bool StableIntervals::contains(double tau) const {
  return std::any_of(intervals.begin(), intervals.end(),
                     [tau](const DelayInterval& I) { return I.lo <= tau && tau <= I.hi; });
}

StableIntervals stable_intervals(const LtiPlant& plant, const Matrix& K, double tau_max, int theta_grid_size) {
  if (!(tau_max > 0.0)) fail(ErrorCode::InvalidArgument, "tau_max must be positive");
  StableIntervals out;
  const CrossingSet set = zero_crossings(plant, K, theta_grid_size);
  for (const auto& c : set.crossings)
    for (double nu = c.nu; nu < tau_max; nu += kTwoPi / c.omega)
      if (nu > 0.0) out.boundaries.push_back(nu);
  std::sort(out.boundaries.begin(), out.boundaries.end());
  out.boundaries.erase(std::unique(out.boundaries.begin(), out.boundaries.end(),
                                   [](double a, double b) { return b - a < 1e-12 * (1.0 + b); }),
                       out.boundaries.end());

  std::vector<double> edges{0.0};
  edges.insert(edges.end(), out.boundaries.begin(), out.boundaries.end());
  edges.push_back(tau_max);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double lo = edges[i], hi = edges[i + 1];
    if (!(hi > lo)) continue;
    if (!is_stable(plant, K, 0.5 * (lo + hi))) continue;
    if (!out.intervals.empty() && out.intervals.back().hi == lo)
      out.intervals.back().hi = hi;
    else
      out.intervals.push_back({lo, hi});
  }
  return out;
}

}  // namespace delayh2
