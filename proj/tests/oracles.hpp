#pragma once

// Independent reference computations used to check the library.

#include <complex>
#include <functional>
#include <random>
#include <vector>

#include "delayh2/allocate.hpp"
#include "delayh2/model.hpp"

namespace oracle {

using delayh2::LtiPlant;
using delayh2::Matrix;
using delayh2::Vector;

// Solves M X + X M^T = -W through the Kronecker-vectorized linear system.
Matrix kron_lyapunov(const Matrix& M, const Matrix& W);

// Delay-free H2 cost Trace(Bw^T P Bw) with Acl^T P + P Acl = -(Q + K^T R K).
double delay_free_h2(const LtiPlant& plant, const Matrix& K);

// Stabilizing CARE solution from the stable invariant subspace of the Hamiltonian.
Matrix care(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R);

// Principal branch of the Lambert W function.
std::complex<double> lambert_w0(std::complex<double> z);

// Rightmost root of lambda + a + b exp(-tau lambda) = 0 (tau > 0, b != 0).
std::complex<double> scalar_rightmost_root(double a, double b, double tau);

// Central finite-difference gradient of f at K.
Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& K, double h);

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(uint64_t seed) : gen(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
  Matrix gaussian(int r, int c) {
    Matrix M(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) M(i, j) = normal();
    return M;
  }
};

// Random plant with spectral abscissa of A equal to `shift` (negative for stable).
LtiPlant random_plant(Rng& rng, int n, int m, int p, double shift);

// Curves with ratio 1 + a (s - s_min)^2 on random integer breakpoints, up to
// p_max levels each, entries set to the last breakpoint.
std::vector<delayh2::PerfCurve> random_curves(Rng& rng, int N, int p_max);

// Two users sharing 111 links (100 entries each, so 89 zeros). User 1 has
// ratio 1 at 80 links and 1.05 at 53; user 2 has 1.45 at 31 and about 1.05
// at 58.
// Breakpoints every `step` zeros plus the four named levels.
std::vector<delayh2::PerfCurve> shared_link_curves(int step);

// Value of the modified curve at an integer level: the ratio on a breakpoint,
// the spike plateau user * D elsewhere.
delayh2::Rational modified_at_integer(const delayh2::PerfCurve& c, const delayh2::Rational& D, int s);

// Variance bound with the concave part linearized at r_prev, from scratch.
double linearized_objective(const std::vector<double>& r, const std::vector<double>& r_prev, double sigma);

}  // namespace oracle
