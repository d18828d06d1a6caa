#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <optional>
#include <vector>

#include "delayh2/model.hpp"
#include "delayh2/sparsify.hpp"

namespace delayh2 {

using Rational = boost::multiprecision::cpp_rational;

// Performance ratio of one user against its sparsity level, affine between
// consecutive breakpoints.
struct PerfCurve {
  int user = 1;            // 1-based label, also the spike multiplier of the modified curve
  std::vector<int> s;      // strictly increasing breakpoints
  std::vector<double> r;   // ratios at the breakpoints, min exactly 1
  double J_nominal = 1.0;  // cost at the ratio-1 breakpoint
  int entries = 0;         // m n of the user's gain, 0 when unknown

  // r = J / min J. Throws InvalidArgument on fewer than two levels.
  static PerfCurve from_costs(int user, std::vector<int> s, const std::vector<double>& J);

  int p() const { return static_cast<int>(s.size()); }
  double slope(int j) const;      // piece j on [s_j, s_{j+1}], 0-based
  double intercept(int j) const;
  double evaluate(double x) const;
  // Index of breakpoint x, or -1.
  int find(int x) const;
  void validate() const;
};

// Runs the sparsifier over a lambda schedule and keeps the least cost per
// sparsity level.
PerfCurve build_curve(int user, const LtiPlant& plant, const NetworkModel& net, const Matrix& K_prime,
                      double tau_prime, const SparsifyOptions& options = {});

struct VarianceObjective {
  double H;  // f - g
  double F;  // f - g + sigma h
  double f, g, h;
};

VarianceObjective variance_objective(const std::vector<double>& r, double sigma);

// Curve with spikes of height user * D at every breakpoint +- eps. Knots and
// values are kept as exact rationals of the double inputs.
struct ModifiedCurve {
  PerfCurve base;
  Rational eps;
  Rational D;
  std::vector<Rational> knots;
  std::vector<Rational> values;

  int pieces() const { return static_cast<int>(knots.size()) - 1; }
  Rational slope(int k) const;
  Rational intercept(int k) const;
  Rational evaluate(const Rational& x) const;
  double evaluate(double x) const;
};

struct ModifiedCurves {
  std::vector<ModifiedCurve> curves;
  double eps_requested;  // 0.5 min(sigma, 1/N)
  double eps;            // after shrinking to 0.25 of the smallest gap
  bool eps_shrunk;
  double D;
};

ModifiedCurves modify_curves(const std::vector<PerfCurve>& curves, double sigma);

// One linear row sum_k coef_k v_k <= rhs.
struct MilpRow {
  std::vector<std::pair<int, Rational>> terms;
  Rational rhs;
};

// Big-M description of a piecewise affine curve over knots b_0 < ... < b_{P-1}.
// Variables v = [zt, z_1..z_{P-2}, s, delta_1..delta_{P-2}] with
// delta_j = 1 iff s >= b_j.
struct MilpEncoding {
  int P = 0;
  Rational d_max, d_min;
  Rational strict;  // surrogate for the strict inequality s < b_j
  std::vector<Rational> t;  // big-M bound of each z row
  std::vector<MilpRow> rows;

  int binaries() const { return P - 2; }
  int num_vars() const { return 2 * P - 2; }
  int zt() const { return 0; }
  int z(int j) const { return j; }  // 1..P-2
  int s() const { return P - 1; }
  int delta(int j) const { return P - 1 + j; }  // 1..P-2

  struct Decoded {
    std::vector<int> delta;
    Rational zt;
  };
  // All integral delta vectors admitted at s together with the value of zt
  // the rows pin down. Throws NumericalFailure when a z variable is not pinned.
  std::vector<Decoded> decode(const Rational& s) const;
};

// Rows of the encoding for the knots and values given.
MilpEncoding encode_milp(const std::vector<Rational>& knots, const std::vector<Rational>& values,
                         const Rational& strict);
// Uses the modified knots and strict = eps / 4.
MilpEncoding encode_milp(const ModifiedCurve& curve);
// Unmodified breakpoints on the integer lattice, strict = 1/2.
MilpEncoding encode_milp(const PerfCurve& curve);

struct CcpOptions {
  long long max_nodes = 2000000;
};

struct CcpStep {
  std::vector<int> s;
  double F_hat;  // convex upper bound at s around the previous iterate
};

// Mixed-integer convex QP around s_prev solved by best-first branch and bound
// on the binaries. Node bounds come from the Lagrangian dual of the sum
// constraint. Throws MiqpInfeasible when frak_s is not attainable.
CcpStep ccp_step(const ModifiedCurves& modified, const std::vector<int>& s_prev, int frak_s, double sigma,
                 const CcpOptions& options = {});

struct AllocationIterate {
  std::vector<int> s;
  double F;
  double F_hat;  // bound from the step that produced s (F at the start)
  double delta;  // closed form of F_hat - F
};

struct AllocationResult {
  std::vector<int> s_star;
  double F_star;
  std::vector<double> ratios;
  std::vector<AllocationIterate> history;  // history[0] is the start
  int steps;
  double eps;
  bool eps_shrunk;
};

// Largest-remainder split of frak_s in proportion to weights (default: each
// curve's entries, else its last breakpoint), moved to the breakpoint vector
// with the same sum nearest in the Euclidean norm.
std::vector<int> initial_allocation(const std::vector<PerfCurve>& curves, int frak_s,
                                    std::vector<double> weights = {});

AllocationResult allocate(const std::vector<PerfCurve>& curves, int frak_s, std::optional<std::vector<int>> s0 = {},
                          double sigma = 1e-2, int max_steps = 20, const CcpOptions& options = {});

struct RankedAllocation {
  std::vector<int> s;
  double F;
};

// Every breakpoint vector summing to frak_s, by increasing F.
std::vector<RankedAllocation> enumerate_oracle(const std::vector<PerfCurve>& curves, int frak_s, double sigma,
                                               long long cap = 10000000);

}  // namespace delayh2
