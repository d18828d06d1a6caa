#pragma once

#include <limits>
#include <vector>

#include "delayh2/model.hpp"

namespace delayh2 {

// Spectral-abscissa test of the discretized loop. N = 0 selects the grid
// automatically: start at 16 and double (up to 128) until the sign of the
// abscissa is unambiguous and its value has settled.
bool is_stable(const LtiPlant& plant, const Matrix& K, double tau, int N = 0);

// Rightmost real part used by is_stable at the chosen grid size.
double delayed_abscissa(const LtiPlant& plant, const Matrix& K, double tau, int N = 0);

struct Crossing {
  double omega;  // rad/s, > 0
  double theta;  // in [0, 2 pi)
  double nu;     // theta / omega, smallest delay producing the crossing
};

struct CrossingSet {
  std::vector<Crossing> crossings;  // sorted by nu
  bool degenerate = false;          // two nu values within 1e-8 of each other

  int count() const { return static_cast<int>(crossings.size()); }
};

// Frequency sweep of A - B K e^{-j theta} over theta in [0, 2 pi).
CrossingSet zero_crossings(const LtiPlant& plant, const Matrix& K, int theta_grid_size = 2048);

// Smallest nu over the crossing set, +inf if none. Requires A - B K Hurwitz.
double delay_margin(const LtiPlant& plant, const Matrix& K, int theta_grid_size = 2048);

// Independent margin estimate: stability of the loop with e^{-s tau} replaced
// by its diagonal Pade approximant of the given order, scanned over
// (0, tau_max] and refined by bisection. Returns +inf if no loss is found.
double pade_margin(const LtiPlant& plant, const Matrix& K, double tau_max, int order = 8);

// State matrix of the Pade-approximated loop at delay tau.
Matrix pade_closed_loop(const LtiPlant& plant, const Matrix& K, double tau, int order = 8);

struct DelayInterval {
  double lo;
  double hi;
};

struct StableIntervals {
  std::vector<DelayInterval> intervals;
  std::vector<double> boundaries;  // all crossing delays in (0, tau_max), ascending

  bool contains(double tau) const;
};

// Partitions [0, tau_max] at every crossing delay nu + 2 pi k / omega and keeps
// the cells whose midpoint passes is_stable.
StableIntervals stable_intervals(const LtiPlant& plant, const Matrix& K, double tau_max,
                                 int theta_grid_size = 2048);

}  // namespace delayh2
