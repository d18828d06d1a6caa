#pragma once

#include <utility>
#include <vector>

#include "delayh2/model.hpp"
#include "delayh2/spectral.hpp"

namespace delayh2 {

// Gain entries penalized together by the group variant of the G-step.
struct GainBlock {
  std::vector<std::pair<int, int>> entries;
};

struct KminOptions {
  double gtol_rel = 1e-6;  // stop at ||grad|| <= gtol_rel (1 + J)
  int max_sweeps = 100;
  double armijo = 1e-4;
};

struct KminResult {
  Matrix K;
  double J = 0.0;
  double objective = 0.0;  // J + rho/2 ||K - V||_F^2
  double grad_norm = 0.0;
  int sweeps = 0;
  bool converged = false;
};

// Anderson-Moore iteration for min_K J_tau(K) + rho/2 ||K - V||_F^2 with
// V = G - Lambda / rho. Throws LostStability when no step keeps the loop stable.
KminResult kmin(const LtiPlant& plant, double tau, int N, const Matrix& G, const Matrix& Lambda, double rho,
                const Matrix& K_init, const KminOptions& options = {});

// Entrywise soft-threshold of U = Lambda + rho K at lambda_reg W, divided by rho.
Matrix gmin(const Matrix& K, const Matrix& Lambda, double rho, double lambda_reg, const Matrix& W);
// Group version: each block is shrunk by its Frobenius norm against
// lambda_reg * block_weights[b]; entries outside every block use W.
Matrix gmin(const Matrix& K, const Matrix& Lambda, double rho, double lambda_reg, const Matrix& W,
            const std::vector<GainBlock>& blocks, const Vector& block_weights);

// W_pq = 1 / (|G_pq| + eps1).
Matrix reweight(const Matrix& G, double eps1);
Vector reweight(const Matrix& G, double eps1, const std::vector<GainBlock>& blocks);

struct AdmmState {
  Matrix K, G, Lambda;
  double rho = 1.0;
  Matrix W;
  double lambda_reg = 0.0;
  std::vector<GainBlock> blocks;
  Vector block_weights;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = false;

  // K = G = K0, Lambda = 0, W = 1.
  static AdmmState start(const Matrix& K0, double rho, double lambda_reg);
};

struct AdmmOptions {
  int max_iter = 100;
  double eps_scale = 1e-4;  // eps_pri = eps_dual = eps_scale sqrt(m n)
  KminOptions kmin;
};

// Alternates kmin, gmin and Lambda += rho (K - G). Stops on the primal and dual
// residuals; at the iteration cap the last (stable) iterate is returned with
// converged = false.
AdmmState admm(const LtiPlant& plant, double tau, int N, AdmmState state, const AdmmOptions& options = {});

// Delay update after a change of cardinality. Direct: tau* itself is stable.
// Otherwise the start of the closest stable interval right of tau* is used:
// KnownInterval when that is the interval holding tau_prev, EarlierInterval
// when it lies before it (or when it cannot be located and the known interval
// is used instead). Fixed marks runs with the delay held constant.
enum class SnapCase { Direct, KnownInterval, EarlierInterval, Fixed };

const char* snap_case_name(SnapCase c);  // "4-1", "4-2a", "4-2b", "fixed"

struct DelayUpdate {
  double tau;
  SnapCase snap;
  double tau_star;
};

// tau_max = 0 selects 4 link_delay(m n). Throws NoStableInterval.
DelayUpdate update_tau(const LtiPlant& plant, const Matrix& K_next, double tau_prev, const NetworkModel& net,
                       double tau_max = 0.0);

struct PolishOptions {
  double gtol_rel = 1e-6;
  int max_iter = 50;
  double armijo = 1e-4;
};

struct PolishResult {
  Matrix K;
  double J_before = 0.0;
  double J_after = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Pattern-restricted Newton iteration with Armijo backtracking.
PolishResult polish(const LtiPlant& plant, const Matrix& K, double tau, int N, const SparsityPattern& pattern,
                    const PolishOptions& options = {});

struct SparsifyRecord {
  double lambda;
  int i;  // reweighting step within the stage
  double tau;
  int card;
  int s;
  double J;
  bool stable;
  SnapCase snap;
  double J_before_polish;  // polish that produced this gain (NaN at i = 0)
  double J_after_polish;
};

// Gap check at the end of one lambda stage. bound = kappa (Card K0 - Card K_f) / c_f
// - epsilon r_max with epsilon = max_i (tau*_{i+1} - tau_{i+1}).
struct StageSummary {
  double lambda;
  Matrix K_f;
  double tau_f;
  double tau_star_f;
  double J_f;
  int card_f;
  bool had_right_snap;   // a 4-2 update occurred
  double epsilon;
  bool epsilon_nonpositive;  // the sign anomaly: epsilon <= 0 makes -epsilon r_max a slack
  double gap;
  double bound;
  bool bound_holds;
  bool rolled_back;
};

struct SparsifyTrace {
  std::vector<SparsifyRecord> records;
  std::vector<StageSummary> stages;
};

struct SparsifyOptions {
  std::vector<double> lambdas;  // empty: default_lambda_schedule
  int r_max = 5;
  double eps1 = 1e-4;
  double rho_factor = 100.0;  // rho = rho_factor * lambda
  double rho_floor = 1.0;     // rho used when lambda = 0
  bool couple_delay = true;   // false keeps tau fixed at tau'
  int N = 0;                  // 0: select_grid_size at tau'
  AdmmOptions admm;
  PolishOptions polish;
  std::vector<GainBlock> blocks;
};

// count values log-spaced over [1e-4, 1e1] * J_dense / (m n).
std::vector<double> default_lambda_schedule(double J_dense, int m, int n, int count = 20);

SparsifyTrace sparsify_run(const LtiPlant& plant, const NetworkModel& net, const Matrix& K_prime, double tau_prime,
                           const SparsifyOptions& options = {});

}  // namespace delayh2
