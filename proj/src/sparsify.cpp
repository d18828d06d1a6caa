#include "delayh2/sparsify.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <optional>

#include "delayh2/stability.hpp"

namespace delayh2 {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<H2Evaluation> try_eval(const LtiPlant& plant, const Matrix& K, double tau, int N) {
  try {
    return H2Evaluation(plant, K, tau, N);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Unstable) return std::nullopt;
    throw;
  }
}

double inner(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

Matrix masked(const Matrix& M, const Mask& mask) { return mask.select(M, Matrix::Zero(M.rows(), M.cols())); }

// First point inside (lo, hi) next to lo that passes is_stable.
std::optional<double> inside_from_left(const LtiPlant& plant, const Matrix& K, double lo, double hi) {
  for (double d = 1e-8; d < 0.5 * (hi - lo); d *= 10.0)
    if (is_stable(plant, K, lo + d)) return lo + d;
  const double mid = 0.5 * (lo + hi);
  if (is_stable(plant, K, mid)) return mid;
  return std::nullopt;
}

}  // namespace

KminResult kmin(const LtiPlant& plant, double tau, int N, const Matrix& G, const Matrix& Lambda, double rho,
                const Matrix& K_init, const KminOptions& options) {
  check_gain_shape(plant, K_init);
  if (!(rho >= 0.0)) fail(ErrorCode::InvalidArgument, "rho must be nonnegative");
  const int n = plant.n();
  const Matrix V = rho > 0.0 ? Matrix(G - Lambda / rho) : Matrix(G);
  auto objective = [&](const H2Evaluation& e, const Matrix& K) { return e.J() + 0.5 * rho * (K - V).squaredNorm(); };

  Eigen::SelfAdjointEigenSolver<Matrix> eig_R(plant.R());
  const Matrix& U = eig_R.eigenvectors();
  const Vector& r = eig_R.eigenvalues();

  std::optional<H2Evaluation> eval = try_eval(plant, K_init, tau, N);
  if (!eval) fail(ErrorCode::LostStability, "kmin needs a stabilizing initial gain");
  KminResult out;
  out.K = K_init;
  double phi = objective(*eval, out.K);
  for (int sweep = 0;; ++sweep) {
    const Matrix grad = eval->gradient() + rho * (out.K - V);
    out.grad_norm = grad.norm();
    out.J = eval->J();
    out.objective = phi;
    out.sweeps = sweep;
    if (out.grad_norm <= options.gtol_rel * (1.0 + out.J)) {
      out.converged = true;
      break;
    }
    if (sweep >= options.max_sweeps) break;

    // Optimality condition with L and P frozen: rho K + 2 R K Lnn = 2 B^T X + rho V.
    const Eigen::Index last = static_cast<Eigen::Index>(N - 1) * n;
    const Matrix Lnn = eval->L().block(last, last, n, n);
    const Matrix X = eval->P().middleRows(last, n) * eval->L().leftCols(n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig_L(0.5 * (Lnn + Lnn.transpose()));
    const Matrix& Wl = eig_L.eigenvectors();
    const Vector& l = eig_L.eigenvalues();
    Matrix Kh = U.transpose() * (2.0 * plant.B().transpose() * X + rho * V) * Wl;
    bool solvable = true;
    for (Eigen::Index j = 0; j < Kh.cols(); ++j)
      for (Eigen::Index i = 0; i < Kh.rows(); ++i) {
        const double den = rho + 2.0 * r(i) * l(j);
        if (den <= 1e-14 * (1.0 + rho)) solvable = false;
        else Kh(i, j) /= den;
      }
    Matrix D = solvable ? Matrix(U * Kh * Wl.transpose() - out.K) : Matrix(-grad);
    double slope = inner(grad, D);
    if (!(slope < 0.0)) {
      D = -grad;
      slope = -out.grad_norm * out.grad_norm;
    }

    bool accepted = false, any_stable = false;
    for (double s = 1.0; s > 1e-12; s *= 0.5) {
      const Matrix Kt = out.K + s * D;
      auto trial = try_eval(plant, Kt, tau, N);
      if (!trial) continue;
      any_stable = true;
      const double phit = objective(*trial, Kt);
      if (phit <= phi + options.armijo * s * slope) {
        out.K = Kt;
        phi = phit;
        eval = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (any_stable) break;  // no decrease above roundoff
      fail(ErrorCode::LostStability, "kmin line search found no stabilizing step");
    }
  }
  return out;
}

Matrix gmin(const Matrix& K, const Matrix& Lambda, double rho, double lambda_reg, const Matrix& W) {
  if (!(rho > 0.0)) fail(ErrorCode::InvalidArgument, "rho must be positive");
  if (K.rows() != Lambda.rows() || K.cols() != Lambda.cols() || K.rows() != W.rows() || K.cols() != W.cols())
    fail(ErrorCode::DimensionMismatch, "gmin operands differ in shape");
  const Matrix U = Lambda + rho * K;
  Matrix G = Matrix::Zero(K.rows(), K.cols());
  for (Eigen::Index j = 0; j < K.cols(); ++j)
    for (Eigen::Index i = 0; i < K.rows(); ++i) {
      const double u = U(i, j), thr = lambda_reg * W(i, j);
      if (std::abs(u) > thr) G(i, j) = (1.0 - thr / std::abs(u)) * u / rho;
    }
  return G;
}

Matrix gmin(const Matrix& K, const Matrix& Lambda, double rho, double lambda_reg, const Matrix& W,
            const std::vector<GainBlock>& blocks, const Vector& block_weights) {
  if (static_cast<Eigen::Index>(blocks.size()) != block_weights.size())
    fail(ErrorCode::DimensionMismatch, "one weight per block expected");
  Matrix G = gmin(K, Lambda, rho, lambda_reg, W);
  const Matrix U = Lambda + rho * K;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    double norm2 = 0.0;
    for (auto [i, j] : blocks[b].entries) {
      if (i < 0 || j < 0 || i >= K.rows() || j >= K.cols()) fail(ErrorCode::InvalidArgument, "block entry out of range");
      norm2 += U(i, j) * U(i, j);
    }
    const double norm = std::sqrt(norm2), thr = lambda_reg * block_weights(b);
    const double shrink = norm > thr ? (1.0 - thr / norm) / rho : 0.0;
    for (auto [i, j] : blocks[b].entries) G(i, j) = shrink * U(i, j);
  }
  return G;
}

Matrix reweight(const Matrix& G, double eps1) {
  if (!(eps1 > 0.0)) fail(ErrorCode::InvalidArgument, "eps1 must be positive");
  return (G.cwiseAbs().array() + eps1).inverse().matrix();
}

Vector reweight(const Matrix& G, double eps1, const std::vector<GainBlock>& blocks) {
  if (!(eps1 > 0.0)) fail(ErrorCode::InvalidArgument, "eps1 must be positive");
  Vector w(static_cast<Eigen::Index>(blocks.size()));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    double norm2 = 0.0;
    for (auto [i, j] : blocks[b].entries) norm2 += G(i, j) * G(i, j);
    w(static_cast<Eigen::Index>(b)) = 1.0 / (std::sqrt(norm2) + eps1);
  }
  return w;
}

AdmmState AdmmState::start(const Matrix& K0, double rho, double lambda_reg) {
  AdmmState s;
  s.K = K0;
  s.G = K0;
  s.Lambda = Matrix::Zero(K0.rows(), K0.cols());
  s.rho = rho;
  s.W = Matrix::Ones(K0.rows(), K0.cols());
  s.lambda_reg = lambda_reg;
  return s;
}

AdmmState admm(const LtiPlant& plant, double tau, int N, AdmmState st, const AdmmOptions& options) {
  check_gain_shape(plant, st.K);
  if (!(st.rho > 0.0)) fail(ErrorCode::InvalidArgument, "rho must be positive");
  if (st.block_weights.size() == 0 && !st.blocks.empty()) st.block_weights = Vector::Ones(st.blocks.size());
  const double eps = options.eps_scale * std::sqrt(static_cast<double>(st.K.size()));
  st.converged = false;
  for (st.iterations = 0; st.iterations < options.max_iter;) {
    st.K = kmin(plant, tau, N, st.G, st.Lambda, st.rho, st.K, options.kmin).K;
    const Matrix G = st.blocks.empty() ? gmin(st.K, st.Lambda, st.rho, st.lambda_reg, st.W)
                                       : gmin(st.K, st.Lambda, st.rho, st.lambda_reg, st.W, st.blocks, st.block_weights);
    st.Lambda += st.rho * (st.K - G);
    st.primal_residual = (st.K - G).norm();
    st.dual_residual = st.rho * (G - st.G).norm();
    st.G = G;
    ++st.iterations;
    if (st.primal_residual <= eps && st.dual_residual <= eps) {
      st.converged = true;
      break;
    }
  }
  return st;
}

const char* snap_case_name(SnapCase c) {
  switch (c) {
    case SnapCase::Direct:
      return "4-1";
    case SnapCase::KnownInterval:
      return "4-2a";
    case SnapCase::EarlierInterval:
      return "4-2b";
    case SnapCase::Fixed:
      return "fixed";
  }
  return "?";
}

DelayUpdate update_tau(const LtiPlant& plant, const Matrix& K_next, double tau_prev, const NetworkModel& net,
                       double tau_max) {
  check_gain_shape(plant, K_next);
  const double tau_star = link_delay(cardinality(K_next), net);
  if (is_stable(plant, K_next, tau_star)) return {tau_star, SnapCase::Direct, tau_star};

  if (!(tau_max > 0.0)) tau_max = 4.0 * link_delay(plant.m() * plant.n(), net);
  tau_max = std::max(tau_max, 2.0 * std::max(tau_prev, tau_star));
  const StableIntervals si = stable_intervals(plant, K_next, tau_max);
  const DelayInterval* known = nullptr;
  for (const auto& iv : si.intervals)
    if (iv.lo <= tau_prev && tau_prev <= iv.hi) known = &iv;
  for (const auto& iv : si.intervals) {
    if (!(iv.lo > tau_star)) continue;
    if (auto t = inside_from_left(plant, K_next, iv.lo, iv.hi))
      return {*t, &iv == known ? SnapCase::KnownInterval : SnapCase::EarlierInterval, tau_star};
  }
  // The nearer interval could not be located: fall back to the known one.
  if (known && known->lo > tau_star)
    if (auto t = inside_from_left(plant, K_next, known->lo, known->hi)) return {*t, SnapCase::EarlierInterval, tau_star};
  if (tau_prev > tau_star && is_stable(plant, K_next, tau_prev)) return {tau_prev, SnapCase::EarlierInterval, tau_star};
  fail(ErrorCode::NoStableInterval, "no stable delay at or beyond the link delay");
}

PolishResult polish(const LtiPlant& plant, const Matrix& K, double tau, int N, const SparsityPattern& pattern,
                    const PolishOptions& options) {
  check_gain_shape(plant, K);
  if (pattern.mask().rows() != K.rows() || pattern.mask().cols() != K.cols())
    fail(ErrorCode::DimensionMismatch, "pattern shape differs from the gain");
  PolishResult out;
  out.K = masked(K, pattern.mask());
  std::optional<H2Evaluation> eval = try_eval(plant, out.K, tau, N);
  if (!eval) fail(ErrorCode::LostStability, "polish needs a stabilizing gain");
  out.J_before = out.J_after = eval->J();
  for (out.iterations = 0; out.iterations < options.max_iter; ++out.iterations) {
    const Matrix g = masked(eval->gradient(), pattern.mask());
    const double gnorm = g.norm();
    if (gnorm <= options.gtol_rel * (1.0 + out.J_after)) {
      out.converged = true;
      break;
    }
    Matrix d = newton_direction(*eval, pattern).direction;
    double slope = inner(g, d);
    if (!(slope < 0.0)) {
      d = -g;
      slope = -gnorm * gnorm;
    }
    bool accepted = false;
    for (double s = 1.0; s > 1e-12; s *= 0.5) {
      const Matrix Kt = out.K + s * d;
      auto trial = try_eval(plant, Kt, tau, N);
      if (!trial || !(trial->J() <= out.J_after + options.armijo * s * slope)) continue;
      out.K = Kt;
      out.J_after = trial->J();
      eval = std::move(trial);
      accepted = true;
      break;
    }
    if (!accepted) break;
  }
  return out;
}

std::vector<double> default_lambda_schedule(double J_dense, int m, int n, int count) {
  if (count < 1) fail(ErrorCode::InvalidArgument, "schedule needs at least one value");
  const double unit = J_dense / (m * n);
  std::vector<double> out;
  for (int k = 0; k < count; ++k) {
    const double e = count == 1 ? -4.0 : -4.0 + 5.0 * k / (count - 1);
    out.push_back(unit * std::pow(10.0, e));
  }
  return out;
}

SparsifyTrace sparsify_run(const LtiPlant& plant, const NetworkModel& net, const Matrix& K_prime, double tau_prime,
                           const SparsifyOptions& opt) {
  check_gain_shape(plant, K_prime);
  if (opt.r_max < 1) fail(ErrorCode::InvalidArgument, "r_max must be positive");
  if (!is_stable(plant, K_prime, tau_prime)) fail(ErrorCode::LostStability, "initial pair is not stabilizing");
  const int N = opt.N > 0 ? opt.N : select_grid_size(plant, K_prime, tau_prime);
  const std::vector<double> lambdas =
      opt.lambdas.empty() ? default_lambda_schedule(h2_norm(plant, K_prime, tau_prime, N), plant.m(), plant.n())
                          : opt.lambdas;
  const int card0 = cardinality(K_prime);

  SparsifyTrace trace;
  for (double lambda : lambdas) {
    if (!(lambda >= 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be nonnegative");
    const double rho = lambda > 0.0 ? opt.rho_factor * lambda : opt.rho_floor;
    auto next_delay = [&](const Matrix& K, double tau_prev) {
      return opt.couple_delay ? update_tau(plant, K, tau_prev, net)
                              : DelayUpdate{tau_prime, SnapCase::Fixed, link_delay(cardinality(K), net)};
    };
    auto record = [&](int i, const Matrix& K, const DelayUpdate& u, double jb, double ja) {
      const int card = cardinality(K);
      auto e = try_eval(plant, K, u.tau, N);
      trace.records.push_back({lambda, i, u.tau, card, static_cast<int>(K.size()) - card, e ? e->J() : kNaN,
                               is_stable(plant, K, u.tau), u.snap, jb, ja});
    };

    Matrix K = K_prime;
    DelayUpdate upd = next_delay(K, tau_prime);
    record(0, K, upd, kNaN, kNaN);
    SparsityPattern pattern = SparsityPattern::of(K, default_zero_tol(K));
    Matrix W = Matrix::Ones(K.rows(), K.cols());
    Vector bw = Vector::Ones(static_cast<Eigen::Index>(opt.blocks.size()));
    double epsilon = -std::numeric_limits<double>::infinity();
    bool right_snap = upd.snap == SnapCase::KnownInterval || upd.snap == SnapCase::EarlierInterval;
    bool rolled_back = false;

    for (int i = 0; i < opt.r_max; ++i) {
      try {
        AdmmState st = AdmmState::start(K, rho, lambda);
        st.W = W;
        st.blocks = opt.blocks;
        st.block_weights = bw;
        st = admm(plant, upd.tau, N, st, opt.admm);
        // Hard threshold to the support of G, never reviving pruned entries.
        const Mask mask = (pattern.mask().array() && (st.G.array() != 0.0)).matrix();
        const SparsityPattern next_pattern(mask);
        const PolishResult pol = polish(plant, masked(st.K, mask), upd.tau, N, next_pattern, opt.polish);
        const DelayUpdate nu = next_delay(pol.K, upd.tau);
        W = reweight(st.G, opt.eps1);
        if (!opt.blocks.empty()) bw = reweight(st.G, opt.eps1, opt.blocks);
        K = pol.K;
        pattern = SparsityPattern(
            (SparsityPattern::of(K, default_zero_tol(K)).mask().array() && mask.array()).matrix());
        upd = nu;
        if (opt.couple_delay) epsilon = std::max(epsilon, upd.tau_star - upd.tau);
        right_snap = right_snap || upd.snap == SnapCase::KnownInterval || upd.snap == SnapCase::EarlierInterval;
        record(i + 1, K, upd, pol.J_before, pol.J_after);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::LostStability && e.code() != ErrorCode::Unstable &&
            e.code() != ErrorCode::NoStableInterval)
          throw;
        rolled_back = true;
        break;
      }
    }

    StageSummary sum;
    sum.lambda = lambda;
    sum.K_f = K;
    sum.tau_f = upd.tau;
    sum.card_f = cardinality(K);
    sum.tau_star_f = link_delay(sum.card_f, net);
    const auto e = try_eval(plant, K, upd.tau, N);
    sum.J_f = e ? e->J() : kNaN;
    sum.had_right_snap = right_snap;
    sum.epsilon = std::isfinite(epsilon) ? epsilon : 0.0;
    sum.epsilon_nonpositive = sum.epsilon <= 0.0;
    sum.gap = sum.tau_f - sum.tau_star_f;
    sum.bound = net.kappa * (card0 - sum.card_f) / net.c - sum.epsilon * opt.r_max;
    sum.bound_holds = sum.gap <= sum.bound + 1e-12;
    sum.rolled_back = rolled_back;
    trace.stages.push_back(std::move(sum));
  }
  return trace;
}

}  // namespace delayh2
