#include "delayh2/precondition.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "delayh2/stability.hpp"

namespace delayh2 {

namespace {

constexpr double kRecheckTol = 1e-6;

AffineExpr times(const AffineExpr& s, const Matrix& M) { return AffineExpr::scaled_identity(s, M.rows()) * M; }

LmiCertificate add(const LmiCertificate& a, const LmiCertificate& b) {
  LmiCertificate c;
  c.P = a.P + b.P;
  c.Q0 = a.Q0 + b.Q0;
  c.Q1 = a.Q1 + b.Q1;
  c.S0 = a.S0 + b.S0;
  c.S1 = a.S1 + b.S1;
  c.R00 = a.R00 + b.R00;
  c.R01 = a.R01 + b.R01;
  c.R11 = a.R11 + b.R11;
  return c;
}

bool certifies(const LtiPlant& plant, const Matrix& K, double tau, LmiCertificate& c, double eps) {
  std::tie(c.phi_min_eig, c.psi_min_eig) = lmi_min_eigenvalues(plant, K, tau, c);
  return std::min(c.phi_min_eig, c.psi_min_eig) >= eps - kRecheckTol;
}

void require_cap(FeasibilityProblem& fp, const AffineExpr& M, const AffineExpr& t) {
  for (const auto& blk : spectral_norm_bound(M, t)) fp.require_psd(blk);
}

}  // namespace

RelaxationPoint RelaxationPoint::certify(const LtiPlant& plant, const Matrix& K, double tau, double eps,
                                         const ConicOptions& options) {
  return {K, tau, lmi_certificate(plant, K, tau, eps, options)};
}

RelaxationPoint Relaxation::at(const Vector& x) const {
  RelaxationPoint p;
  p.K = base.K + dK.evaluate(x);
  p.tau = base.tau + dtau.value(x)(0, 0);
  p.aux = add(base.aux, delta.unpack(x));
  return p;
}

Relaxation assemble_relaxation(const LtiPlant& plant, const RelaxationPoint& base, double gamma, double eta,
                               double eps, double tau_cap) {
  check_gain_shape(plant, base.K);
  if (!(gamma > 0.0) || !(eta > 0.0) || !(eps > 0.0))
    fail(ErrorCode::InvalidArgument, "gamma, eta and eps must be positive");
  if (!(base.tau > 0.0)) fail(ErrorCode::InvalidArgument, "base delay must be positive");
  LmiCertificate aux = base.aux;
  if (!certifies(plant, base.K, base.tau, aux, eps))
    fail(ErrorCode::InvalidArgument, "base point is not certified");

  const int n = plant.n(), m = plant.m();
  const Matrix& A = plant.A();
  const Matrix& B = plant.B();
  const Matrix BK = B * base.K;
  const double to = base.tau, ho = 0.5 * to;
  const double normB = B.norm() > 0.0 ? Eigen::JacobiSVD<Matrix>(B).singularValues()(0) : 0.0;

  Relaxation rel;
  rel.base = base;
  rel.base.aux = aux;
  FeasibilityProblem& fp = rel.problem;
  rel.delta = LmiVariables::declare(fp, n, "d");
  rel.dtau = fp.add_scalar("dtau");
  rel.alpha = fp.add_scalar("alpha");
  rel.beta = fp.add_scalar("beta");

  // Gain perturbation on the support of K.
  const SparsityPattern pattern = SparsityPattern::of(base.K, default_zero_tol(base.K));
  rel.dK = AffineExpr::zero(m, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) {
      if (!pattern.mask()(i, j)) continue;
      const MatrixVar v = fp.add_scalar("dK");
      rel.dK += Matrix(Vector::Unit(m, i)) * AffineExpr::of(v) * Matrix(Vector::Unit(n, j).transpose());
    }
  const AffineExpr F = B * rel.dK;
  const AffineExpr dtau = AffineExpr::of(rel.dtau);
  const AffineExpr dh = 0.5 * dtau;

  const LmiTerms d = LmiTerms::of(rel.delta);
  LmiTerms t = LmiTerms::constant(aux);
  t.P += d.P;
  t.Q0 += d.Q0;
  t.Q1 += d.Q1;
  t.S0 += d.S0;
  t.S1 += d.S1;
  t.R00 += d.R00;
  t.R01 += d.R01;
  t.R11 += d.R11;

  // First-order part in (dK, dtau, daux).
  const Matrix Qs = aux.Q0 + aux.Q1, Qd = aux.Q0 - aux.Q1;
  const AffineExpr Z = AffineExpr::zero(n, n);
  const AffineExpr gain01 = aux.P * F;
  const AffineExpr gain12 = ho * (F.transpose() * Qs);
  const AffineExpr gain13 = -ho * (F.transpose() * Qd);
  const AffineExpr gain = AffineExpr::blocks({{Z, gain01, Z, Z},
                                              {gain01.transpose(), Z, gain12, gain13},
                                              {Z, gain12.transpose(), Z, Z},
                                              {Z, gain13.transpose(), Z, Z}});
  const Matrix Dtau = lmi_phi(A, BK, 1.0, aux) - lmi_phi(A, BK, 0.0, aux);
  rel.phi0 = lmi_phi(A, BK, to, t) + gain + times(dtau, Dtau);

  Matrix Sdiag = Matrix::Zero(3 * n, 3 * n);
  Sdiag.block(n, n, n, n) = aux.S0;
  Sdiag.block(2 * n, 2 * n, n, n) = aux.S1;
  rel.psi0 = lmi_psi(to, t) - times(dtau, Sdiag / (to * to));

  // Higher-order remainder, bounded through norm epigraphs.
  const AffineExpr dQs = d.Q0 + d.Q1, dQd = d.Q0 - d.Q1;
  const Matrix At = A.transpose(), BKt = BK.transpose();
  const AffineExpr W1 = AffineExpr::blocks(
      {{d.P, Z, ho * dQs + times(dh, Qs), -(ho * dQd) - times(dh, Qd)}});
  const AffineExpr W2 = AffineExpr::blocks(
      {{-(At * dQs) - d.R00 - d.R01, At * dQd + d.R00 - d.R01},
       {BKt * dQs + d.R01.transpose() + d.R11, -(BKt * dQd) - d.R01.transpose() + d.R11}});
  const AffineExpr W3 = d.R00 - d.R11;
  const AffineExpr W4 = AffineExpr::blocks({{dQs, -dQd}});

  std::vector<MatrixVar> b;
  for (const char* name : {"b1", "b2", "b3", "b4", "b5"}) b.push_back(fp.add_scalar(name));
  auto bx = [&](int i) { return AffineExpr::of(b[i]); };
  require_cap(fp, W1, bx(0));
  require_cap(fp, W2, bx(1));
  require_cap(fp, W3, bx(2));
  require_cap(fp, W4, bx(3));
  require_cap(fp, d.S0, bx(4));
  require_cap(fp, d.S1, bx(4));
  require_cap(fp, rel.dK, AffineExpr::scalar(eta));

  const AffineExpr alpha = AffineExpr::of(rel.alpha), beta = AffineExpr::of(rel.beta);
  const double bg = 0.5 * gamma;
  fp.require_psd(rel.phi0 - AffineExpr::scaled_identity(alpha, 4 * n));
  fp.require_nonneg(alpha - (normB * eta) * bx(0) - bg * bx(1) - gamma * bx(2) - (bg * normB * eta) * bx(3) -
                    AffineExpr::scalar(eps));
  fp.require_psd(rel.psi0 - AffineExpr::scaled_identity(beta, 3 * n));
  fp.require_nonneg(beta - (gamma / (to * to)) * bx(4) - AffineExpr::scalar(eps));

  fp.require_nonneg(dtau);
  fp.require_nonneg(AffineExpr::scalar(std::min(gamma, tau_cap)) - dtau);
  return rel;
}

LmiCertificate project_auxiliaries(const LtiPlant& plant, const Matrix& K, double tau, const LmiCertificate& anchor,
                                   double eps, const ConicOptions& options) {
  check_gain_shape(plant, K);
  // A feasible anchor is its own projection.
  LmiCertificate c = anchor;
  if (certifies(plant, K, tau, c, eps)) return c;

  FeasibilityProblem fp;
  const LmiVariables vars = LmiVariables::declare(fp, plant.n());
  const int nv = fp.num_scalars();
  // The conditions are homogeneous in the auxiliaries: work at unit scale.
  Vector a(nv);
  vars.pack(anchor, a);
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-12);
  a /= scale;
  AffineExpr total = AffineExpr::scalar(0.0);
  for (int i = 0; i < nv; ++i) {
    const AffineExpr di = AffineExpr::of(MatrixVar{"x", i, 1, 1, false}) - AffineExpr::scalar(a(i));
    const AffineExpr ti = AffineExpr::of(fp.add_scalar("t"));
    fp.require_psd(AffineExpr::blocks({{ti, di}, {di, AffineExpr::scalar(1.0)}}));
    total += ti;
  }
  const LmiTerms terms = LmiTerms::of(vars);
  const double margin = eps / scale + 10.0 * options.tol;
  fp.require_psd(lmi_phi(plant.A(), plant.B() * K, tau, terms), margin);
  fp.require_psd(lmi_psi(tau, terms), margin);
  fp.minimize(total);
  FeasibilityResult r;
  try {
    r = solve_feasibility(fp, options);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Infeasible || e.code() == ErrorCode::NumericalFailure)
      fail(ErrorCode::StepInfeasible, std::string("auxiliary projection failed: ") + e.what());
    throw;
  }
  c = vars.unpack(scale * r.x.head(nv));
  if (!certifies(plant, K, tau, c, eps)) fail(ErrorCode::StepInfeasible, "projected auxiliaries fail the re-check");
  return scale_certificate(c, 1.0 / std::min(c.phi_min_eig, c.psi_min_eig));
}

RelaxationPoint trust_region_step(const LtiPlant& plant, const RelaxationPoint& current, double T, double Delta,
                                  double gamma, double eta, double eps, const ConicOptions& options) {
  if (!(Delta > 0.0)) fail(ErrorCode::InvalidArgument, "trust radius must be positive");
  const double tk = current.tau;
  if (T - tk <= 0.0) return current;

  // Steihaug CG on h(z) = f'(tk) z + z^2, z = tau - tk.
  double z = 0.0, r = 2.0 * (T - tk), dir = r;
  bool boundary = false;
  for (int j = 0; j < 4 && std::abs(r) > 1e-14 * (1.0 + T); ++j) {
    const double curv = 2.0 * dir * dir;
    const double a = r * r / curv;
    if (std::abs(z + a * dir) >= Delta) {
      z = std::copysign(Delta, dir);
      boundary = true;
      break;
    }
    z += a * dir;
    const double rn = r - a * 2.0 * dir;
    dir = rn + (rn * rn) / (r * r) * dir;
    r = rn;
  }

  Relaxation rel = assemble_relaxation(plant, current, gamma, eta, eps, z);
  rel.problem.minimize(-AffineExpr::of(rel.dtau));
  FeasibilityResult sol;
  try {
    sol = solve_feasibility(rel.problem, options);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Infeasible || e.code() == ErrorCode::NumericalFailure)
      fail(ErrorCode::StepInfeasible, std::string("relaxation failed: ") + e.what());
    throw;
  }
  const RelaxationPoint cand = rel.at(sol.x);
  double step = cand.tau - tk;
  if (!(step > 0.0)) return current;
  const double raw = step;
  if (boundary && step >= (1.0 - 1e-5) * z) step = z;

  // Stabilizing-pair safeguard.
  int halvings = 0;
  while (!is_stable(plant, cand.K, tk + step)) {
    if (++halvings > 10) return current;
    step *= 0.5;
  }
  try {
    return {cand.K, tk + step, project_auxiliaries(plant, cand.K, tk + step, cand.aux, eps, options)};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::StepInfeasible || step == raw || halvings > 0) throw;
  }
  return {cand.K, tk + raw, project_auxiliaries(plant, cand.K, tk + raw, cand.aux, eps, options)};
}

namespace {

// Largest certified delay found by halving then bisecting below hi.
RelaxationPoint initial_point(const LtiPlant& plant, const Matrix& K, double hi, const PreconditionOptions& opt) {
  auto attempt = [&](double tau) -> std::optional<RelaxationPoint> {
    try {
      return RelaxationPoint::certify(plant, K, tau, opt.eps, opt.conic);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Infeasible || e.code() == ErrorCode::NumericalFailure) return std::nullopt;
      throw;
    }
  };
  std::optional<RelaxationPoint> best;
  double lo = 0.0, up = hi;
  for (int j = 1; j <= 12 && !best; ++j) {
    const double tau = hi * std::pow(0.5, j);
    best = attempt(tau);
    if (best) lo = tau;
    else up = tau;
  }
  if (!best) fail(ErrorCode::NoStabilizingPair, "no certified delay found for the initial gain");
  for (int i = 0; i < opt.bisection_steps; ++i) {
    const double mid = 0.5 * (lo + up);
    if (auto p = attempt(mid)) {
      best = p;
      lo = mid;
    } else {
      up = mid;
    }
  }
  return *best;
}

double backed_off(const LtiPlant& plant, const Matrix& K, double edge, double dir, double width) {
  for (double d = 1e-8; d < 0.5 * width; d *= 10.0)
    if (is_stable(plant, K, edge + dir * d)) return edge + dir * d;
  fail(ErrorCode::NoStableInterval, "no stable point next to the interval endpoint");
}

}  // namespace

PreconditionResult precondition(const LtiPlant& plant, const NetworkModel& net, const Matrix& K0,
                                const PreconditionOptions& opt) {
  check_gain_shape(plant, K0);
  PreconditionResult res;
  int card = cardinality(K0);
  double tau_star = link_delay(card, net);
  if (is_stable(plant, K0, tau_star)) {
    res.K_prime = K0;
    res.tau_prime = tau_star;
    res.c_final = net.c;
    res.fast_path = true;
    return res;
  }
  if (!closed_loop_delay_free(plant, K0).second)
    fail(ErrorCode::NotDelayFreeStable, "initial gain does not stabilize the delay-free loop");

  const double T = opt.target.value_or(link_delay(plant.m() * plant.n(), net));
  const double margin = delay_margin(plant, K0);
  RelaxationPoint cur = initial_point(plant, K0, std::min({margin, T, tau_star}), opt);
  res.trace.push_back({0, cur.tau, card, true});

  for (int k = 1;; ++k) {
    card = cardinality(cur.K);
    tau_star = link_delay(card, net);
    if (is_stable(plant, cur.K, tau_star)) {
      res.K_prime = cur.K;
      res.tau_prime = tau_star;
      res.c_final = net.c;
      return res;
    }
    if (k > opt.max_iterations) {
      res.iteration_cap = true;
      break;
    }
    double gamma = opt.gamma_fraction * cur.tau;
    double eta = opt.eta_fraction * std::max(cur.K.norm(), 1.0);
    std::optional<RelaxationPoint> next;
    for (int attempt = 0; attempt <= opt.shrink_attempts && !next; ++attempt) {
      try {
        next = trust_region_step(plant, cur, T, opt.delta_fraction * cur.tau, gamma, eta, opt.eps, opt.conic);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::StepInfeasible) throw;
        gamma *= 0.5;
        eta *= 0.5;
      }
    }
    if (!next) fail(ErrorCode::NoStabilizingPair, "relaxation infeasible for every (gamma, eta) in the schedule");
    const double step = next->tau - cur.tau;
    res.trace.push_back({k, next->tau, cardinality(next->K), step > opt.eps});
    if (step > 0.0) cur = *next;
    if (step <= opt.eps) break;
  }

  // Snap to an endpoint of the stable interval holding the last iterate.
  card = cardinality(cur.K);
  tau_star = link_delay(card, net);
  const StableIntervals si = stable_intervals(plant, cur.K, 2.0 * std::max(tau_star, cur.tau));
  const DelayInterval* cell = nullptr;
  for (const auto& iv : si.intervals)
    if (iv.lo <= cur.tau && cur.tau <= iv.hi) cell = &iv;
  if (!cell) fail(ErrorCode::NoStableInterval, "certified delay lies outside every stable interval");
  const double width = cell->hi - cell->lo;
  const double tau_prime = tau_star > cell->hi ? backed_off(plant, cur.K, cell->hi, -1.0, width)
                                               : backed_off(plant, cur.K, cell->lo, 1.0, width);
  if (!(tau_prime > net.tau_p))
    fail(ErrorCode::NoStabilizingPair, "stable interval lies below the propagation delay");
  res.K_prime = cur.K;
  res.tau_prime = tau_prime;
  res.c_final = net.kappa * card / (tau_prime - net.tau_p);
  res.snapped = true;
  return res;
}

}  // namespace delayh2
