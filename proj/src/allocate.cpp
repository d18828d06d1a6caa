#include "delayh2/allocate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>

namespace delayh2 {

namespace {

double to_double(const Rational& q) { return q.convert_to<double>(); }

Rational exact(double x) {
  if (!std::isfinite(x)) fail(ErrorCode::InvalidArgument, "non-finite value in curve data");
  return Rational(x);
}

Rational max_abs_affine(const Rational& a, const Rational& c, const Rational& lo, const Rational& hi) {
  return std::max(abs(a * lo + c), abs(a * hi + c));
}

}  // namespace

// ---------------------------------------------------------------------------
// Curves

PerfCurve PerfCurve::from_costs(int user, std::vector<int> s, const std::vector<double>& J) {
  if (s.size() != J.size()) fail(ErrorCode::DimensionMismatch, "one cost per sparsity level expected");
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] < s[b]; });
  PerfCurve c;
  c.user = user;
  for (auto k : order) c.s.push_back(s[k]);
  if (c.s.empty()) fail(ErrorCode::InvalidArgument, "empty curve");
  c.J_nominal = *std::min_element(J.begin(), J.end());
  if (!(c.J_nominal > 0.0)) fail(ErrorCode::InvalidArgument, "costs must be positive");
  for (auto k : order) c.r.push_back(J[k] / c.J_nominal);
  c.validate();
  return c;
}

void PerfCurve::validate() const {
  if (user < 1) fail(ErrorCode::InvalidArgument, "user labels start at 1");
  if (s.size() != r.size()) fail(ErrorCode::DimensionMismatch, "one ratio per breakpoint expected");
  if (s.size() < 2) fail(ErrorCode::InvalidArgument, "a curve needs at least two sparsity levels");
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s[j] < 0) fail(ErrorCode::InvalidArgument, "sparsity levels are nonnegative");
    if (j > 0 && s[j] <= s[j - 1]) fail(ErrorCode::InvalidArgument, "breakpoints must increase strictly");
    if (!(r[j] >= 1.0) || !std::isfinite(r[j])) fail(ErrorCode::InvalidArgument, "ratios must be finite and >= 1");
  }
  if (*std::min_element(r.begin(), r.end()) != 1.0) fail(ErrorCode::InvalidArgument, "minimum ratio must be 1");
}

double PerfCurve::slope(int j) const { return (r[j + 1] - r[j]) / (s[j + 1] - s[j]); }

double PerfCurve::intercept(int j) const { return r[j] - slope(j) * s[j]; }

double PerfCurve::evaluate(double x) const {
  if (x < s.front() || x > s.back()) fail(ErrorCode::InvalidArgument, "sparsity level outside the curve");
  const int k = find(static_cast<int>(x));
  if (k >= 0 && x == s[k]) return r[k];
  const int j = static_cast<int>(std::upper_bound(s.begin(), s.end(), x) - s.begin()) - 1;
  return r[j] + (x - s[j]) * (r[j + 1] - r[j]) / (s[j + 1] - s[j]);
}

int PerfCurve::find(int x) const {
  auto it = std::lower_bound(s.begin(), s.end(), x);
  return it != s.end() && *it == x ? static_cast<int>(it - s.begin()) : -1;
}

PerfCurve build_curve(int user, const LtiPlant& plant, const NetworkModel& net, const Matrix& K_prime,
                      double tau_prime, const SparsifyOptions& options) {
  const SparsifyTrace tr = sparsify_run(plant, net, K_prime, tau_prime, options);
  std::map<int, double> best;
  for (const auto& r : tr.records) {
    if (!r.stable || !std::isfinite(r.J)) continue;
    auto [it, fresh] = best.emplace(r.s, r.J);
    if (!fresh) it->second = std::min(it->second, r.J);
  }
  std::vector<int> s;
  std::vector<double> J;
  for (auto [k, v] : best) s.push_back(k), J.push_back(v);
  PerfCurve c = PerfCurve::from_costs(user, s, J);
  c.entries = plant.m() * plant.n();
  return c;
}

VarianceObjective variance_objective(const std::vector<double>& r, double sigma) {
  if (r.empty()) fail(ErrorCode::InvalidArgument, "no ratios");
  if (!(sigma > 0.0)) fail(ErrorCode::InvalidArgument, "sigma must be positive");
  const double N = static_cast<double>(r.size());
  double sum = 0.0, sq = 0.0;
  for (double x : r) {
    if (!(x >= 1.0)) fail(ErrorCode::InvalidArgument, "ratios must be >= 1");
    sum += x;
    sq += x * x;
  }
  VarianceObjective v;
  v.f = sq / N;
  v.g = sum * sum / (N * N);
  v.h = sum;
  // Centered form keeps H >= 0 in floating point.
  const double mean = sum / N;
  v.H = 0.0;
  for (double x : r) v.H += (x - mean) * (x - mean);
  v.H /= N;
  v.F = v.H + sigma * v.h;
  return v;
}

// ---------------------------------------------------------------------------
// Modified curves

Rational ModifiedCurve::slope(int k) const { return (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]); }

Rational ModifiedCurve::intercept(int k) const { return values[k] - slope(k) * knots[k]; }

Rational ModifiedCurve::evaluate(const Rational& x) const {
  if (x < knots.front() || x > knots.back()) fail(ErrorCode::InvalidArgument, "point outside the modified curve");
  const int k = std::max(0, static_cast<int>(std::upper_bound(knots.begin(), knots.end(), x) - knots.begin()) - 1);
  if (x == knots[k]) return values[k];
  return values[k] + (x - knots[k]) * (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
}

double ModifiedCurve::evaluate(double x) const { return to_double(evaluate(exact(x))); }

ModifiedCurves modify_curves(const std::vector<PerfCurve>& curves, double sigma) {
  if (curves.empty()) fail(ErrorCode::InvalidArgument, "no curves");
  if (!(sigma > 0.0)) fail(ErrorCode::InvalidArgument, "sigma must be positive");
  const int N = static_cast<int>(curves.size());
  int min_gap = std::numeric_limits<int>::max();
  double r_max = 1.0;
  for (const auto& c : curves) {
    c.validate();
    for (int j = 0; j + 1 < c.p(); ++j) min_gap = std::min(min_gap, c.s[j + 1] - c.s[j]);
    r_max = std::max(r_max, *std::max_element(c.r.begin(), c.r.end()));
  }

  ModifiedCurves out;
  Rational eps = std::min(exact(sigma), Rational(1, N)) / 2;
  out.eps_requested = to_double(eps);
  out.eps_shrunk = 2 * eps >= min_gap;
  if (out.eps_shrunk) eps = Rational(min_gap, 4);
  const Rational rm = exact(r_max);
  const Rational D = 2 * Rational(N) * N * N * rm * rm / eps;
  out.eps = to_double(eps);
  out.D = to_double(D);

  for (const auto& c : curves) {
    ModifiedCurve m;
    m.base = c;
    m.eps = eps;
    m.D = D;
    const Rational spike = D * c.user;
    for (int j = 0; j < c.p(); ++j) {
      if (j > 0) {
        m.knots.push_back(Rational(c.s[j]) - eps);
        m.values.push_back(spike);
      }
      m.knots.push_back(Rational(c.s[j]));
      m.values.push_back(exact(c.r[j]));
      if (j + 1 < c.p()) {
        m.knots.push_back(Rational(c.s[j]) + eps);
        m.values.push_back(spike);
      }
    }
    out.curves.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Big-M encoding

MilpEncoding encode_milp(const std::vector<Rational>& b, const std::vector<Rational>& v, const Rational& strict) {
  const int P = static_cast<int>(b.size());
  if (P < 2 || v.size() != b.size()) fail(ErrorCode::InvalidArgument, "encoding needs at least two knots");
  for (int k = 0; k + 1 < P; ++k)
    if (!(b[k] < b[k + 1])) fail(ErrorCode::InvalidArgument, "knots must increase strictly");
  if (!(strict > 0)) fail(ErrorCode::InvalidArgument, "strict surrogate must be positive");

  MilpEncoding e;
  e.P = P;
  e.strict = strict;
  e.d_max = b[P - 1] - b[0];
  e.d_min = P > 2 ? b[1] - b[P - 1] : Rational(0);
  e.t.assign(std::max(P - 1, 1), Rational(0));

  std::vector<Rational> a(P - 1), c(P - 1);
  for (int k = 0; k + 1 < P; ++k) {
    a[k] = (v[k + 1] - v[k]) / (b[k + 1] - b[k]);
    c[k] = v[k] - a[k] * b[k];
  }
  auto row = [&](std::vector<std::pair<int, Rational>> terms, Rational rhs) {
    e.rows.push_back({std::move(terms), std::move(rhs)});
  };
  const int s = e.s(), zt = e.zt();

  row({{s, -1}}, -b[0]);
  row({{s, 1}}, b[P - 1]);
  if (P == 2) {
    row({{zt, 1}, {s, -a[0]}}, c[0]);
    row({{zt, -1}, {s, a[0]}}, -c[0]);
    return e;
  }

  for (int j = 1; j <= P - 2; ++j) {
    const int d = e.delta(j);
    row({{d, -1}}, 0);
    row({{d, 1}}, 1);
    // delta_j = 1 forces s >= b_j; delta_j = 0 forces s <= b_j - strict.
    row({{d, e.d_max}, {s, -1}}, -b[j] + e.d_max);
    row({{d, e.d_min - strict}, {s, 1}}, b[j] - strict);
    // Consecutive ordering implies delta_j <= delta_l for all l < j.
    if (j >= 2) row({{d, 1}, {e.delta(j - 1), -1}}, 0);
  }

  // z_1 selects piece 1 or piece 0.
  {
    const int z = e.z(1), d = e.delta(1);
    const Rational& t = e.t[1] = max_abs_affine(a[1] - a[0], c[1] - c[0], b[0], b[P - 1]);
    row({{z, 1}, {s, -a[1]}, {d, t}}, c[1] + t);
    row({{z, -1}, {s, a[1]}, {d, t}}, -c[1] + t);
    row({{z, 1}, {s, -a[0]}, {d, -t}}, c[0]);
    row({{z, -1}, {s, a[0]}, {d, -t}}, -c[0]);
  }
  // z_j adds the change from piece j-1 to piece j once s passes b_j.
  for (int j = 2; j <= P - 2; ++j) {
    const int z = e.z(j), d = e.delta(j);
    const Rational da = a[j] - a[j - 1], dc = c[j] - c[j - 1];
    const Rational& t = e.t[j] = max_abs_affine(da, dc, b[0], b[P - 1]);
    row({{z, 1}, {d, -t}}, 0);
    row({{z, -1}, {d, -t}}, 0);
    row({{z, 1}, {s, -da}, {d, t}}, dc + t);
    row({{z, -1}, {s, da}, {d, t}}, -dc + t);
  }
  std::vector<std::pair<int, Rational>> plus{{zt, 1}}, minus{{zt, -1}};
  for (int j = 1; j <= P - 2; ++j) {
    plus.emplace_back(e.z(j), -1);
    minus.emplace_back(e.z(j), 1);
  }
  row(std::move(plus), 0);
  row(std::move(minus), 0);
  return e;
}

MilpEncoding encode_milp(const ModifiedCurve& curve) { return encode_milp(curve.knots, curve.values, curve.eps / 4); }

MilpEncoding encode_milp(const PerfCurve& curve) {
  curve.validate();
  std::vector<Rational> b, v;
  for (int j = 0; j < curve.p(); ++j) {
    b.emplace_back(curve.s[j]);
    v.push_back(exact(curve.r[j]));
  }
  return encode_milp(b, v, Rational(1, 2));
}

std::vector<MilpEncoding::Decoded> MilpEncoding::decode(const Rational& sv) const {
  std::vector<Decoded> out;
  const int nb = binaries();
  auto is_z = [&](int var) { return var >= 0 && var < s(); };
  // The ordering rows admit monotone vectors only: ones then zeros.
  for (int ones = 0; ones <= nb; ++ones) {
    std::vector<Rational> val(num_vars(), Rational(0));
    val[s()] = sv;
    std::vector<int> dv(nb);
    for (int j = 1; j <= nb; ++j) val[delta(j)] = dv[j - 1] = j <= ones ? 1 : 0;

    std::vector<std::optional<Rational>> lo(s()), hi(s());
    bool feasible = true;
    // Rows with one z variable pin it; rows with zt are checked once the z are known.
    for (int pass = 0; pass < 2 && feasible; ++pass) {
      for (const auto& r : rows) {
        int zcount = 0, zvar = -1;
        Rational zcoef, known = 0;
        for (const auto& [var, coef] : r.terms) {
          if (is_z(var)) {
            ++zcount;
            zvar = var;
            zcoef = coef;
          } else {
            known += coef * val[var];
          }
        }
        if (pass == 0 && zcount == 0) {
          if (known > r.rhs) feasible = false;
        } else if (pass == 0 && zcount == 1 && zvar != zt()) {
          const Rational bound = (r.rhs - known) / zcoef;
          if (zcoef > 0) hi[zvar] = hi[zvar] ? std::min(*hi[zvar], bound) : bound;
          else lo[zvar] = lo[zvar] ? std::max(*lo[zvar], bound) : bound;
        } else if (pass == 1 && zcount >= 1) {
          // zt and the z: evaluate with every z but zt substituted.
          Rational lhs = 0, ztcoef = 0;
          for (const auto& [var, coef] : r.terms) {
            if (var == zt()) ztcoef += coef;
            else lhs += coef * val[var];
          }
          if (ztcoef == 0) continue;
          const Rational bound = (r.rhs - lhs) / ztcoef;
          if (ztcoef > 0) hi[zt()] = hi[zt()] ? std::min(*hi[zt()], bound) : bound;
          else lo[zt()] = lo[zt()] ? std::max(*lo[zt()], bound) : bound;
        }
      }
      if (!feasible) break;
      if (pass == 0) {
        for (int j = 1; j <= nb; ++j) {
          if (!lo[z(j)] || !hi[z(j)]) fail(ErrorCode::NumericalFailure, "z variable left unbounded");
          if (*lo[z(j)] > *hi[z(j)]) feasible = false;
          else if (*lo[z(j)] != *hi[z(j)]) fail(ErrorCode::NumericalFailure, "z variable not pinned by the rows");
          else val[z(j)] = *lo[z(j)];
        }
      }
    }
    if (!feasible) continue;
    if (!lo[zt()] || !hi[zt()]) fail(ErrorCode::NumericalFailure, "zt left unbounded");
    if (*lo[zt()] > *hi[zt()]) continue;
    if (*lo[zt()] != *hi[zt()]) fail(ErrorCode::NumericalFailure, "zt not pinned by the rows");
    out.push_back({dv, *lo[zt()]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convex-concave step

namespace {

struct Node {
  std::vector<int> lo, hi;  // piece range per user
  double bound;
  long long id;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    return a.bound != b.bound ? a.bound > b.bound : a.id > b.id;
  }
};

std::vector<double> ratios_at(const std::vector<PerfCurve>& curves, const std::vector<int>& s) {
  std::vector<double> r(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const int k = curves[i].find(s[i]);
    if (k < 0) fail(ErrorCode::InvalidArgument, "allocation is not a breakpoint vector");
    r[i] = curves[i].r[k];
  }
  return r;
}

// Pieces of one modified curve as doubles: z = a s + c on [l, u].
struct Piece {
  double l, u, a, c;
};

// psi(s) = phi(a s + c) + nu s with phi(z) = z^2 / N + kappa z, minimized over [l, u].
std::pair<double, double> piece_min(const Piece& p, double N, double kappa, double nu) {
  auto value = [&](double s) {
    const double z = p.a * s + p.c;
    return z * z / N + kappa * z + nu * s;
  };
  double s;
  if (p.a != 0.0) {
    s = -(2.0 * p.a * p.c / N + kappa * p.a + nu) / (2.0 * p.a * p.a / N);
    s = std::clamp(s, p.l, p.u);
  } else {
    s = nu > 0.0 ? p.l : (nu < 0.0 ? p.u : p.l);
  }
  return {value(s), s};
}

}  // namespace

CcpStep ccp_step(const ModifiedCurves& modified, const std::vector<int>& s_prev, int frak_s, double sigma,
                 const CcpOptions& options) {
  const auto& curves = modified.curves;
  const int N = static_cast<int>(curves.size());
  if (static_cast<int>(s_prev.size()) != N) fail(ErrorCode::DimensionMismatch, "one level per user expected");
  std::vector<PerfCurve> base;
  for (const auto& c : curves) base.push_back(c.base);
  const std::vector<double> r_prev = ratios_at(base, s_prev);
  if (std::accumulate(s_prev.begin(), s_prev.end(), 0) != frak_s)
    fail(ErrorCode::InvalidArgument, "previous allocation does not sum to the target");

  // F_hat(z) = sum_i z_i^2 / N + kappa z_i + constant.
  const double Nd = N;
  const double sum_prev = std::accumulate(r_prev.begin(), r_prev.end(), 0.0);
  const double grad = 2.0 * sum_prev / (Nd * Nd);
  const double kappa = sigma - grad;
  const double constant = -sum_prev * sum_prev / (Nd * Nd) + grad * sum_prev;
  auto F_hat = [&](const std::vector<double>& z) {
    double v = constant;
    for (double x : z) v += x * x / Nd + kappa * x;
    return v;
  };

  std::vector<std::vector<Piece>> pieces(N);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < curves[i].pieces(); ++k)
      pieces[i].push_back({to_double(curves[i].knots[k]), to_double(curves[i].knots[k + 1]),
                           to_double(curves[i].slope(k)), to_double(curves[i].intercept(k))});

  // Per-user minimizer of psi_i + nu s over the node's pieces (ties to smaller s).
  auto respond = [&](const Node& node, int i, double nu) {
    std::pair<double, double> best{std::numeric_limits<double>::infinity(), 0.0};
    for (int k = node.lo[i]; k <= node.hi[i]; ++k) {
      const auto m = piece_min(pieces[i][k], Nd, kappa, nu);
      if (m.first < best.first || (m.first == best.first && m.second < best.second)) best = m;
    }
    return best;
  };
  // Lagrangian dual of the sum constraint: any nu gives a lower bound on the node;
  // bisection on the subgradient sum_i s_i(nu) - frak_s picks a good one.
  struct Dual {
    double bound, nu;
  };
  auto dual = [&](const Node& node) {
    auto L = [&](double nu, double* excess) {
      double v = -nu * frak_s, s = -frak_s;
      for (int i = 0; i < N; ++i) {
        const auto m = respond(node, i, nu);
        v += m.first;
        s += m.second;
      }
      if (excess) *excess = s;
      return v;
    };
    double lo = -1.0, hi = 1.0, ex;
    while (L(lo, &ex), ex < 0.0 && lo > -1e30) lo *= 4.0;
    while (L(hi, &ex), ex > 0.0 && hi < 1e30) hi *= 4.0;
    Dual best{L(0.0, nullptr), 0.0};
    for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      const double v = L(mid, &ex);
      if (v > best.bound) best = {v, mid};
      if (ex > 0.0) lo = mid;
      else hi = mid;
    }
    for (double nu : {lo, hi}) {
      const double v = L(nu, nullptr);
      if (v > best.bound) best = {v, nu};
    }
    return best;
  };

  auto attainable = [&](const Node& node) {
    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < N; ++i) {
      lo += pieces[i][node.lo[i]].l;
      hi += pieces[i][node.hi[i]].u;
    }
    return lo <= frak_s && frak_s <= hi;
  };

  // Incumbent: the previous iterate, whose bound equals its true F.
  CcpStep best{s_prev, F_hat(r_prev)};
  auto consider = [&](const std::vector<int>& si) {
    const double v = F_hat(ratios_at(base, si));
    const double tol = 1e-12 * (1.0 + std::abs(best.F_hat));
    if (v < best.F_hat - tol || (v <= best.F_hat + tol && si < best.s)) best = {si, v};
  };

  Node root;
  root.id = 0;
  for (int i = 0; i < N; ++i) {
    root.lo.push_back(0);
    root.hi.push_back(curves[i].pieces() - 1);
  }
  if (!attainable(root)) fail(ErrorCode::MiqpInfeasible, "target sparsity outside the attainable range");
  root.bound = dual(root).bound;
  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  open.push(root);
  long long next_id = 1, processed = 0;
  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    const double prune_tol = 1e-9 * (1.0 + std::abs(best.F_hat));
    if (node.bound > best.F_hat + prune_tol) break;
    if (++processed > options.max_nodes) fail(ErrorCode::MaxIterations, "branch and bound node limit reached");

    int split = -1, width = 0;
    for (int i = 0; i < N; ++i)
      if (node.hi[i] - node.lo[i] > width) width = node.hi[i] - node.lo[i], split = i;
    if (split < 0) {
      // One piece per user: convex, so the dual is exact. Recover s from nu.
      const Dual d = dual(node);
      std::vector<double> s(N);
      double rest = frak_s;
      for (int i = 0; i < N; ++i) {
        const Piece& p = pieces[i][node.lo[i]];
        s[i] = p.a != 0.0 ? respond(node, i, d.nu).second : p.l;
        rest -= s[i];
      }
      // Flat pieces absorb the remainder, last users first.
      for (int i = N - 1; i >= 0 && std::abs(rest) > 0.0; --i) {
        const Piece& p = pieces[i][node.lo[i]];
        if (p.a != 0.0) continue;
        const double moved = std::clamp(s[i] + rest, p.l, p.u) - s[i];
        s[i] += moved;
        rest -= moved;
      }
      std::vector<int> si(N);
      bool on_grid = true;
      for (int i = 0; i < N && on_grid; ++i) {
        si[i] = static_cast<int>(std::lround(s[i]));
        on_grid = std::abs(s[i] - si[i]) <= 1e-6 && base[i].find(si[i]) >= 0;
      }
      // Minima off the breakpoints sit on spikes and never beat a breakpoint vector.
      if (on_grid && std::accumulate(si.begin(), si.end(), 0) == frak_s) consider(si);
      continue;
    }
    const int mid = (node.lo[split] + node.hi[split]) / 2;
    for (int side = 0; side < 2; ++side) {
      Node child = node;
      child.id = next_id++;
      if (side == 0) child.hi[split] = mid;  // delta_{mid+1} = 0
      else child.lo[split] = mid + 1;        // delta_{mid+1} = 1
      if (!attainable(child)) continue;
      child.bound = std::max(node.bound, dual(child).bound);
      if (child.bound <= best.F_hat + prune_tol) open.push(child);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Allocation

std::vector<int> initial_allocation(const std::vector<PerfCurve>& curves, int frak_s, std::vector<double> weights) {
  const int N = static_cast<int>(curves.size());
  if (N == 0) fail(ErrorCode::InvalidArgument, "no curves");
  if (weights.empty())
    for (const auto& c : curves) weights.push_back(c.entries > 0 ? c.entries : std::max(c.s.back(), 1));
  if (static_cast<int>(weights.size()) != N) fail(ErrorCode::DimensionMismatch, "one weight per user expected");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) fail(ErrorCode::InvalidArgument, "weights must be positive");

  // Largest remainder.
  std::vector<int> x(N);
  std::vector<std::pair<double, int>> rem;
  int assigned = 0;
  for (int i = 0; i < N; ++i) {
    const double share = frak_s * weights[i] / total;
    x[i] = static_cast<int>(std::floor(share));
    assigned += x[i];
    rem.emplace_back(-(share - x[i]), i);
  }
  std::sort(rem.begin(), rem.end());
  for (int k = 0; assigned < frak_s; ++k, ++assigned) ++x[rem[k % N].second];

  // Nearest breakpoint vector with the same sum: dynamic program over users.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> cost(N + 1, std::vector<double>(frak_s + 1, inf));
  std::vector<std::vector<int>> pick(N + 1, std::vector<int>(frak_s + 1, -1));
  cost[N][0] = 0.0;
  for (int i = N - 1; i >= 0; --i)
    for (int rest = 0; rest <= frak_s; ++rest)
      for (int v : curves[i].s) {
        if (v > rest || cost[i + 1][rest - v] == inf) continue;
        const double c = (v - x[i]) * double(v - x[i]) + cost[i + 1][rest - v];
        if (c < cost[i][rest]) cost[i][rest] = c, pick[i][rest] = v;
      }
  if (cost[0][frak_s] == inf) fail(ErrorCode::MiqpInfeasible, "target sparsity is not a sum of breakpoints");
  std::vector<int> s(N);
  for (int i = 0, rest = frak_s; i < N; ++i) {
    s[i] = pick[i][rest];
    rest -= s[i];
  }
  return s;
}

AllocationResult allocate(const std::vector<PerfCurve>& curves, int frak_s, std::optional<std::vector<int>> s0,
                          double sigma, int max_steps, const CcpOptions& options) {
  if (max_steps < 1) fail(ErrorCode::InvalidArgument, "max_steps must be positive");
  const ModifiedCurves mod = modify_curves(curves, sigma);
  const int N = static_cast<int>(curves.size());
  std::vector<int> s = s0 ? *s0 : initial_allocation(curves, frak_s);
  if (static_cast<int>(s.size()) != N) fail(ErrorCode::DimensionMismatch, "one level per user expected");
  if (std::accumulate(s.begin(), s.end(), 0) != frak_s) fail(ErrorCode::InvalidArgument, "start does not sum to target");
  std::vector<double> r = ratios_at(curves, s);

  AllocationResult out;
  out.eps = mod.eps;
  out.eps_shrunk = mod.eps_shrunk;
  const double F0 = variance_objective(r, sigma).F;
  out.history.push_back({s, F0, F0, 0.0});
  out.s_star = s;
  out.F_star = F0;
  out.steps = 0;
  for (int step = 0; step < max_steps; ++step) {
    const CcpStep next = ccp_step(mod, s, frak_s, sigma, options);
    const std::vector<double> rn = ratios_at(curves, next.s);
    double diff = 0.0;
    for (int i = 0; i < N; ++i) diff += rn[i] - r[i];
    const double F = variance_objective(rn, sigma).F;
    out.history.push_back({next.s, F, next.F_hat, diff * diff / (double(N) * N)});
    ++out.steps;
    if (F < out.F_star) out.F_star = F, out.s_star = next.s;
    if (next.s == s) break;
    s = next.s;
    r = rn;
  }
  out.ratios = ratios_at(curves, out.s_star);
  return out;
}

std::vector<RankedAllocation> enumerate_oracle(const std::vector<PerfCurve>& curves, int frak_s, double sigma,
                                               long long cap) {
  const int N = static_cast<int>(curves.size());
  if (N == 0) fail(ErrorCode::InvalidArgument, "no curves");
  long long count = 1;
  for (const auto& c : curves) {
    c.validate();
    count *= c.p();
    if (count > cap) fail(ErrorCode::CapExceeded, "enumeration exceeds the cap");
  }
  std::vector<int> min_rest(N + 1, 0), max_rest(N + 1, 0);
  for (int i = N - 1; i >= 0; --i) {
    min_rest[i] = min_rest[i + 1] + curves[i].s.front();
    max_rest[i] = max_rest[i + 1] + curves[i].s.back();
  }
  std::vector<RankedAllocation> out;
  std::vector<int> s(N);
  std::vector<double> r(N);
  auto rec = [&](auto&& self, int i, int rest) -> void {
    if (i == N) {
      if (rest == 0) out.push_back({s, variance_objective(r, sigma).F});
      return;
    }
    for (int k = 0; k < curves[i].p(); ++k) {
      const int v = curves[i].s[k];
      if (rest - v < min_rest[i + 1] || rest - v > max_rest[i + 1]) continue;
      s[i] = v;
      r[i] = curves[i].r[k];
      self(self, i + 1, rest - v);
    }
  };
  rec(rec, 0, frak_s);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.F != b.F ? a.F < b.F : a.s < b.s; });
  return out;
}

}  // namespace delayh2
