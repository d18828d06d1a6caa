// Acceptance checks: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include "delayh2/allocate.hpp"
#include "delayh2/certificate.hpp"
#include "delayh2/precondition.hpp"
#include "delayh2/sparsify.hpp"
#include "delayh2/spectral.hpp"
#include "delayh2/stability.hpp"
#include "oracles.hpp"

using namespace delayh2;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Random A - B K Hurwitz with a finite delay margin.
bool random_delayed_instance(oracle::Rng& rng, int n, LtiPlant& plant, Matrix& K) {
  const int m = rng.integer(1, n);
  plant = oracle::random_plant(rng, n, m, 1, rng.uniform(-0.5, 0.5));
  K = rng.gaussian(m, n);
  const double shift = spectral_abscissa(plant.A() - plant.B() * K);
  if (shift > -0.05) K += plant.B().transpose() * (shift + 0.5);
  return closed_loop_delay_free(plant, K).second;
}

LtiPlant scalar_plant(double a) {
  const Matrix one = Matrix::Identity(1, 1);
  return LtiPlant(Matrix::Constant(1, 1, a), one, one, one, one);
}

Matrix lqr(const LtiPlant& p) {
  return p.R().inverse() * p.B().transpose() * oracle::care(p.A(), p.B(), p.Q(), p.R());
}

Outcome c1_link_delay() {
  const auto t0 = Clock::now();
  const NetworkModel net(956.0, 9.83e-3, 0.01);
  const double a = link_delay(2500, net), b = link_delay(248, net);
  const double dt = seconds_since(t0);
  const bool ok = std::abs(a - 35.98e-3) <= 0.005 * 35.98e-3 && std::abs(b - 12.42e-3) <= 0.005 * 12.42e-3 && dt < 1e-3;
  return {ok, fmt("link_delay(2500)=%.4f ms, link_delay(248)=%.4f ms, %.2e s", a * 1e3, b * 1e3, dt)};
}

Outcome c2_h2_convergence() {
  const auto t0 = Clock::now();
  oracle::Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int n = rng.integer(1, 6), m = rng.integer(1, 3);
    const LtiPlant p = oracle::random_plant(rng, n, m, rng.integer(1, n), rng.uniform(-2.0, -0.1));
    const Matrix K = Matrix::Zero(m, n);
    const double tau = rng.uniform(0.05, 1.0);
    const int N = select_grid_size(p, K, tau);
    const double exact = oracle::delay_free_h2(p, K);
    worst = std::max(worst, std::abs(h2_norm(p, K, tau, N) - exact) / exact);
  }
  const double dt = seconds_since(t0);
  return {worst <= 1e-6 && dt < 5.0, fmt("20 instances, worst rel err %.2e, %.2f s", worst, dt)};
}

Outcome c3_gradient() {
  const auto t0 = Clock::now();
  oracle::Rng rng(202);
  double worst = 0.0;
  int checked = 0;
  while (checked < 20) {
    const int n = rng.integer(1, 4), m = rng.integer(1, 2);
    const LtiPlant p = oracle::random_plant(rng, n, m, 1, -0.5);
    const Matrix K = 0.3 * rng.gaussian(m, n);
    const double tau = rng.uniform(0.05, 0.5);
    if (!is_stable(p, K, tau)) continue;
    const int N = 12;
    const Matrix g = h2_gradient(p, K, tau, N);
    const Matrix fd = oracle::fd_gradient([&](const Matrix& X) { return h2_norm(p, X, tau, N); }, K, 1e-5);
    worst = std::max(worst, (g - fd).norm() / fd.norm());
    ++checked;
  }
  const double dt = seconds_since(t0);
  return {worst < 1e-4 && dt < 30.0, fmt("20 instances, worst rel err %.2e, %.2f s", worst, dt)};
}

Outcome c4_margin() {
  const double scalar = delay_margin(scalar_plant(0.0), Matrix::Identity(1, 1));
  const double scalar_err = std::abs(scalar - std::numbers::pi / 2) / (std::numbers::pi / 2);
  oracle::Rng rng(303);
  double worst = 0.0;
  int checked = 0;
  while (checked < 20) {
    LtiPlant p = scalar_plant(0.0);
    Matrix K;
    if (!random_delayed_instance(rng, rng.integer(2, 4), p, K)) continue;
    const double margin = delay_margin(p, K);
    if (!std::isfinite(margin) || margin > 20.0) continue;
    worst = std::max(worst, std::abs(pade_margin(p, K, 2.0 * margin, 8) - margin) / margin);
    ++checked;
  }
  return {scalar_err <= 0.01 && worst <= 0.01,
          fmt("scalar margin %.6f (rel err %.1e); 20 instances, worst crossing/Pade gap %.2e", scalar, scalar_err,
              worst)};
}

Outcome c5_certificate() {
  oracle::Rng rng(404);
  int certified = 0, violations = 0, unstable_infeasible = 0, unstable = 0, inconclusive = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = rng.integer(1, 3);
    const LtiPlant p = oracle::random_plant(rng, n, 1, 1, rng.uniform(-1.0, 0.3));
    const Matrix K = rng.gaussian(1, n);
    const double tau = rng.uniform(0.05, 1.0);
    const bool stable = is_stable(p, K, tau);
    unstable += !stable;
    try {
      lmi_certificate(p, K, tau);
      ++certified;
      violations += !stable;
    } catch (const Error& e) {
      // A solver failure yields no certificate and no verdict.
      if (e.code() == ErrorCode::NumericalFailure) {
        ++inconclusive;
        continue;
      }
      if (e.code() != ErrorCode::Infeasible) throw;
      unstable_infeasible += !stable;
    }
  }
  return {violations == 0 && unstable_infeasible >= 1,
          fmt("50 pairs: %d certified, %d violations, %d/%d unstable pairs infeasible, %d solver failures", certified,
              violations, unstable_infeasible, unstable, inconclusive)};
}

Outcome c6_precondition() {
  oracle::Rng rng(505);
  int done = 0, good = 0;
  double slowest = 0.0;
  std::string notes;
  while (done < 10) {
    const int n = rng.integer(2, 6);
    const LtiPlant plant = oracle::random_plant(rng, n, 1, 1, -0.2);
    const Matrix K = 0.5 * rng.gaussian(1, n);
    if (!closed_loop_delay_free(plant, K).second) continue;
    const double margin = delay_margin(plant, K);
    if (!std::isfinite(margin) || margin > 5.0) continue;
    // Link delay of the full gain is 1.5 times its margin.
    const NetworkModel net(0.01 * cardinality(K) / (1.5 * margin), 0.0, 0.01);
    const auto t0 = Clock::now();
    bool ok = false;
    try {
      PreconditionOptions opt;
      opt.max_iterations = 8;
      const PreconditionResult r = precondition(plant, net, K, opt);
      const double tau_check = link_delay(cardinality(r.K_prime), NetworkModel(r.c_final, net.tau_p, net.kappa));
      bool monotone = true;
      for (std::size_t i = 1; i < r.trace.size(); ++i) monotone = monotone && r.trace[i].tau >= r.trace[i - 1].tau;
      ok = is_stable(plant, r.K_prime, r.tau_prime) && std::abs(r.tau_prime - tau_check) <= 1e-9 && monotone;
    } catch (const Error& e) {
      notes += fmt(" [n=%d: %s]", n, error_name(e.code()));
    }
    const double dt = seconds_since(t0);
    slowest = std::max(slowest, dt);
    ok = ok && dt < 120.0;
    good += ok;
    ++done;
  }
  return {good == 10, fmt("%d/10 instances meet the contract, slowest %.1f s%s", good, slowest, notes.c_str())};
}

// Sparsification runs shared by criteria 7 and 8.
struct SparsifyRun {
  SparsifyTrace coupled, fixed;
  double seconds;
};

SparsifyOptions reduced_options(double J, int m, int n) {
  SparsifyOptions opt;
  opt.N = 10;
  opt.r_max = 3;
  opt.lambdas = default_lambda_schedule(J, m, n, 8);
  opt.admm.max_iter = 50;
  opt.admm.kmin.max_sweeps = 10;
  opt.admm.kmin.gtol_rel = 1e-5;
  return opt;
}

std::vector<SparsifyRun>& ten_state_runs() {
  static std::vector<SparsifyRun> runs = [] {
    std::vector<SparsifyRun> out;
    oracle::Rng rng(606);
    const int n = 10, m = 2;
    while (out.size() < 5) {
      const LtiPlant plant = oracle::random_plant(rng, n, m, n, -0.1);
      const Matrix K = lqr(plant);
      const double margin = delay_margin(plant, K);
      if (!(margin > 0.0)) continue;
      const double tau = 0.7 * std::min(margin, 1.0);
      // Full gain uses the whole delay budget.
      const NetworkModel net(0.01 * m * n / tau, 0.0, 0.01);
      SparsifyOptions opt = reduced_options(h2_norm(plant, K, tau, 10), m, n);
      const auto t0 = Clock::now();
      SparsifyRun run;
      run.coupled = sparsify_run(plant, net, K, tau, opt);
      opt.couple_delay = false;
      run.fixed = sparsify_run(plant, net, K, tau, opt);
      run.seconds = seconds_since(t0);
      std::fprintf(stderr, "  sparsify instance %zu: %.1f s\n", out.size() + 1, run.seconds);
      out.push_back(std::move(run));
    }
    return out;
  }();
  return runs;
}

// Least J per sparsity level over the stable records.
std::map<int, double> best_by_level(const SparsifyTrace& tr) {
  std::map<int, double> best;
  for (const auto& r : tr.records) {
    if (!r.stable || !std::isfinite(r.J)) continue;
    auto [it, fresh] = best.emplace(r.s, r.J);
    if (!fresh) it->second = std::min(it->second, r.J);
  }
  return best;
}

int argmin_level(const std::map<int, double>& curve) {
  return std::min_element(curve.begin(), curve.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
}

// Fewest differences that disagree with "down, then up" over all split points.
int shape_mismatches(const std::map<int, double>& curve) {
  std::vector<double> J;
  for (auto [s, v] : curve) J.push_back(v);
  const int d = static_cast<int>(J.size()) - 1;
  int best = d + 1;
  for (int split = 0; split <= d; ++split) {
    int bad = 0;
    for (int k = 0; k < d; ++k) {
      const double diff = J[k + 1] - J[k];
      bad += k < split ? diff > 0.0 : diff < 0.0;
    }
    best = std::min(best, bad);
  }
  return std::max(best, 0);
}

Outcome c7_sparsify() {
  auto& runs = ten_state_runs();
  int a = 0, b = 0, c = 0, dcount = 0;
  double slowest = 0.0;
  std::string levels;
  for (const auto& run : runs) {
    bool stable = true, polish_ok = true;
    for (const auto* tr : {&run.coupled, &run.fixed})
      for (const auto& r : tr->records) {
        stable = stable && r.stable;
        if (r.i > 0) polish_ok = polish_ok && r.J_after_polish <= r.J_before_polish;
      }
    const auto s2 = best_by_level(run.coupled), s1 = best_by_level(run.fixed);
    const int arg2 = argmin_level(s2), arg1 = argmin_level(s1);
    a += stable;
    b += arg2 >= arg1;
    const int bad = shape_mismatches(s2);
    c += bad <= 1;
    dcount += polish_ok;
    slowest = std::max(slowest, run.seconds);
    levels += fmt(" %d/%d[%d]", arg2, arg1, bad);
  }
  const bool ok = a == 5 && b == 5 && c == 5 && dcount == 5 && slowest < 600.0;
  return {ok, fmt("(a) %d/5 (b) %d/5 (c) %d/5 (d) %d/5; argmin s under S2/S1 [shape mismatches]:%s; slowest %.0f s", a, b, c, dcount,
                  levels.c_str(), slowest)};
}

// Loop whose stable delays form windows away from zero, so shrinking the link
// delay can land between windows.
std::vector<SparsifyTrace> windowed_runs() {
  std::vector<SparsifyTrace> out;
  Matrix A(2, 2), B(2, 1);
  A << 0, 1, -1, 0.1;
  B << 0, 1;
  const LtiPlant plant(A, B, Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Identity(1, 1));
  oracle::Rng rng(808);
  for (int t = 0; t < 40 && out.size() < 6; ++t) {
    Matrix K(1, 2);
    K << rng.uniform(-0.3, 0.3), rng.uniform(-0.8, -0.2);
    const auto iv = stable_intervals(plant, K, 12.0).intervals;
    if (iv.empty()) continue;
    const auto& w = iv.back();
    if (w.lo <= 0.0 || w.hi - w.lo < 0.2 || w.hi > 11.9) continue;
    const double tau = 0.5 * (w.lo + w.hi);
    const NetworkModel net(0.01 * 2 / tau, 0.0, 0.01);
    SparsifyOptions opt;
    opt.N = 16;
    opt.r_max = 3;
    opt.lambdas = default_lambda_schedule(h2_norm(plant, K, tau, 16), 1, 2, 6);
    out.push_back(sparsify_run(plant, net, K, tau, opt));
  }
  return out;
}

Outcome c8_bound() {
  int events = 0, holds = 0, anomalies = 0;
  auto scan = [&](const SparsifyTrace& tr) {
    for (const auto& s : tr.stages) {
      if (!s.had_right_snap) continue;
      ++events;
      holds += s.bound_holds;
      anomalies += s.epsilon_nonpositive;
    }
  };
  for (const auto& run : ten_state_runs()) scan(run.coupled);
  for (const auto& tr : windowed_runs()) scan(tr);
  return {events > 0 && holds == events,
          fmt("%d stages with a right snap, bound holds in %d; epsilon <= 0 (sign anomaly) in %d", events, holds,
              anomalies)};
}

Outcome c9_milp() {
  oracle::Rng rng(909);
  long long points = 0, mismatches = 0;
  for (int t = 0; t < 30; ++t) {
    const auto curves = oracle::random_curves(rng, rng.integer(1, 3), 8);
    const ModifiedCurves mod = modify_curves(curves, rng.uniform(1e-3, 0.5));
    for (const auto& m : mod.curves) {
      const MilpEncoding e = encode_milp(m), base = encode_milp(m.base);
      for (int s = m.base.s.front(); s <= m.base.s.back(); ++s) {
        const auto d = e.decode(Rational(s));
        ++points;
        if (d.size() != 1 || d[0].zt != oracle::modified_at_integer(m.base, m.D, s)) ++mismatches;
        // Unmodified curve: exact interpolation between breakpoints.
        const auto k = std::upper_bound(m.base.s.begin(), m.base.s.end(), s) - m.base.s.begin() - 1;
        Rational expect(m.base.r[k]);
        if (s != m.base.s[k])
          expect += (Rational(m.base.r[k + 1]) - Rational(m.base.r[k])) * (s - m.base.s[k]) /
                    (m.base.s[k + 1] - m.base.s[k]);
        const auto db = base.decode(Rational(s));
        ++points;
        if (db.size() != 1 || db[0].zt != expect) ++mismatches;
      }
    }
  }
  return {mismatches == 0, fmt("%lld integer levels decoded, %lld mismatches", points, mismatches)};
}

struct AllocationCase {
  std::vector<PerfCurve> curves;
  int target;
  AllocationResult result;
  int rank;
};

std::vector<AllocationCase>& allocation_cases(double& seconds) {
  static double spent = 0.0;
  static std::vector<AllocationCase> cases = [] {
    std::vector<AllocationCase> out;
    oracle::Rng rng(1);
    for (int t = 0; t < 50; ++t) {
      const int N = rng.integer(2, 3);
      // Product of levels stays within 5000.
      auto curves = oracle::random_curves(rng, N, N == 2 ? 60 : 17);
      int target = 0;
      for (const auto& c : curves) target += c.s[rng.integer(0, c.p() - 1)];
      const auto t0 = Clock::now();
      AllocationResult r = allocate(curves, target);
      spent += seconds_since(t0);
      const auto ranked = enumerate_oracle(curves, target, 1e-2);
      int rank = 1;
      for (const auto& x : ranked) rank += x.F < r.F_star - 1e-12;
      out.push_back({std::move(curves), target, std::move(r), rank});
    }
    return out;
  }();
  seconds = spent;
  return cases;
}

Outcome c10_allocator() {
  double seconds = 0.0;
  auto& cases = allocation_cases(seconds);
  int feasible = 0, rank1 = 0, rank2 = 0;
  for (const auto& c : cases) {
    bool ok = true;
    int sum = 0;
    for (std::size_t i = 0; i < c.curves.size(); ++i) {
      ok = ok && c.curves[i].find(c.result.s_star[i]) >= 0;
      sum += c.result.s_star[i];
    }
    feasible += ok && sum == c.target;
    rank1 += c.rank == 1;
    rank2 += c.rank <= 2;
  }
  const bool ok = feasible == 50 && rank1 >= 40 && rank2 >= 48 && seconds < 300.0;
  return {ok, fmt("feasible %d/50, rank 1 in %d, rank <= 2 in %d, %.1f s", feasible, rank1, rank2, seconds)};
}

Outcome c11_identities(const AllocationResult& extra) {
  double seconds = 0.0;
  auto& cases = allocation_cases(seconds);
  double worst = 0.0;
  int runs = 0, descent = 0;
  auto check = [&](const AllocationResult& r) {
    double total = 0.0;
    for (std::size_t j = 1; j < r.history.size(); ++j) {
      const auto& h = r.history[j];
      worst = std::max(worst, std::abs((h.F_hat - h.F) - h.delta));
      total += h.delta;
    }
    ++runs;
    descent += r.F_star <= r.history[0].F - total + 1e-12;
  };
  for (const auto& c : cases) check(c.result);
  check(extra);
  return {worst <= 1e-10 && descent == runs,
          fmt("%d runs, worst |F_hat - F - delta| %.1e, descent bound held in %d", runs, worst, descent)};
}

AllocationResult shared_link_run(double& seconds) {
  const auto t0 = Clock::now();
  // 80 and 31 links in use out of 100 entries each.
  AllocationResult r = allocate(oracle::shared_link_curves(4), 89, std::vector<int>{20, 69});
  seconds = seconds_since(t0);
  return r;
}

Outcome c12_shared_link(const AllocationResult& r, double seconds) {
  const bool ok = r.s_star == std::vector<int>{47, 42} && std::abs(r.ratios[0] - r.ratios[1]) <= 0.01 && seconds < 10.0;
  return {ok, fmt("links (%d, %d), ratios (%.4f, %.4f), %d steps, %.2f s", 100 - r.s_star[0], 100 - r.s_star[1],
                  r.ratios[0], r.ratios[1], r.steps, seconds)};
}

}  // namespace

int main() {
  double shared_seconds = 0.0;
  AllocationResult shared;
  std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, c1_link_delay},
      {2, c2_h2_convergence},
      {3, c3_gradient},
      {4, c4_margin},
      {5, c5_certificate},
      {6, c6_precondition},
      {7, c7_sparsify},
      {8, c8_bound},
      {9, c9_milp},
      {10, c10_allocator},
      {11,
       [&] {
         shared = shared_link_run(shared_seconds);
         return c11_identities(shared);
       }},
      {12, [&] { return c12_shared_link(shared, shared_seconds); }},
  };
  int failed = 0;
  for (auto& [id, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("CRITERION %d: %s - %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
