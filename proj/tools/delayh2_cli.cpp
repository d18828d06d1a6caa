#include <CLI11.hpp>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "delayh2/allocate.hpp"
#include "delayh2/config.hpp"
#include "delayh2/precondition.hpp"
#include "delayh2/sparsify.hpp"
#include "delayh2/spectral.hpp"
#include "delayh2/stability.hpp"

using namespace delayh2;

namespace {

constexpr int kSchema = 1;

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Row-major values separated by spaces inside one CSV field.
std::string matrix_field(const Matrix& M) {
  std::string out;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) out += (out.empty() ? "" : " ") + num(M(i, j));
  return out;
}

Matrix parse_matrix_field(const std::string& field, Eigen::Index rows, Eigen::Index cols) {
  std::istringstream in(field);
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) in >> M(i, j);
  return M;
}

// Gain as written, read back and re-checked at the written delay.
bool round_trip_stable(const LtiPlant& plant, const Matrix& K, double tau) {
  const Matrix back = parse_matrix_field(matrix_field(K), K.rows(), K.cols());
  return is_stable(plant, back, std::stod(num(tau)));
}

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

class Output {
 public:
  Output(std::string command, const RunConfig& cfg) : command_(std::move(command)), cfg_(cfg) {}

  Table& table(const std::string& name, std::vector<std::string> header) {
    tables_.push_back({name, std::move(header), {}});
    return tables_.back();
  }

  // The first table goes to stdout; with an output directory every table is
  // also written as <command>_<name>.csv.
  void emit() const {
    for (std::size_t k = 0; k < tables_.size(); ++k) {
      const std::string text = render(tables_[k]);
      if (k == 0) std::cout << text;
      if (cfg_.output_dir) {
        std::filesystem::create_directories(*cfg_.output_dir);
        const auto path = *cfg_.output_dir / (command_ + "_" + tables_[k].name + ".csv");
        std::ofstream out(path, std::ios::binary);
        if (!out) fail(ErrorCode::ConfigError, "cannot write " + path.string());
        out << text;
      }
    }
  }

 private:
  std::string render(const Table& t) const {
    std::string s = "# delayh2 " + command_ + " " + t.name + " schema=" + std::to_string(kSchema) +
                    " seed=" + std::to_string(cfg_.seed) + "\n";
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
      s += "\n";
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
    return s;
  }

  std::string command_;
  const RunConfig& cfg_;
  std::deque<Table> tables_;
};

void need(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::ConfigError, what);
}

const Matrix& gain(const PlantConfig& p) {
  need(p.K.has_value(), p.name + ": gain K required");
  return *p.K;
}

double delay(const PlantConfig& p) {
  need(p.tau.has_value(), p.name + ": delay tau required");
  return *p.tau;
}

int grid_size(const RunConfig& cfg, const PlantConfig& p, const Matrix& K, double tau) {
  return cfg.schedule.N > 0 ? cfg.schedule.N : select_grid_size(p.plant, K, tau);
}

void cmd_h2norm(const RunConfig& cfg, Output& out) {
  need(!cfg.plants.empty(), "no plants");
  auto& t = out.table("h2", {"plant", "n", "m", "tau", "N", "J"});
  for (const auto& p : cfg.plants) {
    const Matrix& K = gain(p);
    const double tau = delay(p);
    const int N = grid_size(cfg, p, K, tau);
    t.add({p.name, std::to_string(p.plant.n()), std::to_string(p.plant.m()), num(tau), std::to_string(N),
           num(h2_norm(p.plant, K, tau, N))});
  }
}

void cmd_margin(const RunConfig& cfg, Output& out) {
  need(!cfg.plants.empty(), "no plants");
  auto& t = out.table("margin", {"plant", "margin"});
  for (const auto& p : cfg.plants) t.add({p.name, num(delay_margin(p.plant, gain(p)))});
}

void cmd_intervals(const RunConfig& cfg, Output& out) {
  need(!cfg.plants.empty(), "no plants");
  need(cfg.tau_max.has_value(), "tau_max required");
  auto& t = out.table("intervals", {"plant", "lo", "hi"});
  for (const auto& p : cfg.plants)
    for (const auto& iv : stable_intervals(p.plant, gain(p), *cfg.tau_max).intervals)
      t.add({p.name, num(iv.lo), num(iv.hi)});
}

void cmd_precondition(const RunConfig& cfg, Output& out) {
  need(!cfg.plants.empty(), "no plants");
  need(cfg.network.has_value(), "network required");
  auto& res = out.table("result", {"plant", "tau_prime", "c_final", "card", "fast_path", "snapped", "iteration_cap",
                                   "stable", "K_prime"});
  auto& trace = out.table("trace", {"plant", "k", "tau", "card", "accepted"});
  for (const auto& p : cfg.plants) {
    std::cerr << "precondition " << p.name << "\n";
    const PreconditionResult r = precondition(p.plant, *cfg.network, gain(p));
    res.add({p.name, num(r.tau_prime), num(r.c_final), std::to_string(cardinality(r.K_prime)),
             std::to_string(r.fast_path), std::to_string(r.snapped), std::to_string(r.iteration_cap),
             std::to_string(round_trip_stable(p.plant, r.K_prime, r.tau_prime)), matrix_field(r.K_prime)});
    for (const auto& s : r.trace)
      trace.add({p.name, std::to_string(s.k), num(s.tau), std::to_string(s.card), std::to_string(s.accepted)});
  }
}

SparsifyOptions sparsify_options(const RunConfig& cfg, const PlantConfig& p, const Matrix& K, double tau) {
  SparsifyOptions o;
  o.r_max = cfg.schedule.r_max;
  o.couple_delay = cfg.schedule.couple_delay;
  o.N = grid_size(cfg, p, K, tau);
  o.lambdas = cfg.schedule.lambdas;
  if (o.lambdas.empty())
    o.lambdas = default_lambda_schedule(h2_norm(p.plant, K, tau, o.N), p.plant.m(), p.plant.n(), cfg.schedule.count);
  return o;
}

void cmd_sparsify(const RunConfig& cfg, Output& out) {
  need(!cfg.plants.empty(), "no plants");
  need(cfg.network.has_value(), "network required");
  auto& rec = out.table("trace", {"plant", "lambda", "i", "tau", "card", "s", "J", "stable", "snap",
                                  "J_before_polish", "J_after_polish"});
  auto& st = out.table("stages", {"plant", "lambda", "tau_f", "tau_star_f", "J_f", "card_f", "had_right_snap",
                                  "epsilon", "gap", "bound", "bound_holds", "rolled_back", "stable", "K_f"});
  for (const auto& p : cfg.plants) {
    const Matrix& K = gain(p);
    const double tau = delay(p);
    std::cerr << "sparsify " << p.name << "\n";
    const SparsifyTrace tr = sparsify_run(p.plant, *cfg.network, K, tau, sparsify_options(cfg, p, K, tau));
    for (const auto& r : tr.records)
      rec.add({p.name, num(r.lambda), std::to_string(r.i), num(r.tau), std::to_string(r.card), std::to_string(r.s),
               num(r.J), std::to_string(r.stable), snap_case_name(r.snap), num(r.J_before_polish),
               num(r.J_after_polish)});
    for (const auto& s : tr.stages)
      st.add({p.name, num(s.lambda), num(s.tau_f), num(s.tau_star_f), num(s.J_f), std::to_string(s.card_f),
              std::to_string(s.had_right_snap), num(s.epsilon), num(s.gap), num(s.bound),
              std::to_string(s.bound_holds), std::to_string(s.rolled_back),
              std::to_string(round_trip_stable(p.plant, s.K_f, s.tau_f)), matrix_field(s.K_f)});
  }
}

void cmd_allocate(const RunConfig& cfg, Output& out, bool oracle) {
  need(cfg.allocator.has_value(), "allocate section required");
  const AllocatorConfig& al = *cfg.allocator;
  std::vector<PerfCurve> curves = al.curves;
  if (curves.empty()) {
    need(!cfg.plants.empty(), "curves or plants required");
    need(cfg.network.has_value(), "network required to build curves");
    for (std::size_t i = 0; i < cfg.plants.size(); ++i) {
      const auto& p = cfg.plants[i];
      std::cerr << "curve " << p.name << "\n";
      curves.push_back(build_curve(static_cast<int>(i) + 1, p.plant, *cfg.network, gain(p), delay(p),
                                   sparsify_options(cfg, p, gain(p), delay(p))));
    }
  }
  const int N = static_cast<int>(curves.size());
  int frak_s;
  if (al.frak_s) {
    frak_s = *al.frak_s;
  } else {
    int entries = 0;
    for (const auto& c : curves) {
      need(c.entries > 0, "links given but a curve has no entry count");
      entries += c.entries;
    }
    frak_s = entries - *al.links;
  }

  const AllocationResult r = allocate(curves, frak_s, al.s0, al.sigma, al.max_steps);
  auto& res = out.table("result", {"user", "s", "links", "r"});
  for (int i = 0; i < N; ++i)
    res.add({std::to_string(i + 1), std::to_string(r.s_star[i]),
             curves[i].entries > 0 ? std::to_string(curves[i].entries - r.s_star[i]) : "", num(r.ratios[i])});
  std::vector<std::string> head{"step"};
  for (int i = 0; i < N; ++i) head.push_back("s" + std::to_string(i + 1));
  for (const char* h : {"F", "F_hat", "delta"}) head.push_back(h);
  auto& hist = out.table("history", head);
  for (std::size_t k = 0; k < r.history.size(); ++k) {
    const auto& h = r.history[k];
    std::vector<std::string> row{std::to_string(k)};
    for (int x : h.s) row.push_back(std::to_string(x));
    for (double v : {h.F, h.F_hat, h.delta}) row.push_back(num(v));
    hist.add(row);
  }
  auto& summary = out.table("summary", {"frak_s", "sigma", "F_star", "steps", "eps", "eps_shrunk"});
  summary.add({std::to_string(frak_s), num(al.sigma), num(r.F_star), std::to_string(r.steps), num(r.eps),
               std::to_string(r.eps_shrunk)});
  if (oracle) {
    std::vector<std::string> oh{"rank"};
    for (int i = 0; i < N; ++i) oh.push_back("s" + std::to_string(i + 1));
    for (const char* h : {"F", "delta_F", "chosen"}) oh.push_back(h);
    auto& ot = out.table("oracle", oh);
    const auto ranked = enumerate_oracle(curves, frak_s, al.sigma);
    for (std::size_t k = 0; k < ranked.size(); ++k) {
      std::vector<std::string> row{std::to_string(k + 1)};
      for (int x : ranked[k].s) row.push_back(std::to_string(x));
      row.push_back(num(ranked[k].F));
      row.push_back(num(ranked[k].F - ranked[0].F));
      row.push_back(std::to_string(ranked[k].s == r.s_star));
      ot.add(row);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delay-aware sparse H2 feedback design and link allocation"};
  app.require_subcommand(1, 1);
  std::string config_path;
  bool oracle = false;
  std::map<std::string, CLI::App*> subs;
  for (const char* name : {"h2norm", "margin", "intervals", "precondition", "sparsify", "allocate"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "JSON run configuration")->required();
    subs[name] = sub;
  }
  subs["h2norm"]->description("H2 cost of each plant's gain at its delay");
  subs["margin"]->description("Delay margin of each closed loop");
  subs["intervals"]->description("Stable delay intervals up to tau_max");
  subs["precondition"]->description("Find a gain stable at its own link delay");
  subs["sparsify"]->description("Sparsity-promoting design over a lambda schedule");
  subs["allocate"]->description("Share links among users by ratio variance");
  subs["allocate"]->add_flag("--oracle", oracle, "Also rank every feasible allocation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorCode::ConfigError);
  }

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  try {
    const RunConfig cfg = load_config(config_path);
    Output out(command, cfg);
    if (command == "h2norm") cmd_h2norm(cfg, out);
    else if (command == "margin") cmd_margin(cfg, out);
    else if (command == "intervals") cmd_intervals(cfg, out);
    else if (command == "precondition") cmd_precondition(cfg, out);
    else if (command == "sparsify") cmd_sparsify(cfg, out);
    else cmd_allocate(cfg, out, oracle);
    out.emit();
  } catch (const Error& e) {
    std::cerr << "error " << error_name(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error NumericalFailure: " << e.what() << "\n";
    return exit_code(ErrorCode::NumericalFailure);
  }
  return 0;
}
