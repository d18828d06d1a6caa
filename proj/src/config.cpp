#include "delayh2/config.hpp"

#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

namespace delayh2 {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  fail(ErrorCode::ConfigError, where + ": " + what);
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorCode::ConfigError, "cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    bad(where, e.what());
  }
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) bad(where, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) bad(where, "expected an integer");
  return j.get<int>();
}

// Nested row arrays, or a bare number for a 1x1 matrix.
Matrix matrix(const json& j, const std::string& where) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) bad(where, "expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) bad(where, "rows must be non-empty arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) bad(where, "ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = number(row[c], where);
  }
  return M;
}

std::vector<int> int_list(const json& j, const std::string& where) {
  if (!j.is_array()) bad(where, "expected an array");
  std::vector<int> out;
  for (const auto& x : j) out.push_back(integer(x, where));
  return out;
}

std::vector<double> number_list(const json& j, const std::string& where) {
  if (!j.is_array()) bad(where, "expected an array");
  std::vector<double> out;
  for (const auto& x : j) out.push_back(number(x, where));
  return out;
}

void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) bad(where, "unknown key '" + k + "'");
  }
}

// A with spectral abscissa `shift`, B Gaussian, unit weights.
LtiPlant random_plant(const json& r, std::mt19937_64& rng, const std::string& where) {
  only_keys(r, {"n", "m", "shift"}, where);
  if (!r.contains("n") || !r.contains("m")) bad(where, "needs n and m");
  const int n = integer(r["n"], where + ".n"), m = integer(r["m"], where + ".m");
  if (n < 1 || m < 1) bad(where, "n and m must be positive");
  const double shift = r.contains("shift") ? number(r["shift"], where + ".shift") : -0.5;
  std::normal_distribution<double> gauss;
  auto draw = [&](int rows, int cols) {
    Matrix M(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int i = 0; i < rows; ++i) M(i, c) = gauss(rng);
    return M;
  };
  Matrix A = draw(n, n);
  A -= (spectral_abscissa(A) - shift) * Matrix::Identity(n, n);
  const Matrix B = draw(n, m);
  return LtiPlant(A, B, Matrix::Identity(n, n), Matrix::Identity(n, n), Matrix::Identity(m, m));
}

PlantConfig plant(json j, const fs::path& base, std::mt19937_64& rng, const std::string& where) {
  if (j.is_object() && j.contains("file")) {
    if (j.size() != 1) bad(where, "'file' excludes other keys");
    if (!j["file"].is_string()) bad(where + ".file", "expected a path");
    const fs::path file = base / j["file"].get<std::string>();
    if (!fs::exists(file)) bad(where + ".file", "missing file " + file.string());
    j = parse_json(read_file(file), file.string());
  }
  std::string name = where;
  if (j.is_object() && j.contains("name")) {
    if (!j["name"].is_string()) bad(where + ".name", "expected a string");
    name = j["name"].get<std::string>();
  }
  try {
    auto build = [&]() {
      if (j.is_object() && j.contains("random")) {
        only_keys(j, {"name", "random", "K", "tau"}, where);
        return random_plant(j["random"], rng, where + ".random");
      }
      only_keys(j, {"name", "A", "B", "Bw", "Q", "R", "K", "tau"}, where);
      for (const char* key : {"A", "B"})
        if (!j.contains(key)) bad(where, std::string("missing ") + key);
      const Matrix A = matrix(j["A"], where + ".A");
      const Matrix B = matrix(j["B"], where + ".B");
      const auto n = A.rows(), m = B.cols();
      const Matrix Bw = j.contains("Bw") ? matrix(j["Bw"], where + ".Bw") : Matrix::Identity(n, n);
      const Matrix Q = j.contains("Q") ? matrix(j["Q"], where + ".Q") : Matrix::Identity(n, n);
      const Matrix R = j.contains("R") ? matrix(j["R"], where + ".R") : Matrix::Identity(m, m);
      return LtiPlant(A, B, Bw, Q, R);
    };
    PlantConfig pc{name, build(), std::nullopt, std::nullopt};
    if (j.contains("K")) {
      // "zero" is the open-loop gain.
      if (j["K"] == "zero") pc.K = Matrix::Zero(pc.plant.m(), pc.plant.n());
      else pc.K = matrix(j["K"], where + ".K");
      check_gain_shape(pc.plant, *pc.K);
    }
    if (j.contains("tau")) {
      pc.tau = number(j["tau"], where + ".tau");
      if (!(*pc.tau >= 0.0)) bad(where + ".tau", "must be nonnegative");
    }
    return pc;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    bad(where, e.what());
  }
}

std::vector<PerfCurve> curves(const json& j, const std::string& where) {
  only_keys(j, {"users"}, where);
  if (!j.contains("users") || !j["users"].is_array() || j["users"].empty()) bad(where, "expected a users array");
  std::vector<PerfCurve> out;
  int user = 0;
  for (const auto& u : j["users"]) {
    const std::string w = where + ".users[" + std::to_string(user++) + "]";
    only_keys(u, {"s", "r", "J", "entries"}, w);
    if (!u.contains("s") || (u.contains("r") == u.contains("J"))) bad(w, "needs s and exactly one of r, J");
    try {
      PerfCurve c;
      if (u.contains("J")) {
        c = PerfCurve::from_costs(user, int_list(u["s"], w + ".s"), number_list(u["J"], w + ".J"));
      } else {
        c.user = user;
        c.s = int_list(u["s"], w + ".s");
        c.r = number_list(u["r"], w + ".r");
        c.validate();
      }
      if (u.contains("entries")) c.entries = integer(u["entries"], w + ".entries");
      out.push_back(std::move(c));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigError) throw;
      bad(w, e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<PerfCurve> parse_curves(const std::string& text) { return curves(parse_json(text, "curves"), "curves"); }

RunConfig parse_config(const std::string& text, const fs::path& base) {
  const json j = parse_json(text, "config");
  only_keys(j, {"seed", "output_dir", "plants", "network", "schedule", "tau_max", "allocate"}, "config");
  RunConfig cfg;
  cfg.source = base;

  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) bad("seed", "expected a nonnegative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) bad("output_dir", "expected a path");
    cfg.output_dir = base / j["output_dir"].get<std::string>();
  }
  if (j.contains("plants")) {
    if (!j["plants"].is_array()) bad("plants", "expected an array");
    std::mt19937_64 rng(cfg.seed);
    for (std::size_t i = 0; i < j["plants"].size(); ++i)
      cfg.plants.push_back(plant(j["plants"][i], base, rng, "plants[" + std::to_string(i) + "]"));
  }
  if (j.contains("network")) {
    const json& n = j["network"];
    only_keys(n, {"c", "tau_p", "kappa"}, "network");
    for (const char* key : {"c", "tau_p", "kappa"})
      if (!n.contains(key)) bad("network", std::string("missing ") + key);
    const double c = number(n["c"], "network.c"), tau_p = number(n["tau_p"], "network.tau_p"),
                 kappa = number(n["kappa"], "network.kappa");
    if (!(c > 0.0) || !(tau_p >= 0.0) || !(kappa >= 0.0))
      bad("network", "c must be positive, tau_p and kappa nonnegative");
    cfg.network = NetworkModel(c, tau_p, kappa);
  }
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    only_keys(s, {"lambdas", "count", "r_max", "N", "couple_delay"}, "schedule");
    if (s.contains("lambdas")) cfg.schedule.lambdas = number_list(s["lambdas"], "schedule.lambdas");
    if (s.contains("count")) cfg.schedule.count = integer(s["count"], "schedule.count");
    if (s.contains("r_max")) cfg.schedule.r_max = integer(s["r_max"], "schedule.r_max");
    if (s.contains("N")) cfg.schedule.N = integer(s["N"], "schedule.N");
    if (s.contains("couple_delay")) {
      if (!s["couple_delay"].is_boolean()) bad("schedule.couple_delay", "expected a boolean");
      cfg.schedule.couple_delay = s["couple_delay"].get<bool>();
    }
    for (double l : cfg.schedule.lambdas)
      if (!(l >= 0.0)) bad("schedule.lambdas", "values must be nonnegative");
    if (cfg.schedule.count < 1 || cfg.schedule.r_max < 1 || cfg.schedule.N < 0)
      bad("schedule", "count and r_max must be positive, N nonnegative");
  }
  if (j.contains("tau_max")) {
    cfg.tau_max = number(j["tau_max"], "tau_max");
    if (!(*cfg.tau_max > 0.0)) bad("tau_max", "must be positive");
  }
  if (j.contains("allocate")) {
    const json& a = j["allocate"];
    only_keys(a, {"frak_s", "links", "sigma", "max_steps", "s0", "curves", "curves_file"}, "allocate");
    AllocatorConfig al;
    if (a.contains("frak_s") == a.contains("links")) bad("allocate", "give exactly one of frak_s and links");
    if (a.contains("frak_s")) al.frak_s = integer(a["frak_s"], "allocate.frak_s");
    if (a.contains("links")) al.links = integer(a["links"], "allocate.links");
    if (a.contains("sigma")) al.sigma = number(a["sigma"], "allocate.sigma");
    if (a.contains("max_steps")) al.max_steps = integer(a["max_steps"], "allocate.max_steps");
    if (a.contains("s0")) al.s0 = int_list(a["s0"], "allocate.s0");
    if (!(al.sigma > 0.0) || al.max_steps < 1) bad("allocate", "sigma and max_steps must be positive");
    if (a.contains("curves") && a.contains("curves_file")) bad("allocate", "curves and curves_file exclude each other");
    if (a.contains("curves")) al.curves = curves(a["curves"], "allocate.curves");
    if (a.contains("curves_file")) {
      if (!a["curves_file"].is_string()) bad("allocate.curves_file", "expected a path");
      const fs::path file = base / a["curves_file"].get<std::string>();
      if (!fs::exists(file)) bad("allocate.curves_file", "missing file " + file.string());
      al.curves = curves(parse_json(read_file(file), file.string()), file.string());
    }
    cfg.allocator = std::move(al);
  }
  return cfg;
}

RunConfig load_config(const fs::path& file) {
  if (!fs::exists(file)) fail(ErrorCode::ConfigError, "missing config " + file.string());
  return parse_config(read_file(file), file.parent_path().empty() ? fs::path(".") : file.parent_path());
}

}  // namespace delayh2
