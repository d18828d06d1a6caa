#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "delayh2/allocate.hpp"
#include "delayh2/model.hpp"

namespace delayh2 {

struct PlantConfig {
  std::string name;
  LtiPlant plant;
  std::optional<Matrix> K;
  std::optional<double> tau;
};

struct ScheduleConfig {
  std::vector<double> lambdas;  // empty: default schedule with `count` values
  int count = 20;
  int r_max = 5;
  int N = 0;  // 0: select per plant
  bool couple_delay = true;
};

struct AllocatorConfig {
  std::optional<int> frak_s;  // zeros to place
  std::optional<int> links;   // links kept; frak_s = sum m n - links
  double sigma = 1e-2;
  int max_steps = 20;
  std::optional<std::vector<int>> s0;
  std::vector<PerfCurve> curves;  // from "curves" or "curves_file"
};

struct RunConfig {
  std::filesystem::path source;  // directory used for relative paths
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output_dir;
  std::vector<PlantConfig> plants;
  std::optional<NetworkModel> network;
  ScheduleConfig schedule;
  std::optional<double> tau_max;
  std::optional<AllocatorConfig> allocator;
};

// Parses JSON text. Relative file references resolve against base_dir.
// Every problem is reported as ConfigError.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& file);

// Reads {"users": [{"s": [...], "r": [...]} or {"s": [...], "J": [...]}, ...]}.
std::vector<PerfCurve> parse_curves(const std::string& text);

}  // namespace delayh2
