#pragma once

// Named experiments over the SFT / OS pipeline and the asymptotic theory,
// emitted as schema-stable CSV tables.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "icl/numerics.hpp"

namespace icl {

enum class ExperimentKind {
  kSftSweepB,
  kSftSweepN,
  kSftSweepK,
  kOsSweepB,
  kOsSweepN,
  kOsSweepK,
  kTheoryCurve,
  kCompareTheorySim,
  kGdRateDemo,
};

std::optional<ExperimentKind> parse_experiment(std::string_view name);
std::string_view experiment_name(ExperimentKind kind);
std::vector<std::string_view> experiment_names();

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kSftSweepB;
  Index d = 400;
  Index m = 200;
  std::vector<Index> n{800};
  std::vector<Index> B{400};
  std::vector<Index> k{1};
  /// B / d grid for theory-curve and compare-theory-sim.
  std::vector<double> beta;
  double rho = 0.1;
  double r = 0.01;
  double eta = 0.2;
  /// Fixed GD step; empty selects the experiment's automatic rule.
  std::optional<double> gamma_step;
  Index steps = 200;
  /// SFT sweeps: train by gradient descent instead of the closed form.
  bool use_gd = false;
  /// OS sweeps: CoT steps used at test time and Monte Carlo test prompts.
  Index test_k = 1;
  Index mc_trials = 1000;
  /// OS sweeps: step = os_step_factor / os_hessian_bound(init).
  double os_step_factor = 0.5;
  Index trials = 10;
  std::uint64_t seed = 42;
  /// 0 selects std::thread::hardware_concurrency().
  Index workers = 0;
  std::string out;
};

/// Every violation at once; empty when the config is valid.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

/// Applies one `key = value` setting (keys as in the config file, e.g. "B",
/// "gamma_step"). Throws ConfigError for unknown keys or malformed values.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Parses a flat `key = value` file (TOML-compatible subset: `#` comments,
/// optional quotes, bare numbers, `lo:hi:step` or comma-list grids).
std::map<std::string, std::string> read_config_file(const std::string& path);
std::map<std::string, std::string> parse_config_text(std::string_view text);

std::vector<Index> parse_index_grid(std::string_view text);
std::vector<double> parse_real_grid(std::string_view text);

using Cell = std::variant<std::int64_t, double, std::string>;

struct SweepTable {
  ExperimentKind experiment = ExperimentKind::kSftSweepB;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  /// Seconds spent per row; kept out of the CSV so reruns are byte-identical.
  std::vector<double> wall_time;
};

/// Column names, in order, of the CSV emitted for `kind`.
std::vector<std::string> schema(ExperimentKind kind);

/// Runs the experiment. Throws ConfigError when validation fails. Per-point
/// divergences in sweeps are recorded in the table; in gd-rate-demo they
/// propagate as DivergenceError.
SweepTable run_experiment(const ExperimentConfig& cfg);

/// Shortest round-trip decimal form; "inf", "-inf", "nan" for non-finite.
std::string format_real(double value);
void write_csv(const SweepTable& table, std::ostream& os);
std::string to_csv(const SweepTable& table);

}  // namespace icl
