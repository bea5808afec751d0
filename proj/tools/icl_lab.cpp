// icl-lab: runs a named experiment and writes its CSV table.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "icl/errors.hpp"
#include "icl/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Flag {
  const char* key;
  const char* flag;
  const char* help;
};

// Every flag maps onto a config-file key and is applied after the file.
constexpr Flag kFlags[] = {
    {"d", "--d", "ambient dimension"},
    {"m", "--m", "size of the pretrain-aligned block"},
    {"n", "--n", "prompt length (value, lo:hi:step or comma list)"},
    {"B", "--B", "number of post-training prompts (value or grid)"},
    {"k", "--k", "CoT steps during post-training (value or grid)"},
    {"beta", "--beta", "B/d grid for theory-curve and compare-theory-sim"},
    {"rho", "--rho", "pretrain scale of the aligned block"},
    {"r", "--r", "post-train scale of the weak block"},
    {"eta", "--eta", "CoT step size eta in (0, 1)"},
    {"gamma_step", "--gamma-step", "GD step size, or 'auto'"},
    {"steps", "--steps", "GD step budget"},
    {"use_gd", "--use-gd", "SFT sweeps: train by GD instead of the closed form (true/false)"},
    {"test_k", "--test-k", "OS sweeps: CoT steps at test time"},
    {"mc_trials", "--mc-trials", "OS sweeps: Monte Carlo test prompts per trial"},
    {"os_step_factor", "--os-step-factor", "OS sweeps: step = factor / Hessian bound"},
    {"trials", "--trials", "independent repetitions"},
    {"seed", "--seed", "master seed"},
    {"workers", "--workers", "worker threads (0 = hardware concurrency)"},
    {"out", "--out", "output CSV path (stdout when omitted)"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chain-of-thought in-context learning lab"};
  app.set_version_flag("--version", "icl-lab 0.1.0");

  std::string experiment;
  std::string config_path;
  bool list = false;
  std::vector<std::string> values(std::size(kFlags));

  app.add_option("experiment", experiment, "experiment name (see --list)");
  app.add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
  app.add_flag("--list", list, "list experiment names and exit");
  for (std::size_t i = 0; i < std::size(kFlags); ++i) {
    app.add_option(kFlags[i].flag, values[i], kFlags[i].help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (list) {
    for (auto name : icl::experiment_names()) std::cout << name << '\n';
    return kExitOk;
  }

  icl::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) {
      for (const auto& [key, value] : icl::read_config_file(config_path)) {
        icl::apply_setting(cfg, key, value);
      }
    }
    if (!experiment.empty()) {
      icl::apply_setting(cfg, "experiment", experiment);
    } else if (config_path.empty()) {
      std::cerr << "icl-lab: no experiment given (positional argument or 'experiment' key)\n";
      return kExitConfig;
    }
    for (std::size_t i = 0; i < std::size(kFlags); ++i) {
      if (app.count(kFlags[i].flag) > 0) icl::apply_setting(cfg, kFlags[i].key, values[i]);
    }
  } catch (const icl::ConfigError& e) {
    std::cerr << "icl-lab: " << e.what() << '\n';
    return kExitConfig;
  }

  const auto errors = icl::validate_config(cfg);
  if (!errors.empty()) {
    std::cerr << "icl-lab: invalid configuration\n";
    for (const auto& e : errors) std::cerr << "  - " << e << '\n';
    return kExitConfig;
  }

  icl::SweepTable table;
  try {
    table = icl::run_experiment(cfg);
  } catch (const icl::ConfigError& e) {
    std::cerr << "icl-lab: " << e.what() << '\n';
    return kExitConfig;
  } catch (const icl::DivergenceError& e) {
    std::cerr << "icl-lab: aborted, divergence at step " << e.step() << ": " << e.what() << '\n';
    return kExitDivergence;
  } catch (const icl::Error& e) {
    std::cerr << "icl-lab: " << e.what() << '\n';
    return kExitFailure;
  }

  if (cfg.out.empty()) {
    icl::write_csv(table, std::cout);
  } else {
    std::ofstream os(cfg.out);
    if (!os) {
      std::cerr << "icl-lab: cannot write '" << cfg.out << "'\n";
      return kExitFailure;
    }
    icl::write_csv(table, os);
  }

  double total = 0.0;
  for (double t : table.wall_time) total += t;
  std::cerr << "icl-lab: " << icl::experiment_name(cfg.experiment) << ", " << table.rows.size()
            << " rows, wall_time " << total << " s\n";
  return kExitOk;
}
