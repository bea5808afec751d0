#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "icl/errors.hpp"
#include "icl/harness.hpp"
#include "icl/rmt_theory.hpp"

namespace icl {
namespace {

struct NamedKind {
  std::string_view name;
  ExperimentKind kind;
};

constexpr NamedKind kKinds[] = {
    {"sft-sweep-B", ExperimentKind::kSftSweepB},
    {"sft-sweep-n", ExperimentKind::kSftSweepN},
    {"sft-sweep-k", ExperimentKind::kSftSweepK},
    {"os-sweep-B", ExperimentKind::kOsSweepB},
    {"os-sweep-n", ExperimentKind::kOsSweepN},
    {"os-sweep-k", ExperimentKind::kOsSweepK},
    {"theory-curve", ExperimentKind::kTheoryCurve},
    {"compare-theory-sim", ExperimentKind::kCompareTheorySim},
    {"gd-rate-demo", ExperimentKind::kGdRateDemo},
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string_view unquote(std::string_view s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
  text = trim(text);
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("cannot parse " + std::string(what) + " from '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("cannot parse boolean from '" + std::string(text) + "'");
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(trim(text.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <typename T>
bool strictly_increasing(const std::vector<T>& xs) {
  return std::adjacent_find(xs.begin(), xs.end(), [](T a, T b) { return !(a < b); }) == xs.end();
}

bool is_sweep(ExperimentKind k) {
  return k != ExperimentKind::kTheoryCurve && k != ExperimentKind::kCompareTheorySim &&
         k != ExperimentKind::kGdRateDemo;
}

bool is_os(ExperimentKind k) {
  return k == ExperimentKind::kOsSweepB || k == ExperimentKind::kOsSweepN ||
         k == ExperimentKind::kOsSweepK;
}

}  // namespace

std::optional<ExperimentKind> parse_experiment(std::string_view name) {
  for (const auto& nk : kKinds) {
    if (nk.name == name) return nk.kind;
  }
  return std::nullopt;
}

std::string_view experiment_name(ExperimentKind kind) {
  for (const auto& nk : kKinds) {
    if (nk.kind == kind) return nk.name;
  }
  return "unknown";
}

std::vector<std::string_view> experiment_names() {
  std::vector<std::string_view> names;
  for (const auto& nk : kKinds) names.push_back(nk.name);
  return names;
}

std::vector<Index> parse_index_grid(std::string_view text) {
  text = trim(unquote(trim(text)));
  if (text.empty()) throw ConfigError("empty grid");
  std::vector<Index> out;
  if (text.find(':') != std::string_view::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw ConfigError("grid must be lo:hi:step, got '" + std::string(text) + "'");
    const auto lo = parse_number<long long>(parts[0], "grid start");
    const auto hi = parse_number<long long>(parts[1], "grid end");
    const auto step = parse_number<long long>(parts[2], "grid step");
    if (step <= 0) throw ConfigError("grid step must be positive");
    for (long long v = lo; v <= hi; v += step) out.push_back(static_cast<Index>(v));
  } else {
    for (auto part : split(text, ',')) {
      out.push_back(static_cast<Index>(parse_number<long long>(part, "grid value")));
    }
  }
  return out;
}

std::vector<double> parse_real_grid(std::string_view text) {
  text = trim(unquote(trim(text)));
  if (text.empty()) throw ConfigError("empty grid");
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw ConfigError("grid must be lo:hi:step, got '" + std::string(text) + "'");
    const double lo = parse_number<double>(parts[0], "grid start");
    const double hi = parse_number<double>(parts[1], "grid end");
    const double step = parse_number<double>(parts[2], "grid step");
    if (!(step > 0.0)) throw ConfigError("grid step must be positive");
    for (long long i = 0;; ++i) {
      const double v = lo + static_cast<double>(i) * step;
      if (v > hi + 1e-9 * step) break;
      out.push_back(v);
    }
  } else {
    for (auto part : split(text, ',')) out.push_back(parse_number<double>(part, "grid value"));
  }
  return out;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view raw) {
  key = trim(key);
  const std::string_view value = unquote(trim(raw));
  if (key == "experiment") {
    auto kind = parse_experiment(value);
    if (!kind) throw ConfigError("unknown experiment '" + std::string(value) + "'");
    cfg.experiment = *kind;
  } else if (key == "d") {
    cfg.d = parse_number<Index>(value, "d");
  } else if (key == "m") {
    cfg.m = parse_number<Index>(value, "m");
  } else if (key == "n") {
    cfg.n = parse_index_grid(value);
  } else if (key == "B") {
    cfg.B = parse_index_grid(value);
  } else if (key == "k") {
    cfg.k = parse_index_grid(value);
  } else if (key == "beta") {
    cfg.beta = parse_real_grid(value);
  } else if (key == "rho") {
    cfg.rho = parse_number<double>(value, "rho");
  } else if (key == "r") {
    cfg.r = parse_number<double>(value, "r");
  } else if (key == "eta") {
    cfg.eta = parse_number<double>(value, "eta");
  } else if (key == "gamma_step") {
    if (value == "auto") {
      cfg.gamma_step.reset();
    } else {
      cfg.gamma_step = parse_number<double>(value, "gamma_step");
    }
  } else if (key == "steps") {
    cfg.steps = parse_number<Index>(value, "steps");
  } else if (key == "use_gd") {
    cfg.use_gd = parse_bool(value);
  } else if (key == "test_k") {
    cfg.test_k = parse_number<Index>(value, "test_k");
  } else if (key == "mc_trials") {
    cfg.mc_trials = parse_number<Index>(value, "mc_trials");
  } else if (key == "os_step_factor") {
    cfg.os_step_factor = parse_number<double>(value, "os_step_factor");
  } else if (key == "trials") {
    cfg.trials = parse_number<Index>(value, "trials");
  } else if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(value, "seed");
  } else if (key == "workers") {
    cfg.workers = parse_number<Index>(value, "workers");
  } else if (key == "out") {
    cfg.out = std::string(value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  const ExperimentKind kind = cfg.experiment;
  const bool theory = kind == ExperimentKind::kTheoryCurve || kind == ExperimentKind::kCompareTheorySim;

  if (cfg.d < 2) errors.push_back("d must be >= 2");
  if (cfg.m >= cfg.d) errors.push_back("m must be < d");
  if (cfg.m <= 0) errors.push_back("m must be > 0");
  if (!(cfg.rho >= 0.0)) errors.push_back("rho must be >= 0");
  if (!(cfg.r >= 0.0)) errors.push_back("r must be >= 0");
  if (!(cfg.eta > 0.0 && cfg.eta < 1.0)) errors.push_back("eta must lie in (0, 1)");

  auto check_index_grid = [&](const std::vector<Index>& g, const char* name) {
    if (g.empty()) {
      errors.push_back(std::string(name) + " grid is empty");
      return;
    }
    if (!strictly_increasing(g)) errors.push_back(std::string(name) + " grid must be strictly increasing");
    if (*std::min_element(g.begin(), g.end()) < 1) {
      errors.push_back(std::string(name) + " values must be >= 1");
    }
  };
  check_index_grid(cfg.n, "n");
  check_index_grid(cfg.B, "B");
  check_index_grid(cfg.k, "k");

  if (kind == ExperimentKind::kTheoryCurve) {
    if (cfg.trials < 0) errors.push_back("trials must be >= 0");
  } else if (cfg.trials < 1) {
    errors.push_back("trials must be >= 1");
  }
  if (cfg.steps < 0) errors.push_back("steps must be >= 0");
  if (cfg.workers < 0) errors.push_back("workers must be >= 0");
  if (cfg.gamma_step && !(*cfg.gamma_step > 0.0)) errors.push_back("gamma_step must be > 0");

  if (is_sweep(kind)) {
    const bool swept_n = kind == ExperimentKind::kSftSweepN || kind == ExperimentKind::kOsSweepN;
    const bool swept_b = kind == ExperimentKind::kSftSweepB || kind == ExperimentKind::kOsSweepB;
    const bool swept_k = kind == ExperimentKind::kSftSweepK || kind == ExperimentKind::kOsSweepK;
    if (!swept_n && cfg.n.size() > 1) errors.push_back("only one swept variable allowed: n must be a single value");
    if (!swept_b && cfg.B.size() > 1) errors.push_back("only one swept variable allowed: B must be a single value");
    if (!swept_k && cfg.k.size() > 1) errors.push_back("only one swept variable allowed: k must be a single value");
    if (!cfg.beta.empty()) errors.push_back("beta grid is only used by theory-curve and compare-theory-sim");
  }
  if (is_os(kind)) {
    if (cfg.test_k < 1) errors.push_back("test_k must be >= 1");
    if (cfg.mc_trials < 1) errors.push_back("mc_trials must be >= 1");
    if (!(cfg.os_step_factor > 0.0)) errors.push_back("os_step_factor must be > 0");
  }
  if (kind == ExperimentKind::kGdRateDemo) {
    if (cfg.n.size() > 1 || cfg.B.size() > 1 || cfg.k.size() > 1) {
      errors.push_back("gd-rate-demo takes single values of n, B and k");
    }
  }
  if (theory) {
    if (cfg.beta.empty()) {
      errors.push_back("beta grid is empty");
    } else {
      if (!strictly_increasing(cfg.beta)) errors.push_back("beta grid must be strictly increasing");
      for (double b : cfg.beta) {
        if (!(b >= 0.0)) {
          errors.push_back("beta values must be >= 0");
          break;
        }
      }
      for (double b : cfg.beta) {
        if (std::abs(b - 1.0) <= kPoleGuard) {
          errors.push_back("beta grid contains " + format_real(b) +
                           ", within the pole guard |beta - 1| <= 1e-6 of the pole at beta = 1");
          break;
        }
      }
    }
    if (!(cfg.r > 0.0)) errors.push_back("r must be > 0 for the asymptotic theory (pole at r = 0)");
    if (cfg.n.size() > 1) errors.push_back("theory experiments take a single n");
    if (kind == ExperimentKind::kCompareTheorySim) {
      for (double b : cfg.beta) {
        if (std::llround(b * static_cast<double>(cfg.d)) < 1) {
          errors.push_back("every beta must give B = round(beta * d) >= 1");
          break;
        }
      }
    }
  }
  return errors;
}

}  // namespace icl
