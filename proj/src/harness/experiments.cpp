#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>

#include "icl/errors.hpp"
#include "icl/evaluator.hpp"
#include "icl/harness.hpp"
#include "icl/lsa_model.hpp"
#include "icl/os_trainer.hpp"
#include "icl/rmt_theory.hpp"
#include "icl/sft_trainer.hpp"
#include "icl/task_data.hpp"

namespace icl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Runs fn(0..count-1) on a pool and returns results in task order. The first
/// exception (by task index) is rethrown after all workers have joined.
template <typename R>
std::vector<R> parallel_map(Index count, Index workers, const std::function<R(Index)>& fn) {
  std::vector<R> results(static_cast<std::size_t>(count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  Index pool = workers > 0 ? workers : static_cast<Index>(std::thread::hardware_concurrency());
  pool = std::clamp<Index>(pool, 1, std::max<Index>(count, 1));
  std::atomic<Index> next{0};
  auto work = [&] {
    for (Index i = next++; i < count; i = next++) {
      try {
        results[static_cast<std::size_t>(i)] = fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (pool == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (Index t = 0; t < pool; ++t) threads.emplace_back(work);
    for (auto& th : threads) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

struct MeanStderr {
  double mean = kInf;
  double stderr_ = kInf;
  Index finite = 0;
};

MeanStderr summarize(const std::vector<double>& xs) {
  MeanStderr out;
  double sum = 0.0;
  for (double x : xs) {
    if (std::isfinite(x)) {
      sum += x;
      ++out.finite;
    }
  }
  if (out.finite == 0) return out;
  out.mean = sum / static_cast<double>(out.finite);
  if (out.finite == 1) {
    out.stderr_ = 0.0;
    return out;
  }
  double ss = 0.0;
  for (double x : xs) {
    if (std::isfinite(x)) ss += (x - out.mean) * (x - out.mean);
  }
  const double nf = static_cast<double>(out.finite);
  out.stderr_ = std::sqrt(ss / (nf - 1.0) / nf);
  return out;
}

struct Setting {
  Matrix sigma0;
  Matrix A;
  Matrix sigma_test;
};

Setting make_setting(const ExperimentConfig& cfg) {
  Setting s;
  s.sigma0 = materialize(CovarianceSpec::pretrain(cfg.d, cfg.m, cfg.rho));
  s.A = materialize(CovarianceSpec::posttrain(cfg.d, cfg.m, cfg.rho, cfg.r, cfg.eta));
  s.sigma_test = materialize(CovarianceSpec::posttest(cfg.d, cfg.m, cfg.rho));
  return s;
}

/// Normalized theory prediction at (B, n), NaN where the theory is silent
/// (r = 0, or inside the pole guard).
double theory_f_or_nan(const ExperimentConfig& cfg, Index n, Index b) {
  if (!(cfg.r > 0.0)) return kNaN;
  TheoryInputs inp;
  inp.rho = cfg.rho;
  inp.r = cfg.r;
  inp.eta = cfg.eta;
  inp.gamma = static_cast<double>(cfg.d) / static_cast<double>(n);
  inp.mu1 = static_cast<double>(cfg.m) / static_cast<double>(cfg.d);
  inp.beta = static_cast<double>(b) / static_cast<double>(cfg.d);
  try {
    return theory_components(inp).f;
  } catch (const DomainError&) {
    return kNaN;
  }
}

// --- sweeps --------------------------------------------------------------

enum class Swept { kB, kN, kK };

Swept swept_of(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kSftSweepN:
    case ExperimentKind::kOsSweepN:
      return Swept::kN;
    case ExperimentKind::kSftSweepK:
    case ExperimentKind::kOsSweepK:
      return Swept::kK;
    default:
      return Swept::kB;
  }
}

const char* swept_name(Swept s) {
  switch (s) {
    case Swept::kN:
      return "n";
    case Swept::kK:
      return "k";
    default:
      return "B";
  }
}

struct GridPoint {
  Index n, b, k, value;
};

std::vector<GridPoint> sweep_grid(const ExperimentConfig& cfg, Swept swept) {
  std::vector<GridPoint> grid;
  const std::vector<Index>& axis = swept == Swept::kN ? cfg.n : swept == Swept::kK ? cfg.k : cfg.B;
  for (Index v : axis) {
    GridPoint p{cfg.n.front(), cfg.B.front(), cfg.k.front(), v};
    (swept == Swept::kN ? p.n : swept == Swept::kK ? p.k : p.b) = v;
    grid.push_back(p);
  }
  return grid;
}

struct PointOutcome {
  double error = kInf;
  Index mc_divergent = 0;
  double init_radius = kNaN;
  double final_radius = kNaN;
  double final_unstable = kNaN;
  double seconds = 0.0;
};

using TrialOutcome = std::vector<PointOutcome>;

/// Batch for every grid point of one trial. Prompt tau always comes from the
/// same substream, so a B sweep reuses nested prefixes of one large batch.
template <typename Gen>
PromptBatch batch_for(const GridPoint& p, Swept swept, Index b_max, const Gen& gen,
                      std::optional<PromptBatch>& cache) {
  if (swept == Swept::kB) {
    if (!cache) cache = gen(p.n, b_max);
    return cache->prefix(p.b);
  }
  if (swept == Swept::kK) {
    if (!cache) cache = gen(p.n, p.b);
    return *cache;
  }
  return gen(p.n, p.b);
}

std::string sft_step_rule(const ExperimentConfig& cfg) {
  if (!cfg.use_gd) return "none";
  if (cfg.gamma_step) return "fixed:" + format_real(*cfg.gamma_step);
  return "auto:B/(c_k*lambda_max)";
}

std::string os_step_rule(const ExperimentConfig& cfg) {
  if (cfg.gamma_step) return "fixed:" + format_real(*cfg.gamma_step);
  return "auto:" + format_real(cfg.os_step_factor) + "/hessian_bound";
}

TrialOutcome run_sft_trial(const ExperimentConfig& cfg, const Setting& s,
                           const std::vector<GridPoint>& grid, Swept swept, Index trial) {
  const RngStream root(cfg.seed, static_cast<std::uint64_t>(trial));
  const Index b_max = cfg.B.back();
  auto gen = [&](Index n, Index b) {
    RngStream data = root.split(0);
    return gen_prompt_signals(s.A, b, n, data);
  };
  std::optional<PromptBatch> cache;
  TrialOutcome out;
  for (const GridPoint& p : grid) {
    const auto start = Clock::now();
    PointOutcome po;
    const PromptBatch batch = batch_for(p, swept, b_max, gen, cache);
    const Matrix g0inv = gamma0_inverse(s.sigma0, p.n);
    Matrix value;
    try {
      if (cfg.use_gd) {
        SftConfig sc;
        sc.eta = cfg.eta;
        sc.k = p.k;
        sc.step = cfg.gamma_step;
        sc.steps = cfg.steps;
        value = sft_gd(pretrained_init(s.sigma0, p.n), batch, sc).params.value;
      } else {
        value = sft_minimizer(batch.signal, batch.omega, g0inv, cfg.eta);
      }
      po.error = posttest_error_exact(value, s.sigma_test, p.n);
    } catch (const NumericalError&) {
      po.error = kInf;
    }
    if (!std::isfinite(po.error)) po.error = kInf;
    po.seconds = seconds_since(start);
    out.push_back(po);
  }
  return out;
}

TrialOutcome run_os_trial(const ExperimentConfig& cfg, const Setting& s,
                          const std::vector<GridPoint>& grid, Swept swept, Index trial) {
  const RngStream root(cfg.seed, static_cast<std::uint64_t>(trial));
  const Index b_max = cfg.B.back();
  // OS post-training prompts come from the new task itself, Sigma0 + Delta.
  auto gen = [&](Index n, Index b) {
    RngStream data = root.split(0);
    return gen_prompt_batch(s.sigma_test, b, n, data);
  };
  std::optional<PromptBatch> cache;
  TrialOutcome out;
  for (const GridPoint& p : grid) {
    const auto start = Clock::now();
    PointOutcome po;
    const PromptBatch batch = batch_for(p, swept, b_max, gen, cache);
    const LsaParams init = pretrained_init(s.sigma0, p.n);
    po.init_radius = stability_report(init.value, batch, p.k).mean_radius;
    OsConfig oc;
    oc.k = p.k;
    oc.steps = cfg.steps;
    oc.telemetry_every = 0;
    try {
      oc.step = cfg.gamma_step ? *cfg.gamma_step
                               : os_auto_step(init.value, batch, p.k, cfg.os_step_factor);
      const OsGdResult trained = os_gd(init, batch, oc);
      const StabilityReport fin = stability_report(trained.params.value, batch, p.k);
      po.final_radius = fin.mean_radius;
      po.final_unstable = fin.fraction_unstable;
      RngStream eval = root.split(1);
      const ErrorReport rep =
          posttest_error_mc(trained.params, s.sigma_test, p.n, cfg.test_k, cfg.mc_trials, eval);
      po.error = rep.mc_mean;
      po.mc_divergent = rep.divergent;
    } catch (const NumericalError&) {
      po.error = kInf;
    }
    if (!std::isfinite(po.error)) po.error = kInf;
    po.seconds = seconds_since(start);
    out.push_back(po);
  }
  return out;
}

SweepTable run_sweep(const ExperimentConfig& cfg) {
  const bool os = cfg.experiment == ExperimentKind::kOsSweepB ||
                  cfg.experiment == ExperimentKind::kOsSweepN ||
                  cfg.experiment == ExperimentKind::kOsSweepK;
  const Swept swept = swept_of(cfg.experiment);
  const std::vector<GridPoint> grid = sweep_grid(cfg, swept);
  const Setting setting = make_setting(cfg);

  const std::function<TrialOutcome(Index)> task = [&](Index trial) {
    return os ? run_os_trial(cfg, setting, grid, swept, trial)
              : run_sft_trial(cfg, setting, grid, swept, trial);
  };
  const std::vector<TrialOutcome> trials = parallel_map(cfg.trials, cfg.workers, task);

  SweepTable table;
  table.experiment = cfg.experiment;
  table.columns = schema(cfg.experiment);
  const std::string name(experiment_name(cfg.experiment));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const GridPoint& p = grid[g];
    std::vector<double> errors, init_r, final_r, unstable;
    Index diverged = 0;
    Index mc_divergent = 0;
    double seconds = 0.0;
    for (const TrialOutcome& t : trials) {
      const PointOutcome& po = t[g];
      errors.push_back(po.error);
      if (!std::isfinite(po.error)) ++diverged;
      mc_divergent += po.mc_divergent;
      init_r.push_back(po.init_radius);
      final_r.push_back(po.final_radius);
      unstable.push_back(po.final_unstable);
      seconds += po.seconds;
    }
    const MeanStderr e = summarize(errors);
    std::vector<Cell> row{name,
                          std::string(swept_name(swept)),
                          std::int64_t{p.value},
                          std::int64_t{cfg.d},
                          std::int64_t{cfg.m},
                          std::int64_t{p.n},
                          std::int64_t{p.b},
                          std::int64_t{p.k},
                          cfg.rho,
                          cfg.r,
                          cfg.eta,
                          std::int64_t{cfg.trials},
                          static_cast<std::int64_t>(cfg.seed)};
    if (os) {
      const auto mean_or_nan = [](const std::vector<double>& xs) {
        const MeanStderr m = summarize(xs);
        return m.finite ? m.mean : kNaN;
      };
      row.insert(row.end(), {Cell{os_step_rule(cfg)}, Cell{std::int64_t{cfg.steps}},
                             Cell{std::int64_t{cfg.test_k}}, Cell{std::int64_t{cfg.mc_trials}},
                             Cell{e.mean}, Cell{e.stderr_}, Cell{mean_or_nan(init_r)},
                             Cell{mean_or_nan(final_r)}, Cell{mean_or_nan(unstable)},
                             Cell{std::int64_t{diverged}}, Cell{std::int64_t{mc_divergent}}});
    } else {
      row.insert(row.end(),
                 {Cell{std::string(cfg.use_gd ? "gd" : "closed-form")}, Cell{sft_step_rule(cfg)},
                  Cell{e.mean}, Cell{e.stderr_}, Cell{theory_f_or_nan(cfg, p.n, p.b)},
                  Cell{std::int64_t{diverged}}});
    }
    table.rows.push_back(std::move(row));
    table.wall_time.push_back(seconds);
  }
  return table;
}

// --- theory --------------------------------------------------------------

TheoryInputs theory_inputs(const ExperimentConfig& cfg, double beta) {
  TheoryInputs inp;
  inp.rho = cfg.rho;
  inp.r = cfg.r;
  inp.eta = cfg.eta;
  inp.gamma = static_cast<double>(cfg.d) / static_cast<double>(cfg.n.front());
  inp.mu1 = static_cast<double>(cfg.m) / static_cast<double>(cfg.d);
  inp.beta = beta;
  return inp;
}

SweepTable run_theory_curve(const ExperimentConfig& cfg) {
  SweepTable table;
  table.experiment = cfg.experiment;
  table.columns = schema(cfg.experiment);
  for (double beta : cfg.beta) {
    const auto start = Clock::now();
    const TheoryInputs inp = theory_inputs(cfg, beta);
    const TheoryComponents c = theory_components(inp);
    table.rows.push_back({std::string("theory-curve"), beta, std::int64_t{cfg.d},
                          std::int64_t{cfg.m}, std::int64_t{cfg.n.front()}, cfg.rho, cfg.r,
                          cfg.eta, inp.gamma, inp.mu1, c.q, std::int64_t{c.saturated ? 1 : 0},
                          c.w1, c.w2, c.v1, c.v2, c.t12, c.bias, c.t_inv, c.t_inv_sigma, c.t_var,
                          c.t_var_sigma, c.f});
    table.wall_time.push_back(seconds_since(start));
  }
  return table;
}

SweepTable run_compare(const ExperimentConfig& cfg) {
  const Setting s = make_setting(cfg);
  const Index n = cfg.n.front();
  const double df = static_cast<double>(cfg.d);
  std::vector<Index> bs;
  for (double beta : cfg.beta) bs.push_back(static_cast<Index>(std::llround(beta * df)));
  const Index b_max = *std::max_element(bs.begin(), bs.end());
  const Matrix g0inv = gamma0_inverse(s.sigma0, n);

  struct Pair {
    double first_order, exact, seconds;
  };
  const std::function<std::vector<Pair>(Index)> task = [&](Index trial) {
    const RngStream root(cfg.seed, static_cast<std::uint64_t>(trial));
    RngStream data = root.split(0);
    const PromptBatch full = gen_prompt_signals(s.A, b_max, n, data);
    std::vector<Pair> out;
    for (Index b : bs) {
      const auto start = Clock::now();
      const PromptBatch batch = full.prefix(b);
      const Matrix v_fo = sft_first_order(batch.signal, batch.omega, s.A, g0inv, cfg.eta);
      const Matrix v_ex = sft_minimizer(batch.signal, batch.omega, g0inv, cfg.eta);
      out.push_back({posttest_error_exact(v_fo, s.sigma_test, n) / df,
                     posttest_error_exact(v_ex, s.sigma_test, n) / df, seconds_since(start)});
    }
    return out;
  };
  const auto trials = parallel_map(cfg.trials, cfg.workers, task);

  SweepTable table;
  table.experiment = cfg.experiment;
  table.columns = schema(cfg.experiment);
  for (std::size_t i = 0; i < cfg.beta.size(); ++i) {
    std::vector<double> fo, ex;
    double seconds = 0.0;
    for (const auto& t : trials) {
      fo.push_back(t[i].first_order);
      ex.push_back(t[i].exact);
      seconds += t[i].seconds;
    }
    const MeanStderr mfo = summarize(fo);
    const MeanStderr mex = summarize(ex);
    const double f = theory_components(theory_inputs(cfg, cfg.beta[i])).f;
    const Index diverged = (cfg.trials - mfo.finite) + (cfg.trials - mex.finite);
    table.rows.push_back({std::string("compare-theory-sim"), cfg.beta[i], std::int64_t{cfg.d},
                          std::int64_t{cfg.m}, std::int64_t{n}, std::int64_t{bs[i]}, cfg.rho,
                          cfg.r, cfg.eta, std::int64_t{cfg.trials},
                          static_cast<std::int64_t>(cfg.seed), f, mfo.mean, mfo.stderr_, mex.mean,
                          mex.stderr_, std::abs(f - mfo.mean) / f, std::abs(f - mex.mean) / f,
                          std::int64_t{diverged}});
    table.wall_time.push_back(seconds);
  }
  return table;
}

// --- gd rate -------------------------------------------------------------

SweepTable run_gd_rate(const ExperimentConfig& cfg) {
  const auto start = Clock::now();
  const Setting s = make_setting(cfg);
  const Index n = cfg.n.front();
  const RngStream root(cfg.seed, 0);
  RngStream data = root.split(0);
  const PromptBatch batch = gen_prompt_signals(s.A, cfg.B.front(), n, data);
  SftConfig sc;
  sc.eta = cfg.eta;
  sc.k = cfg.k.front();
  sc.step = cfg.gamma_step;
  sc.steps = cfg.steps;
  const SftGdResult res = sft_gd(pretrained_init(s.sigma0, n), batch, sc);
  const SftTrajectory& tr = res.trajectory;

  SweepTable table;
  table.experiment = cfg.experiment;
  table.columns = schema(cfg.experiment);
  const double log_rate = std::log(tr.contraction);
  const double d0 = tr.distance.front();
  for (std::size_t t = 0; t < tr.loss.size(); ++t) {
    const double predicted = d0 * std::pow(tr.contraction, static_cast<double>(t));
    table.rows.push_back({std::string("gd-rate-demo"), std::int64_t{cfg.d}, std::int64_t{cfg.m},
                          std::int64_t{n}, std::int64_t{cfg.B.front()}, std::int64_t{sc.k},
                          cfg.eta, static_cast<std::int64_t>(cfg.seed), tr.step, tr.lambda_max,
                          tr.lambda_min_positive, log_rate, static_cast<std::int64_t>(t),
                          tr.loss[t], tr.distance[t], predicted});
  }
  table.wall_time.assign(table.rows.size(), 0.0);
  if (!table.wall_time.empty()) table.wall_time.back() = seconds_since(start);
  return table;
}

}  // namespace

std::vector<std::string> schema(ExperimentKind kind) {
  const std::vector<std::string> sweep_head{"experiment", "swept", "value", "d",   "m",
                                            "n",          "B",     "k",     "rho", "r",
                                            "eta",        "trials", "seed"};
  switch (kind) {
    case ExperimentKind::kSftSweepB:
    case ExperimentKind::kSftSweepN:
    case ExperimentKind::kSftSweepK: {
      auto cols = sweep_head;
      cols.insert(cols.end(), {"method", "step_rule", "sim_error_mean", "sim_error_stderr",
                               "theory_F", "divergence_count"});
      return cols;
    }
    case ExperimentKind::kOsSweepB:
    case ExperimentKind::kOsSweepN:
    case ExperimentKind::kOsSweepK: {
      auto cols = sweep_head;
      cols.insert(cols.end(),
                  {"step_rule", "steps", "test_k", "mc_trials", "sim_error_mean",
                   "sim_error_stderr", "init_mean_radius", "final_mean_radius",
                   "final_fraction_unstable", "divergence_count", "mc_divergent_rollouts"});
      return cols;
    }
    case ExperimentKind::kTheoryCurve:
      return {"experiment", "beta",  "d",   "m",  "n",     "rho",  "r",          "eta",
              "gamma",      "mu1",   "q",   "saturated", "w1", "w2", "v1",       "v2",
              "T12",        "Bias",  "T_inv", "T_inv_Sigma", "T_var", "T_var_Sigma", "theory_F"};
    case ExperimentKind::kCompareTheorySim:
      return {"experiment",
              "beta",
              "d",
              "m",
              "n",
              "B",
              "rho",
              "r",
              "eta",
              "trials",
              "seed",
              "theory_F",
              "sim_first_order_mean",
              "sim_first_order_stderr",
              "sim_exact_mean",
              "sim_exact_stderr",
              "rel_gap_first_order",
              "rel_gap_exact",
              "divergence_count"};
    case ExperimentKind::kGdRateDemo:
      return {"experiment", "d",    "m",          "n",
              "B",          "k",    "eta",        "seed",
              "step_size",  "lambda_max", "lambda_min_positive", "predicted_log_rate",
              "step",       "loss", "distance",   "predicted_distance"};
  }
  return {};
}

SweepTable run_experiment(const ExperimentConfig& cfg) {
  const std::vector<std::string> errors = validate_config(cfg);
  if (!errors.empty()) {
    std::string msg = "invalid experiment config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  switch (cfg.experiment) {
    case ExperimentKind::kTheoryCurve:
      return run_theory_curve(cfg);
    case ExperimentKind::kCompareTheorySim:
      return run_compare(cfg);
    case ExperimentKind::kGdRateDemo:
      return run_gd_rate(cfg);
    default:
      return run_sweep(cfg);
  }
}

}  // namespace icl
