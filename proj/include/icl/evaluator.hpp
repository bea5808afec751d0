#pragma once

// Post-test error E ||w_hat - w*||^2 on prompts with N(0, Sigma) features and
// w* ~ N(0, I).

#include <limits>

#include "icl/lsa_model.hpp"

namespace icl {

/// Exact expectation for one CoT step from w_0 = 0 with key_query = I:
/// ||I + V Sigma||_F^2 + (tr(V Sigma^2 V^T) + tr(V Sigma V^T) tr(Sigma)) / n.
double posttest_error_exact(const Matrix& value, const Matrix& sigma, Index n);

struct ErrorReport {
  /// Closed form when it applies (k = 1, key_query = I), NaN otherwise.
  double exact = std::numeric_limits<double>::quiet_NaN();
  /// Mean / standard error over the non-divergent trials; +inf when every
  /// trial diverged.
  double mc_mean = 0.0;
  double mc_stderr = 0.0;
  Index trials = 0;
  Index divergent = 0;
  Index k_used = 0;
};

/// Monte Carlo estimate: each trial draws X with N(0, Sigma) columns and
/// w* ~ N(0, I), runs k rollout steps from w_0 = 0 and records
/// ||w_k - w*||^2. Trial t uses rng.split(t). Diverged rollouts are counted
/// and excluded from the mean.
ErrorReport posttest_error_mc(const LsaParams& params, const Matrix& sigma, Index n, Index k,
                              Index trials, RngStream& rng);

}  // namespace icl
