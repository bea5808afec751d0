#pragma once

// Outcome supervision: loss on the k-th CoT iterate only, its analytic
// gradient in the value block (key_query = I), a curvature proxy and a GD
// trainer that logs per-prompt spectral radii of M_tau = I + V S_tau.

#include <optional>
#include <string>
#include <vector>

#include "icl/errors.hpp"
#include "icl/lsa_model.hpp"
#include "icl/task_data.hpp"

namespace icl {

struct OsConfig {
  Index k = 1;
  double step = 0.0;
  Index steps = 100;
  /// Gradient-norm cap; disabled when empty.
  std::optional<double> clip;
  /// Record a StabilityReport every `telemetry_every` steps (0 disables).
  Index telemetry_every = 1;
};

struct StabilityReport {
  Index step = 0;
  std::vector<double> radii;  // rho(M_tau) per prompt
  double mean_radius = 0.0;
  double max_radius = 0.0;
  double fraction_unstable = 0.0;  // share of prompts with rho(M_tau) > 1
  double hessian_bound = 0.0;
  double grad_norm = 0.0;
};

/// General form (1/2B) sum ||(I + sum_{i<k} (V S W + I)^i V S) w*||^2.
double os_loss(const LsaParams& params, const PromptBatch& batch, Index k);
/// key_query = I form (1/2B) sum ||(I + V S)^k w*||^2.
double os_loss_power_form(const Matrix& value, const PromptBatch& batch, Index k);
/// (1/2B) sum ||w_k - w*||^2 with w_k from cot_rollout.
double os_loss_rollout(const LsaParams& params, const PromptBatch& batch, Index k);

/// (1/B) sum_tau sum_{j<k} (M^T)^j M^k w* w*^T (M^T)^{k-1-j} S^T.
Matrix os_grad(const Matrix& value, const PromptBatch& batch, Index k);

/// (1/B) sum_tau k^2 rho(M_tau)^{2k-2} ||w*_tau||^2 ||S_tau||_op.
double os_hessian_bound(const Matrix& value, const PromptBatch& batch, Index k);

/// Central-difference Hessian-vector product
/// (grad(V + h E) - grad(V - h E)) / 2h.
Matrix os_hessian_probe(const Matrix& value, const PromptBatch& batch, Index k,
                        const Matrix& direction, double h = 1e-5);

StabilityReport stability_report(const Matrix& value, const PromptBatch& batch, Index k);

/// Thrown by os_gd; carries the last iterate whose loss was finite.
class TrainingDivergence : public DivergenceError {
 public:
  TrainingDivergence(const std::string& what, std::size_t step, LsaParams last_stable)
      : DivergenceError(what, step), last_stable_(std::move(last_stable)) {}
  const LsaParams& last_stable() const noexcept { return last_stable_; }

 private:
  LsaParams last_stable_;
};

struct OsGdResult {
  LsaParams params;
  std::vector<double> loss;  // loss at iterate t = 0..steps
  std::vector<StabilityReport> telemetry;
};

/// Plain GD on the value block with key_query fixed to I.
OsGdResult os_gd(const LsaParams& init, const PromptBatch& batch, const OsConfig& cfg);

/// Step rule used by the sweep harness: factor / os_hessian_bound(init).
double os_auto_step(const Matrix& value, const PromptBatch& batch, Index k, double factor = 0.5);

}  // namespace icl
