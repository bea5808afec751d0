#pragma once

// Supervised fine-tuning on chain-of-thought targets
// w_i = (1 - (1 - eta)^i) w*, the minimal-deviation zero-loss solution, full
// batch gradient descent on the key_query = I slice, and the B -> infinity
// limit of the minimizer.

#include <optional>
#include <vector>

#include "icl/lsa_model.hpp"
#include "icl/task_data.hpp"

namespace icl {

struct SftConfig {
  double eta = 0.2;
  Index k = 1;
  /// GD step size; empty selects B / (c_k * lambda_max(M)).
  std::optional<double> step;
  Index steps = 100;
  /// Reject steps at or above the 2B / (c_k lambda_max(M)) stability bound.
  bool strict_step = false;
  /// Divergence is declared once the distance to the minimizer exceeds this
  /// multiple of its initial value.
  double divergence_factor = 1e6;
};

/// c_k = sum_{i=0..k} (1 - eta)^{2i}.
double sft_weight(double eta, Index k);

/// SFT loss (1/2B) sum_tau sum_{i=0..k} ||R_{i,tau}||^2 with residuals
/// R = V S (W - I) w* - (1-eta)^i (V S W + eta I) w*. Needs the batch
/// covariances unless key_query is exactly the identity.
double sft_loss(const LsaParams& params, const PromptBatch& batch, const SftConfig& cfg);

/// (c_k / 2B) ||V Phi + eta Omega||_F^2, the loss on the key_query = I slice.
double sft_loss_identity_key(const Matrix& value, const Matrix& phi, const Matrix& omega,
                             double eta, Index k);

/// value = -eta Omega Phi^+ - Gamma0^{-1} (I - Phi Phi^+), key_query = I.
Matrix sft_minimizer(const Matrix& phi, const Matrix& omega, const Matrix& gamma0_inv, double eta,
                     double rel_tol = kDefaultPinvTolerance);
/// Linearization of sft_minimizer around Phi ~ A Omega. With M = A Omega and
/// E = Phi - M: V_S = -eta Omega M^+ - Gamma0^{-1} (I - M M^+) and the
/// returned value is V_S - V_S E M^+.
Matrix sft_first_order(const Matrix& phi, const Matrix& omega, const Matrix& A,
                       const Matrix& gamma0_inv, double eta,
                       double rel_tol = kDefaultPinvTolerance);

LsaParams sft_closed_form(const PromptBatch& batch, const Matrix& gamma0_inv, double eta);

struct SftTrajectory {
  double step = 0.0;
  /// Predicted per-step contraction max(|1 - s lmax|, |1 - s lmin+|) with
  /// s = step * c_k / B.
  double contraction = 0.0;
  double lambda_max = 0.0;
  double lambda_min_positive = 0.0;
  std::vector<double> loss;      // loss at iterate t = 0..steps
  std::vector<double> distance;  // ||V_t - V*||_F at iterate t = 0..steps
};

struct SftGdResult {
  LsaParams params;
  SftTrajectory trajectory;
};

/// V_{t+1} = V_t - (step c_k / B) (V_t Phi + eta Omega) Phi^T with
/// key_query fixed to I. Distances are measured to the zero-loss point
/// nearest the initial value, -eta Omega Phi^+ + V_0 (I - Phi Phi^+), which is
/// sft_closed_form when V_0 = -Gamma0^{-1}. Throws ConfigError for a
/// strict-mode step above the stability bound and DivergenceError when the
/// distance blows up.
SftGdResult sft_gd(const LsaParams& init, const PromptBatch& batch, const SftConfig& cfg);

/// B -> infinity limit of the minimizer for features ~ N(0, A):
/// -eta ((n+1)/n A + tr(A)/n A A^+)^+ - Gamma0^{-1} (I - A A^+).
Matrix sft_population_limit(const Matrix& A, const Matrix& gamma0_inv, double eta, Index n);

}  // namespace icl
