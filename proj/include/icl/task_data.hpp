#pragma once

// Covariance family of the pretrain / post-train / post-test pipeline and
// sampled prompt batches.

#include <cstdint>
#include <vector>

#include "icl/numerics.hpp"

namespace icl {

enum class CovarianceKind {
  kPretrain,   // diag(rho * 1_m, 1_{d-m})
  kShift,      // diag(1_m, 0_{d-m})
  kPosttest,   // pretrain + shift
  kPosttrain,  // diag(eta * (rho + 1) * 1_m, r * 1_{d-m})
  kCustom,     // dense matrix supplied by the caller
};

/// Two-block diagonal covariance stored by its scalar knobs and materialized
/// on demand. `custom` is only read for CovarianceKind::kCustom.
struct CovarianceSpec {
  CovarianceKind kind = CovarianceKind::kPretrain;
  Index d = 0;
  Index m = 0;
  double rho = 0.0;
  double r = 0.0;
  double eta = 0.5;
  Matrix custom;

  static CovarianceSpec pretrain(Index d, Index m, double rho);
  static CovarianceSpec shift(Index d, Index m);
  static CovarianceSpec posttest(Index d, Index m, double rho);
  static CovarianceSpec posttrain(Index d, Index m, double rho, double r, double eta);
  static CovarianceSpec dense(Matrix cov);
};

/// Throws DomainError when the spec violates 0 < m < d, rho >= 0, r >= 0 or
/// 0 < eta < 1 (the latter two only for the kinds that read them).
void validate(const CovarianceSpec& spec);

Matrix materialize(const CovarianceSpec& spec);

/// Pretraining operator (1 + 1/n) * sigma0 + (tr(sigma0) / n) * I.
Matrix gamma0(const Matrix& sigma0, Index n);

/// Inverse of gamma0; throws SingularityError if it is not invertible.
Matrix gamma0_inverse(const Matrix& sigma0, Index n);

struct BatchOptions {
  /// Keep the per-prompt empirical covariances S_tau (d x d each).
  bool keep_covariances = true;
  /// Keep the raw d x n feature matrices X_tau.
  bool keep_features = false;
};

/// B prompts of length n. Column tau of `omega` is w*_tau and column tau of
/// `signal` is S_tau * w*_tau. `covariances` / `features` are empty unless
/// requested.
struct PromptBatch {
  Index n = 0;
  Matrix omega;
  Matrix signal;
  std::vector<Matrix> covariances;
  std::vector<Matrix> features;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  Index size() const { return omega.cols(); }
  Index dim() const { return omega.rows(); }
  bool has_covariances() const { return !covariances.empty(); }

  /// First `count` prompts as a new batch (prompts are drawn from per-prompt
  /// substreams, so this equals a fresh batch of size `count`).
  PromptBatch prefix(Index count) const;
};

/// Draws w*_tau ~ N(0, I_d) and X_tau with N(0, A) columns for every prompt,
/// prompt tau from substream rng.split(tau).
PromptBatch gen_prompt_batch(const Matrix& A, Index B, Index n, RngStream& rng,
                             const BatchOptions& options = {});

/// Same joint law of (w*_tau, S_tau w*_tau) as gen_prompt_batch without
/// forming X_tau or S_tau. With u = A^{1/2} w*, n S w* has the law of
/// A^{1/2} ||u|| (c u/||u|| + sqrt(c) P_perp xi) where c ~ chi2(n) and
/// xi ~ N(0, I_d), by rotational invariance of the Gaussian feature matrix.
/// O(d^2) per prompt instead of O(d^2 n).
PromptBatch gen_prompt_signals(const Matrix& A, Index B, Index n, RngStream& rng);

/// Phi = [S_1 w*_1, ..., S_B w*_B] and its Gram matrix M = Phi Phi^T.
struct PhiGram {
  Matrix phi;
  Matrix gram;
};

/// Rebuilds Phi from the retained covariances when present, otherwise returns
/// the cached signal columns.
PhiGram build_phi(const PromptBatch& batch);

}  // namespace icl
