#pragma once

// Linear self-attention restricted to the sparsity pattern that survives
// chain-of-thought training: only the value block V31 (here `value`) and the
// key-query block W13 (here `key_query`) are free, plus a fixed -1 entry in W
// pairing the label row with the constant row.

#include <vector>

#include "icl/numerics.hpp"

namespace icl {

inline constexpr double kOverflowThreshold = 1e150;

struct LsaParams {
  Matrix value;      // d x d block of V acting on the feature rows
  Matrix key_query;  // d x d block of W pairing feature rows with weight rows

  Index dim() const { return value.rows(); }

  /// Full (2d+2) x (2d+2) value matrix V. Row/column layout of the embedding
  /// is [x (d) | y (1) | w (d) | 1 (1)].
  Matrix full_value() const;
  /// Full (2d+2) x (2d+2) key-query matrix W, including the fixed -1 entry.
  Matrix full_key_query() const;
};

/// Parameters left by pretraining on N(0, sigma0) prompts of length n:
/// value = -Gamma0^{-1}, key_query = I.
LsaParams pretrained_init(const Matrix& sigma0, Index n);

struct Rollout {
  std::vector<Vector> w_hats;        // w_0 .. w_k
  std::vector<double> spectral_log;  // rho(I + V S W) per step, when requested
};

struct RolloutOptions {
  /// Initial weight estimate; empty means the zero vector.
  Vector w0;
  bool log_spectral = false;
};

/// Iterates w_{i+1} = w_i + V S (W w_i - w*) for k >= 1 steps. Throws
/// DivergenceError (carrying the step) once an entry exceeds 1e150.
Rollout cot_rollout(const LsaParams& params, const Matrix& S, const Vector& w_star, Index k,
                    const RolloutOptions& options = {});

/// Reference implementation through the full embedding: builds the
/// (2d+2) x (n+1) prompt embedding, applies f(Z) = Z + V Z (Z^T W Z) / n and
/// appends the last output column k times. Reads w_i from rows d+1..2d of
/// the appended columns. Exists to cross-check cot_rollout; cost grows with
/// n and k.
Rollout lsa_forward_embedding(const LsaParams& params, const Matrix& X, const Vector& y, Index k,
                              const Vector& w0);

}  // namespace icl
