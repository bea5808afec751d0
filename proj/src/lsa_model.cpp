#include "icl/lsa_model.hpp"

#include <cmath>
#include <string>

#include "icl/errors.hpp"
#include "icl/task_data.hpp"

namespace icl {
namespace {

void check_params(const LsaParams& p) {
  require_square(p.value, "LsaParams::value");
  require_square(p.key_query, "LsaParams::key_query");
  if (p.value.rows() != p.key_query.rows()) {
    throw DomainError("LsaParams: value and key_query dimensions differ");
  }
  require_finite(p.value, "LsaParams::value");
  require_finite(p.key_query, "LsaParams::key_query");
}

void guard_overflow(const Vector& w, std::size_t step) {
  if (!w.allFinite() || w.cwiseAbs().maxCoeff() > kOverflowThreshold) {
    throw DivergenceError("CoT rollout diverged at step " + std::to_string(step), step);
  }
}

}  // namespace

Matrix LsaParams::full_value() const {
  const Index d = dim();
  Matrix v = Matrix::Zero(2 * d + 2, 2 * d + 2);
  v.block(d + 1, 0, d, d) = value;
  return v;
}

Matrix LsaParams::full_key_query() const {
  const Index d = dim();
  Matrix w = Matrix::Zero(2 * d + 2, 2 * d + 2);
  w.block(0, d + 1, d, d) = key_query;
  w(d, 2 * d + 1) = -1.0;
  return w;
}

LsaParams pretrained_init(const Matrix& sigma0, Index n) {
  LsaParams p;
  p.value = -gamma0_inverse(sigma0, n);
  p.key_query = Matrix::Identity(sigma0.rows(), sigma0.cols());
  return p;
}

Rollout cot_rollout(const LsaParams& params, const Matrix& S, const Vector& w_star, Index k,
                    const RolloutOptions& options) {
  check_params(params);
  const Index d = params.dim();
  if (S.rows() != d || S.cols() != d || w_star.size() != d) {
    throw DomainError("cot_rollout: dimension mismatch");
  }
  if (k < 1) throw DomainError("cot_rollout: k must be >= 1");
  if (options.w0.size() != 0 && options.w0.size() != d) {
    throw DomainError("cot_rollout: w0 has the wrong dimension");
  }

  const Matrix vs = params.value * S;
  Rollout out;
  out.w_hats.reserve(static_cast<std::size_t>(k + 1));
  out.w_hats.push_back(options.w0.size() == 0 ? Vector(Vector::Zero(d)) : options.w0);
  if (options.log_spectral) {
    const double radius =
        spectral_radius(Matrix::Identity(d, d) + vs * params.key_query);
    out.spectral_log.assign(static_cast<std::size_t>(k), radius);
  }
  for (Index i = 0; i < k; ++i) {
    const Vector& w = out.w_hats.back();
    Vector next = w + vs * (params.key_query * w - w_star);
    guard_overflow(next, static_cast<std::size_t>(i + 1));
    out.w_hats.push_back(std::move(next));
  }
  return out;
}

Rollout lsa_forward_embedding(const LsaParams& params, const Matrix& X, const Vector& y, Index k,
                              const Vector& w0) {
  check_params(params);
  const Index d = params.dim();
  const Index n = X.cols();
  if (X.rows() != d || y.size() != n || w0.size() != d) {
    throw DomainError("lsa_forward_embedding: dimension mismatch");
  }
  if (n < 1) throw DomainError("lsa_forward_embedding: empty prompt");
  if (k < 0) throw DomainError("lsa_forward_embedding: k must be >= 0");

  const Index rows = 2 * d + 2;
  const Matrix v = params.full_value();
  const Matrix w = params.full_key_query();
  const double inv_n = 1.0 / static_cast<double>(n);

  Matrix z = Matrix::Zero(rows, n + 1 + k);
  z.block(0, 0, d, n) = X;
  z.block(d, 0, 1, n) = y.transpose();
  z.block(d + 1, n, d, 1) = w0;
  z(rows - 1, n) = 1.0;

  Rollout out;
  out.w_hats.push_back(w0);
  for (Index i = 0; i < k; ++i) {
    const Index cols = n + 1 + i;
    const auto zi = z.leftCols(cols);
    // Last column of f(Z) = Z + V Z (Z^T W Z) / n.
    const Vector last = zi.col(cols - 1) + inv_n * (v * (zi * (zi.transpose() * (w * zi.col(cols - 1)))));
    guard_overflow(last, static_cast<std::size_t>(i + 1));
    z.col(cols) = last;
    out.w_hats.push_back(last.segment(d + 1, d));
  }
  return out;
}

}  // namespace icl
