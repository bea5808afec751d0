#include "icl/os_trainer.hpp"

#include <cmath>
#include <string>

#include "icl/errors.hpp"

namespace icl {
namespace {

void check_batch(const PromptBatch& batch, Index k, const char* who) {
  if (batch.size() < 1) throw DomainError(std::string(who) + ": empty batch");
  if (!batch.has_covariances()) {
    throw DomainError(std::string(who) + ": batch must retain its covariances");
  }
  if (k < 1) throw DomainError(std::string(who) + ": k must be >= 1");
}

void guard(const Matrix& m, Index step, const char* who) {
  if (!m.allFinite() || m.cwiseAbs().maxCoeff() > kOverflowThreshold) {
    throw DivergenceError(std::string(who) + ": overflow in matrix powers",
                          static_cast<std::size_t>(step));
  }
}

// powers[j] = M^j for j = 0..k.
std::vector<Matrix> matrix_powers(const Matrix& m, Index k, const char* who) {
  std::vector<Matrix> powers;
  powers.reserve(static_cast<std::size_t>(k + 1));
  powers.push_back(Matrix::Identity(m.rows(), m.cols()));
  for (Index j = 1; j <= k; ++j) {
    powers.push_back(powers.back() * m);
    guard(powers.back(), j, who);
  }
  return powers;
}

const Matrix& cov(const PromptBatch& batch, Index tau) {
  return batch.covariances[static_cast<std::size_t>(tau)];
}

}  // namespace

double os_loss(const LsaParams& params, const PromptBatch& batch, Index k) {
  check_batch(batch, k, "os_loss");
  const Index d = batch.dim();
  const Matrix identity = Matrix::Identity(d, d);
  double total = 0.0;
  for (Index tau = 0; tau < batch.size(); ++tau) {
    const Matrix vs = params.value * cov(batch, tau);
    const Matrix transition = vs * params.key_query + identity;
    Matrix acc = identity;
    Matrix power = identity;
    for (Index i = 0; i < k; ++i) {
      acc += power * vs;
      power = power * transition;
      guard(power, i + 1, "os_loss");
    }
    total += (acc * batch.omega.col(tau)).squaredNorm();
  }
  return total / (2.0 * static_cast<double>(batch.size()));
}

double os_loss_power_form(const Matrix& value, const PromptBatch& batch, Index k) {
  check_batch(batch, k, "os_loss_power_form");
  const Index d = batch.dim();
  double total = 0.0;
  for (Index tau = 0; tau < batch.size(); ++tau) {
    const Matrix m = Matrix::Identity(d, d) + value * cov(batch, tau);
    Vector w = batch.omega.col(tau);
    for (Index i = 0; i < k; ++i) {
      w = m * w;
      guard(w, i + 1, "os_loss_power_form");
    }
    total += w.squaredNorm();
  }
  return total / (2.0 * static_cast<double>(batch.size()));
}

double os_loss_rollout(const LsaParams& params, const PromptBatch& batch, Index k) {
  check_batch(batch, k, "os_loss_rollout");
  double total = 0.0;
  for (Index tau = 0; tau < batch.size(); ++tau) {
    const Vector w_star = batch.omega.col(tau);
    const Rollout r = cot_rollout(params, cov(batch, tau), w_star, k);
    total += (r.w_hats.back() - w_star).squaredNorm();
  }
  return total / (2.0 * static_cast<double>(batch.size()));
}

Matrix os_grad(const Matrix& value, const PromptBatch& batch, Index k) {
  check_batch(batch, k, "os_grad");
  const Index d = batch.dim();
  Matrix grad = Matrix::Zero(d, d);
  for (Index tau = 0; tau < batch.size(); ++tau) {
    const Matrix& s = cov(batch, tau);
    const Matrix m = Matrix::Identity(d, d) + value * s;
    const std::vector<Matrix> powers = matrix_powers(m, k, "os_grad");
    const Vector w = batch.omega.col(tau);
    const Vector residual = powers[static_cast<std::size_t>(k)] * w;  // M^k w*
    // Term j: (M^T)^j r (M^{k-1-j} w*)^T S^T.
    for (Index j = 0; j < k; ++j) {
      const Vector left = powers[static_cast<std::size_t>(j)].transpose() * residual;
      const Vector right = s * (powers[static_cast<std::size_t>(k - 1 - j)] * w);
      grad.noalias() += left * right.transpose();
    }
  }
  grad /= static_cast<double>(batch.size());
  guard(grad, k, "os_grad");
  return grad;
}

double os_hessian_bound(const Matrix& value, const PromptBatch& batch, Index k) {
  check_batch(batch, k, "os_hessian_bound");
  const Index d = batch.dim();
  const double kk = static_cast<double>(k);
  double total = 0.0;
  for (Index tau = 0; tau < batch.size(); ++tau) {
    const Matrix& s = cov(batch, tau);
    const double radius = spectral_radius(Matrix::Identity(d, d) + value * s);
    const double s_op = lambda_max_symmetric(0.5 * (s + s.transpose()));
    total += kk * kk * std::pow(radius, 2.0 * kk - 2.0) * batch.omega.col(tau).squaredNorm() * s_op;
  }
  return total / static_cast<double>(batch.size());
}

Matrix os_hessian_probe(const Matrix& value, const PromptBatch& batch, Index k,
                        const Matrix& direction, double h) {
  if (!(h > 0.0)) throw DomainError("os_hessian_probe: h must be positive");
  return (os_grad(value + h * direction, batch, k) - os_grad(value - h * direction, batch, k)) /
         (2.0 * h);
}

StabilityReport stability_report(const Matrix& value, const PromptBatch& batch, Index k) {
  check_batch(batch, k, "stability_report");
  const Index d = batch.dim();
  const double kk = static_cast<double>(k);
  StabilityReport rep;
  rep.radii.reserve(static_cast<std::size_t>(batch.size()));
  Index unstable = 0;
  double bound = 0.0;
  for (Index tau = 0; tau < batch.size(); ++tau) {
    const Matrix& s = cov(batch, tau);
    const double radius = spectral_radius(Matrix::Identity(d, d) + value * s);
    rep.radii.push_back(radius);
    rep.mean_radius += radius;
    rep.max_radius = std::max(rep.max_radius, radius);
    if (radius > 1.0) ++unstable;
    bound += kk * kk * std::pow(radius, 2.0 * kk - 2.0) * batch.omega.col(tau).squaredNorm() *
             lambda_max_symmetric(0.5 * (s + s.transpose()));
  }
  const double bf = static_cast<double>(batch.size());
  rep.mean_radius /= bf;
  rep.fraction_unstable = static_cast<double>(unstable) / bf;
  rep.hessian_bound = bound / bf;
  return rep;
}

double os_auto_step(const Matrix& value, const PromptBatch& batch, Index k, double factor) {
  const double bound = os_hessian_bound(value, batch, k);
  if (!(bound > 0.0) || !std::isfinite(bound)) {
    throw NumericalError("os_auto_step: curvature bound is not a positive finite number");
  }
  return factor / bound;
}

OsGdResult os_gd(const LsaParams& init, const PromptBatch& batch, const OsConfig& cfg) {
  check_batch(batch, cfg.k, "os_gd");
  const Index d = batch.dim();
  if (init.value.rows() != d || init.key_query != Matrix::Identity(d, d)) {
    throw ConfigError("os_gd: trains the value block with key_query fixed to I");
  }
  if (!(cfg.step >= 0.0)) throw ConfigError("os_gd: step must be >= 0");
  if (cfg.steps < 0) throw ConfigError("os_gd: negative step budget");
  if (cfg.clip && !(*cfg.clip > 0.0)) throw ConfigError("os_gd: clip must be positive");

  OsGdResult out;
  out.params = init;
  Matrix v = init.value;
  auto fail = [&](Index step) {
    throw TrainingDivergence("os_gd diverged at step " + std::to_string(step),
                             static_cast<std::size_t>(step), out.params);
  };

  double loss = 0.0;
  try {
    loss = os_loss_power_form(v, batch, cfg.k);
  } catch (const DivergenceError&) {
    fail(0);
  }
  if (!std::isfinite(loss)) fail(0);
  out.loss.push_back(loss);

  for (Index t = 0; t < cfg.steps; ++t) {
    Matrix grad;
    try {
      grad = os_grad(v, batch, cfg.k);
    } catch (const DivergenceError&) {
      fail(t);
    }
    const double grad_norm = grad.norm();
    if (cfg.telemetry_every > 0 && t % cfg.telemetry_every == 0) {
      StabilityReport rep = stability_report(v, batch, cfg.k);
      rep.step = t;
      rep.grad_norm = grad_norm;
      out.telemetry.push_back(std::move(rep));
    }
    if (cfg.clip && grad_norm > *cfg.clip) grad *= *cfg.clip / grad_norm;
    Matrix next = v - cfg.step * grad;
    double next_loss = 0.0;
    try {
      next_loss = os_loss_power_form(next, batch, cfg.k);
    } catch (const DivergenceError&) {
      fail(t + 1);
    }
    if (!std::isfinite(next_loss) || !next.allFinite()) fail(t + 1);
    v = std::move(next);
    out.params.value = v;
    out.loss.push_back(next_loss);
  }
  return out;
}

}  // namespace icl
