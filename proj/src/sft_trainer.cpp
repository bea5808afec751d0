#include "icl/sft_trainer.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "icl/errors.hpp"

namespace icl {
namespace {

void check_eta(double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw DomainError("SFT: eta must lie in (0, 1)");
}

// Nearest point to `anchor` (in Frobenius norm) on {V : V Phi = -eta Omega}.
Matrix nearest_zero_loss(const Matrix& phi, const Matrix& omega, const Matrix& anchor, double eta,
                         double rel_tol) {
  const Index d = phi.rows();
  const Matrix phi_pinv = pinv(phi, rel_tol);
  const Matrix projector = phi * phi_pinv;
  return -eta * (omega * phi_pinv) + anchor * (Matrix::Identity(d, d) - projector);
}

}  // namespace

double sft_weight(double eta, Index k) {
  check_eta(eta);
  const double rho2 = (1.0 - eta) * (1.0 - eta);
  double total = 0.0;
  double term = 1.0;
  for (Index i = 0; i <= k; ++i) {
    total += term;
    term *= rho2;
  }
  return total;
}

double sft_loss_identity_key(const Matrix& value, const Matrix& phi, const Matrix& omega,
                             double eta, Index k) {
  const Index batch = phi.cols();
  if (batch < 1) throw DomainError("sft_loss: empty batch");
  const double ck = sft_weight(eta, k);
  return ck / (2.0 * static_cast<double>(batch)) * (value * phi + eta * omega).squaredNorm();
}

double sft_loss(const LsaParams& params, const PromptBatch& batch, const SftConfig& cfg) {
  if (batch.size() < 1) throw DomainError("sft_loss: empty batch");
  if (cfg.k < 1) throw DomainError("sft_loss: k must be >= 1");
  check_eta(cfg.eta);
  const Index d = batch.dim();
  const Matrix identity = Matrix::Identity(d, d);
  if (!batch.has_covariances()) {
    if (params.key_query != identity) {
      throw DomainError("sft_loss: general key_query needs the batch covariances");
    }
    return sft_loss_identity_key(params.value, batch.signal, batch.omega, cfg.eta, cfg.k);
  }

  const double rho = 1.0 - cfg.eta;
  const Matrix key_minus_id = params.key_query - identity;
  double total = 0.0;
  for (Index tau = 0; tau < batch.size(); ++tau) {
    const Matrix& s = batch.covariances[static_cast<std::size_t>(tau)];
    const Vector w = batch.omega.col(tau);
    const Matrix vs = params.value * s;
    const Vector drift = vs * (key_minus_id * w);
    const Vector target_gap = vs * (params.key_query * w) + cfg.eta * w;
    double scale = 1.0;
    for (Index i = 0; i <= cfg.k; ++i) {
      total += (drift - scale * target_gap).squaredNorm();
      scale *= rho;
    }
  }
  return total / (2.0 * static_cast<double>(batch.size()));
}

Matrix sft_minimizer(const Matrix& phi, const Matrix& omega, const Matrix& gamma0_inv, double eta,
                     double rel_tol) {
  check_eta(eta);
  if (phi.rows() != gamma0_inv.rows() || omega.cols() != phi.cols()) {
    throw DomainError("sft_minimizer: dimension mismatch");
  }
  return nearest_zero_loss(phi, omega, -gamma0_inv, eta, rel_tol);
}

Matrix sft_first_order(const Matrix& phi, const Matrix& omega, const Matrix& A,
                       const Matrix& gamma0_inv, double eta, double rel_tol) {
  check_eta(eta);
  const Index d = phi.rows();
  if (A.rows() != d || A.cols() != d || omega.rows() != d || omega.cols() != phi.cols() ||
      gamma0_inv.rows() != d) {
    throw DomainError("sft_first_order: dimension mismatch");
  }
  const Matrix mean_signal = A * omega;
  const Matrix mp = pinv(mean_signal, rel_tol);
  const Matrix leading = -eta * omega * mp -
                         gamma0_inv * (Matrix::Identity(d, d) - mean_signal * mp);
  return leading - leading * (phi - mean_signal) * mp;
}

LsaParams sft_closed_form(const PromptBatch& batch, const Matrix& gamma0_inv, double eta) {
  const PhiGram pg = build_phi(batch);
  LsaParams p;
  p.value = sft_minimizer(pg.phi, batch.omega, gamma0_inv, eta);
  p.key_query = Matrix::Identity(batch.dim(), batch.dim());
  return p;
}

SftGdResult sft_gd(const LsaParams& init, const PromptBatch& batch, const SftConfig& cfg) {
  const Index d = batch.dim();
  const Index b = batch.size();
  if (b < 1) throw DomainError("sft_gd: empty batch");
  if (cfg.k < 1) throw ConfigError("sft_gd: k must be >= 1");
  if (cfg.steps < 0) throw ConfigError("sft_gd: negative step budget");
  if (init.value.rows() != d || init.key_query != Matrix::Identity(d, d)) {
    throw ConfigError("sft_gd: trains the value block with key_query fixed to I");
  }
  const double ck = sft_weight(cfg.eta, cfg.k);
  const PhiGram pg = build_phi(batch);
  const double bf = static_cast<double>(b);

  SftGdResult out;
  SftTrajectory& traj = out.trajectory;
  traj.lambda_max = lambda_max_symmetric(pg.gram);
  traj.lambda_min_positive = lambda_min_positive(pg.gram);

  if (cfg.step) {
    traj.step = *cfg.step;
    if (!(traj.step >= 0.0)) throw ConfigError("sft_gd: step must be >= 0");
    const double bound = 2.0 * bf / (ck * traj.lambda_max);
    if (cfg.strict_step && traj.lambda_max > 0.0 && traj.step >= bound) {
      std::ostringstream os;
      os << "sft_gd: step " << traj.step << " violates the stability bound " << bound;
      throw ConfigError(os.str());
    }
  } else {
    traj.step = traj.lambda_max > 0.0 ? bf / (ck * traj.lambda_max) : 0.0;
  }
  const double scaled = traj.step * ck / bf;
  traj.contraction = std::max(std::abs(1.0 - scaled * traj.lambda_max),
                              std::abs(1.0 - scaled * traj.lambda_min_positive));

  const Matrix target = nearest_zero_loss(pg.phi, batch.omega, init.value, cfg.eta,
                                          kDefaultPinvTolerance);
  Matrix v = init.value;
  const Matrix eta_omega = cfg.eta * batch.omega;
  const double d0 = (v - target).norm();
  traj.loss.push_back(sft_loss_identity_key(v, pg.phi, batch.omega, cfg.eta, cfg.k));
  traj.distance.push_back(d0);
  for (Index t = 0; t < cfg.steps; ++t) {
    v -= scaled * ((v * pg.phi + eta_omega) * pg.phi.transpose());
    const double dist = (v - target).norm();
    const double loss = sft_loss_identity_key(v, pg.phi, batch.omega, cfg.eta, cfg.k);
    if (!std::isfinite(dist) || !std::isfinite(loss) ||
        dist > cfg.divergence_factor * std::max(d0, 1e-300)) {
      throw DivergenceError("sft_gd diverged at step " + std::to_string(t + 1),
                            static_cast<std::size_t>(t + 1));
    }
    traj.loss.push_back(loss);
    traj.distance.push_back(dist);
  }
  out.params.value = std::move(v);
  out.params.key_query = Matrix::Identity(d, d);
  return out;
}

Matrix sft_population_limit(const Matrix& A, const Matrix& gamma0_inv, double eta, Index n) {
  require_square(A, "sft_population_limit");
  check_eta(eta);
  if (n < 1) throw DomainError("sft_population_limit: n must be >= 1");
  const Index d = A.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix range_proj = A * pinv(A);
  const Matrix second_moment = (1.0 + inv_n) * A + (A.trace() * inv_n) * range_proj;
  return -eta * pinv(second_moment) - gamma0_inv * (Matrix::Identity(d, d) - range_proj);
}

}  // namespace icl
