#include "icl/task_data.hpp"

#include <cmath>
#include <sstream>

#include "icl/errors.hpp"

namespace icl {

CovarianceSpec CovarianceSpec::pretrain(Index d, Index m, double rho) {
  CovarianceSpec s;
  s.kind = CovarianceKind::kPretrain;
  s.d = d;
  s.m = m;
  s.rho = rho;
  return s;
}

CovarianceSpec CovarianceSpec::shift(Index d, Index m) {
  CovarianceSpec s;
  s.kind = CovarianceKind::kShift;
  s.d = d;
  s.m = m;
  return s;
}

CovarianceSpec CovarianceSpec::posttest(Index d, Index m, double rho) {
  CovarianceSpec s = pretrain(d, m, rho);
  s.kind = CovarianceKind::kPosttest;
  return s;
}

CovarianceSpec CovarianceSpec::posttrain(Index d, Index m, double rho, double r, double eta) {
  CovarianceSpec s = pretrain(d, m, rho);
  s.kind = CovarianceKind::kPosttrain;
  s.r = r;
  s.eta = eta;
  return s;
}

CovarianceSpec CovarianceSpec::dense(Matrix cov) {
  CovarianceSpec s;
  s.kind = CovarianceKind::kCustom;
  s.d = cov.rows();
  s.custom = std::move(cov);
  return s;
}

void validate(const CovarianceSpec& spec) {
  if (spec.kind == CovarianceKind::kCustom) {
    require_square(spec.custom, "CovarianceSpec");
    require_finite(spec.custom, "CovarianceSpec");
    return;
  }
  std::ostringstream os;
  if (!(spec.m > 0 && spec.m < spec.d)) {
    os << "CovarianceSpec: need 0 < m < d (m=" << spec.m << ", d=" << spec.d << ")";
    throw DomainError(os.str());
  }
  if (!(spec.rho >= 0.0)) throw DomainError("CovarianceSpec: rho must be >= 0");
  if (spec.kind == CovarianceKind::kPosttrain) {
    if (!(spec.r >= 0.0)) throw DomainError("CovarianceSpec: r must be >= 0");
    if (!(spec.eta > 0.0 && spec.eta < 1.0)) {
      throw DomainError("CovarianceSpec: eta must lie in (0, 1)");
    }
  }
}

Matrix materialize(const CovarianceSpec& spec) {
  validate(spec);
  if (spec.kind == CovarianceKind::kCustom) return spec.custom;
  const Index rest = spec.d - spec.m;
  Vector diag(spec.d);
  switch (spec.kind) {
    case CovarianceKind::kPretrain:
      diag << Vector::Constant(spec.m, spec.rho), Vector::Ones(rest);
      break;
    case CovarianceKind::kShift:
      diag << Vector::Ones(spec.m), Vector::Zero(rest);
      break;
    case CovarianceKind::kPosttest:
      diag << Vector::Constant(spec.m, spec.rho + 1.0), Vector::Ones(rest);
      break;
    case CovarianceKind::kPosttrain:
      diag << Vector::Constant(spec.m, spec.eta * (spec.rho + 1.0)),
          Vector::Constant(rest, spec.r);
      break;
    case CovarianceKind::kCustom:
      break;
  }
  return diag.asDiagonal();
}

Matrix gamma0(const Matrix& sigma0, Index n) {
  require_square(sigma0, "gamma0");
  if (n < 1) throw DomainError("gamma0: prompt length must be >= 1");
  const double inv_n = 1.0 / static_cast<double>(n);
  return (1.0 + inv_n) * sigma0 +
         (sigma0.trace() * inv_n) * Matrix::Identity(sigma0.rows(), sigma0.cols());
}

Matrix gamma0_inverse(const Matrix& sigma0, Index n) {
  const Matrix g = gamma0(sigma0, n);
  if (g.isDiagonal(0.0)) {
    const Vector diag = g.diagonal();
    if ((diag.array() <= 0.0).any()) {
      throw SingularityError("gamma0_inverse: Gamma0 is singular (tr(Sigma0) = 0?)");
    }
    return diag.cwiseInverse().asDiagonal();
  }
  Eigen::FullPivLU<Matrix> lu(g);
  if (!lu.isInvertible()) {
    throw SingularityError("gamma0_inverse: Gamma0 is singular (tr(Sigma0) = 0?)");
  }
  return lu.inverse();
}

PromptBatch PromptBatch::prefix(Index count) const {
  if (count < 0 || count > size()) throw DomainError("PromptBatch::prefix: count out of range");
  PromptBatch out;
  out.n = n;
  out.omega = omega.leftCols(count);
  out.signal = signal.leftCols(count);
  if (!covariances.empty()) {
    out.covariances.assign(covariances.begin(), covariances.begin() + count);
  }
  if (!features.empty()) out.features.assign(features.begin(), features.begin() + count);
  out.seed = seed;
  out.stream_id = stream_id;
  return out;
}

namespace {

void check_batch_args(const Matrix& A, Index B, Index n) {
  require_square(A, "prompt batch covariance");
  if (B < 1) throw DomainError("prompt batch: B must be >= 1");
  if (n < 1) throw DomainError("prompt batch: n must be >= 1");
}

}  // namespace

PromptBatch gen_prompt_batch(const Matrix& A, Index B, Index n, RngStream& rng,
                             const BatchOptions& options) {
  check_batch_args(A, B, n);
  const Index d = A.rows();
  const Matrix root = psd_sqrt(A);
  PromptBatch batch;
  batch.n = n;
  batch.seed = rng.seed();
  batch.stream_id = rng.stream_id();
  batch.omega.resize(d, B);
  batch.signal.resize(d, B);
  if (options.keep_covariances) batch.covariances.reserve(static_cast<std::size_t>(B));
  if (options.keep_features) batch.features.reserve(static_cast<std::size_t>(B));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Index tau = 0; tau < B; ++tau) {
    RngStream sub = rng.split(static_cast<std::uint64_t>(tau));
    const Vector w = standard_normal(d, 1, sub);
    Matrix x = root * standard_normal(d, n, sub);
    batch.omega.col(tau) = w;
    batch.signal.col(tau) = inv_n * (x * (x.transpose() * w));
    if (options.keep_covariances) {
      Matrix s = Matrix::Zero(d, d);
      s.selfadjointView<Eigen::Lower>().rankUpdate(x, inv_n);
      batch.covariances.push_back(s.selfadjointView<Eigen::Lower>());
    }
    if (options.keep_features) batch.features.push_back(std::move(x));
  }
  return batch;
}

PromptBatch gen_prompt_signals(const Matrix& A, Index B, Index n, RngStream& rng) {
  check_batch_args(A, B, n);
  const Index d = A.rows();
  const Matrix root = psd_sqrt(A);
  const bool diagonal = root.isDiagonal(0.0);
  const Vector root_diag = root.diagonal();
  PromptBatch batch;
  batch.n = n;
  batch.seed = rng.seed();
  batch.stream_id = rng.stream_id();
  batch.omega.resize(d, B);
  batch.signal.resize(d, B);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Index tau = 0; tau < B; ++tau) {
    RngStream sub = rng.split(static_cast<std::uint64_t>(tau));
    const Vector w = standard_normal(d, 1, sub);
    batch.omega.col(tau) = w;
    const Vector u = diagonal ? Vector(root_diag.cwiseProduct(w)) : Vector(root * w);
    const double norm_u = u.norm();
    const double c = sub.chi_squared(static_cast<double>(n));
    Vector xi = standard_normal(d, 1, sub);
    if (norm_u == 0.0) {
      batch.signal.col(tau).setZero();
      continue;
    }
    const Vector dir = u / norm_u;
    xi -= dir * dir.dot(xi);
    const Vector y = norm_u * (c * dir + std::sqrt(c) * xi);
    batch.signal.col(tau) =
        inv_n * (diagonal ? Vector(root_diag.cwiseProduct(y)) : Vector(root * y));
  }
  return batch;
}

PhiGram build_phi(const PromptBatch& batch) {
  PhiGram out;
  if (batch.has_covariances()) {
    out.phi.resize(batch.dim(), batch.size());
    for (Index tau = 0; tau < batch.size(); ++tau) {
      out.phi.col(tau) = batch.covariances[static_cast<std::size_t>(tau)] * batch.omega.col(tau);
    }
  } else {
    out.phi = batch.signal;
  }
  out.gram = out.phi * out.phi.transpose();
  return out;
}

}  // namespace icl
