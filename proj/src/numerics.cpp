#include "icl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "icl/errors.hpp"

namespace icl {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_key(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a + kGolden) ^ (b * 0xD6E8FEB86659FD93ULL + 0x632BE59BD9B4E019ULL));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      key_(derive_key(seed, stream_id)),
      tweak_(mix64(key_ ^ 0xA0761D6478BD642FULL)) {}

RngStream::result_type RngStream::operator()() {
  ++counter_;
  return mix64(mix64(key_ + counter_ * kGolden) ^ tweak_);
}

RngStream RngStream::split(std::uint64_t child_id) const {
  return RngStream(seed_, derive_key(stream_id_ ^ key_, child_id));
}

double RngStream::normal() { return normal_(*this); }

double RngStream::chi_squared(double dof) {
  std::chi_squared_distribution<double> dist(dof);
  return dist(*this);
}

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) {
    throw NumericalError(std::string(what) + ": matrix contains NaN or Inf");
  }
}

void require_square(const Matrix& m, std::string_view what) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
    throw DomainError(os.str());
  }
}

PinvResult pinv_with_rank(const Matrix& m, double rel_tol) {
  if (!(rel_tol > 0.0)) throw DomainError("pinv: rel_tol must be positive");
  require_finite(m, "pinv");
  PinvResult out;
  if (m.size() == 0) {
    out.pinv = Matrix::Zero(m.cols(), m.rows());
    return out;
  }
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw NumericalError("pinv: SVD failed on " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " matrix");
  }
  const Vector& s = svd.singularValues();
  out.sigma_max = s.size() > 0 ? s(0) : 0.0;
  const double cutoff = rel_tol * out.sigma_max;
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) {
      inv(i) = 1.0 / s(i);
      out.sigma_min_kept = s(i);
      ++out.rank;
    }
  }
  out.pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  if (!out.pinv.allFinite()) {
    std::ostringstream os;
    os << "pinv: non-finite result (sigma_max=" << out.sigma_max
       << ", sigma_min_kept=" << out.sigma_min_kept << ", rank=" << out.rank << ")";
    throw NumericalError(os.str());
  }
  return out;
}

Matrix pinv(const Matrix& m, double rel_tol) { return pinv_with_rank(m, rel_tol).pinv; }

double spectral_radius(const Matrix& m) {
  require_square(m, "spectral_radius");
  require_finite(m, "spectral_radius");
  if (m.size() == 0) return 0.0;
  if (m.isDiagonal(0.0)) return m.diagonal().cwiseAbs().maxCoeff();
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("spectral_radius: eigensolver did not converge");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double lambda_max_symmetric(const Matrix& m) {
  require_square(m, "lambda_max_symmetric");
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalError("lambda_max_symmetric: eigensolver did not converge");
  }
  return es.eigenvalues().maxCoeff();
}

double lambda_min_positive(const Matrix& m, double rel_tol) {
  require_square(m, "lambda_min_positive");
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalError("lambda_min_positive: eigensolver did not converge");
  }
  const Vector& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  if (top <= 0.0) return 0.0;
  double best = top;
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > rel_tol * top) best = std::min(best, ev(i));
  }
  return best;
}

Matrix psd_sqrt(const Matrix& cov) {
  require_square(cov, "psd_sqrt");
  require_finite(cov, "psd_sqrt");
  if (cov.isDiagonal(0.0)) {
    Vector diag = cov.diagonal();
    const double scale = diag.cwiseAbs().maxCoeff();
    for (Index i = 0; i < diag.size(); ++i) {
      if (diag(i) < -1e-12 * scale) throw DomainError("psd_sqrt: covariance is not PSD");
      diag(i) = std::sqrt(std::max(diag(i), 0.0));
    }
    return diag.asDiagonal();
  }
  const Matrix sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) {
    throw NumericalError("psd_sqrt: eigensolver did not converge");
  }
  Vector ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-12 * scale) {
      std::ostringstream os;
      os << "psd_sqrt: covariance is not PSD (eigenvalue " << ev(i) << ", norm " << scale << ")";
      throw DomainError(os.str());
    }
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Matrix standard_normal(Index rows, Index cols, RngStream& rng) {
  Matrix z(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) z(i, j) = rng.normal();
  }
  return z;
}

Matrix sample_gaussian(const Matrix& cov, Index count, RngStream& rng) {
  if (count < 0) throw DomainError("sample_gaussian: negative count");
  const Matrix root = psd_sqrt(cov);
  return root * standard_normal(cov.rows(), count, rng);
}

}  // namespace icl
