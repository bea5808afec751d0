#pragma once

// Dense linear-algebra primitives shared by every module: pseudoinverse,
// spectral radius, PSD square roots and seeded Gaussian sampling.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>

namespace icl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kDefaultPinvTolerance = 1e-10;

/// Counter-based random stream. Draw i of stream (seed, stream_id) is a keyed
/// hash of the counter i, so any stream can be reconstructed from its two
/// identifiers alone and child streams can be derived without touching the
/// parent's state. Satisfies UniformRandomBitGenerator.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  /// Independent child stream keyed by (this stream, child_id). Does not
  /// advance this stream.
  RngStream split(std::uint64_t child_id) const;

  double normal();
  double chi_squared(double dof);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t tweak_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_;
};

struct PinvResult {
  Matrix pinv;
  Index rank = 0;
  double sigma_max = 0.0;
  /// Smallest singular value that survived the cutoff (0 when rank == 0).
  double sigma_min_kept = 0.0;
};

/// Moore-Penrose pseudoinverse by SVD. Singular values below
/// rel_tol * sigma_max are treated as zero.
PinvResult pinv_with_rank(const Matrix& m, double rel_tol = kDefaultPinvTolerance);
Matrix pinv(const Matrix& m, double rel_tol = kDefaultPinvTolerance);

/// max |lambda| over the (possibly complex) eigenvalues of a square matrix.
double spectral_radius(const Matrix& m);

/// Largest eigenvalue of a symmetric matrix.
double lambda_max_symmetric(const Matrix& m);

/// Smallest eigenvalue above rel_tol * lambda_max of a symmetric PSD matrix,
/// 0 if the matrix is zero.
double lambda_min_positive(const Matrix& m, double rel_tol = kDefaultPinvTolerance);

/// Symmetric square root of a PSD matrix via eigendecomposition. Eigenvalues
/// in [-1e-12 * ||cov||, 0) are clipped to zero; anything more negative is a
/// DomainError.
Matrix psd_sqrt(const Matrix& cov);

/// d x count matrix with i.i.d. N(0, cov) columns.
Matrix sample_gaussian(const Matrix& cov, Index count, RngStream& rng);

/// d x count matrix of i.i.d. standard normals, filled column by column.
Matrix standard_normal(Index rows, Index cols, RngStream& rng);

/// Throws NumericalError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
void require_square(const Matrix& m, std::string_view what);

}  // namespace icl
