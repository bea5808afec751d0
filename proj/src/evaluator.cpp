#include "icl/evaluator.hpp"

#include <cmath>
#include <vector>

#include "icl/errors.hpp"

namespace icl {
namespace {

// Pairwise summation in a fixed order.
double pairwise_sum(const std::vector<double>& xs, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += xs[i];
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(xs, lo, mid) + pairwise_sum(xs, mid, hi);
}

}  // namespace

double posttest_error_exact(const Matrix& value, const Matrix& sigma, Index n) {
  require_square(value, "posttest_error_exact");
  require_square(sigma, "posttest_error_exact");
  if (value.rows() != sigma.rows()) throw DomainError("posttest_error_exact: dimension mismatch");
  if (n < 1) throw DomainError("posttest_error_exact: n must be >= 1");
  const Index d = value.rows();
  const Matrix vs = value * sigma;
  const double bias = (Matrix::Identity(d, d) + vs).squaredNorm();
  const double quad = vs.squaredNorm();                     // tr(V S^2 V^T)
  const double cross = (vs.array() * value.array()).sum();  // tr(V S V^T)
  return bias + (quad + cross * sigma.trace()) / static_cast<double>(n);
}

ErrorReport posttest_error_mc(const LsaParams& params, const Matrix& sigma, Index n, Index k,
                              Index trials, RngStream& rng) {
  if (trials < 1) throw DomainError("posttest_error_mc: trials must be >= 1");
  if (n < 1) throw DomainError("posttest_error_mc: n must be >= 1");
  if (k < 1) throw DomainError("posttest_error_mc: k must be >= 1");
  const Index d = params.dim();
  if (sigma.rows() != d || sigma.cols() != d) {
    throw DomainError("posttest_error_mc: dimension mismatch");
  }
  const Matrix root = psd_sqrt(sigma);
  const double inv_n = 1.0 / static_cast<double>(n);

  ErrorReport rep;
  rep.trials = trials;
  rep.k_used = k;
  if (k == 1 && params.key_query == Matrix::Identity(d, d)) {
    rep.exact = posttest_error_exact(params.value, sigma, n);
  }

  std::vector<double> errors;
  errors.reserve(static_cast<std::size_t>(trials));
  for (Index t = 0; t < trials; ++t) {
    RngStream sub = rng.split(static_cast<std::uint64_t>(t));
    const Vector w_star = standard_normal(d, 1, sub);
    const Matrix x = root * standard_normal(d, n, sub);
    const Matrix s = inv_n * (x * x.transpose());
    try {
      const Rollout r = cot_rollout(params, s, w_star, k);
      const double err = (r.w_hats.back() - w_star).squaredNorm();
      if (!std::isfinite(err)) {
        ++rep.divergent;
        continue;
      }
      errors.push_back(err);
    } catch (const DivergenceError&) {
      ++rep.divergent;
    }
  }

  if (errors.empty()) {
    rep.mc_mean = std::numeric_limits<double>::infinity();
    rep.mc_stderr = std::numeric_limits<double>::infinity();
    return rep;
  }
  const double count = static_cast<double>(errors.size());
  rep.mc_mean = pairwise_sum(errors, 0, errors.size()) / count;
  std::vector<double> sq(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const double dev = errors[i] - rep.mc_mean;
    sq[i] = dev * dev;
  }
  const double var = errors.size() > 1 ? pairwise_sum(sq, 0, sq.size()) / (count - 1.0) : 0.0;
  rep.mc_stderr = std::sqrt(var / count);
  return rep;
}

}  // namespace icl
