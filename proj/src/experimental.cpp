#include "icl/experimental.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "icl/errors.hpp"

namespace icl::experimental {
namespace {

Matrix block_gradient(const ParamsLoss& loss, LsaParams& probe, Matrix LsaParams::*block,
                      double h) {
  Matrix& m = probe.*block;
  Matrix grad(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) {
      const double saved = m(i, j);
      // Scale the step with the entry so it still moves the argument when |entry| >> 1.
      const double step = h * std::max(1.0, std::abs(saved));
      const double hi = saved + step;
      const double lo = saved - step;
      m(i, j) = hi;
      const double up = loss(probe);
      m(i, j) = lo;
      const double down = loss(probe);
      m(i, j) = saved;
      grad(i, j) = (up - down) / (hi - lo);
    }
  }
  return grad;
}

}  // namespace

LsaParams fd_gradient(const ParamsLoss& loss, const LsaParams& at, double h) {
  if (!(h > 0.0)) throw DomainError("fd_gradient: h must be positive");
  LsaParams probe = at;
  LsaParams grad;
  grad.value = block_gradient(loss, probe, &LsaParams::value, h);
  grad.key_query = block_gradient(loss, probe, &LsaParams::key_query, h);
  return grad;
}

FdDescentResult fd_descent(const ParamsLoss& loss, const LsaParams& init, double step, Index steps,
                           double h) {
  FdDescentResult out;
  out.params = init;
  out.loss.push_back(loss(out.params));
  for (Index t = 0; t < steps; ++t) {
    const LsaParams g = fd_gradient(loss, out.params, h);
    out.params.value -= step * g.value;
    out.params.key_query -= step * g.key_query;
    const double value = loss(out.params);
    if (!std::isfinite(value)) {
      throw DivergenceError("fd_descent diverged at step " + std::to_string(t + 1),
                            static_cast<std::size_t>(t + 1));
    }
    out.loss.push_back(value);
  }
  return out;
}

}  // namespace icl::experimental
