#include "icl/rmt_theory.hpp"

#include <cmath>
#include <sstream>

#include "icl/errors.hpp"

namespace icl {
namespace {

double captured_rank(double q, const std::array<double, 2>& mu, const std::array<double, 2>& a_sq) {
  double total = 0.0;
  for (std::size_t k = 0; k < 2; ++k) total += mu[k] * a_sq[k] * q / (1.0 + a_sq[k] * q);
  return total;
}

void check_inputs(const TheoryInputs& inp) {
  if (!(inp.rho >= 0.0)) throw DomainError("theory: rho must be >= 0");
  if (!(inp.r >= 0.0)) throw DomainError("theory: r must be >= 0");
  if (!(inp.eta > 0.0 && inp.eta < 1.0)) throw DomainError("theory: eta must lie in (0, 1)");
  if (!(inp.gamma > 0.0)) throw DomainError("theory: gamma must be > 0");
  if (!(inp.mu1 > 0.0 && inp.mu1 < 1.0)) throw DomainError("theory: mu1 must lie in (0, 1)");
}

// Shared block-weighted bracket: sum_k mu_k x_k [p_k^2 (1 - w_k) + (p_k + e_k)^2 w_k].
double weighted_bracket(const TheoryConstants& c, double x1, double x2, double p1, double p2,
                        double e1, double e2, double w1, double w2) {
  const double b1 = p1 * p1 * (1.0 - w1) + (p1 + e1) * (p1 + e1) * w1;
  const double b2 = p2 * p2 * (1.0 - w2) + (p2 + e2) * (p2 + e2) * w2;
  return c.mu1 * x1 * b1 + c.mu2 * x2 * b2;
}

}  // namespace

std::optional<double> solve_q(double beta, std::array<double, 2> mu, std::array<double, 2> a_sq) {
  if (!(beta >= 0.0)) throw DomainError("solve_q: beta must be >= 0");
  if (a_sq[0] < 0.0 || a_sq[1] < 0.0) throw DomainError("solve_q: a_k^2 must be >= 0");
  if (beta >= 1.0) return std::nullopt;
  if (beta == 0.0) return 0.0;
  double reachable = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    if (a_sq[k] > 0.0) reachable += mu[k];
  }
  if (beta >= reachable) {
    std::ostringstream os;
    os << "solve_q: beta = " << beta << " exceeds the attainable rank fraction " << reachable;
    throw DomainError(os.str());
  }

  double lo = 0.0;
  double hi = 1.0;
  while (captured_rank(hi, mu, a_sq) <= beta) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw NumericalError("solve_q: bracket expansion overflowed");
  }
  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < 400; ++iter) {
    mid = 0.5 * (lo + hi);
    const double value = captured_rank(mid, mu, a_sq);
    if (std::abs(value - beta) <= 1e-14 || hi - lo <= 1e-16 * hi) break;
    (value < beta ? lo : hi) = mid;
  }
  return mid;
}

TheoryConstants theory_constants(const TheoryInputs& inp) {
  check_inputs(inp);
  if (inp.r == 0.0) {
    throw PoleError("theory_constants: r = 0 is a pole of delta_2 (use the r -> 0+ coefficient)");
  }
  TheoryConstants c;
  c.mu1 = inp.mu1;
  c.mu2 = 1.0 - inp.mu1;
  c.kappa = inp.gamma * (inp.mu1 * inp.rho + 1.0 - inp.mu1);
  c.a1 = inp.eta * (inp.rho + 1.0);
  c.a2 = inp.r;
  c.sigma1 = inp.rho + 1.0;
  c.sigma2 = 1.0;
  c.alpha1 = (c.kappa - 1.0) / (inp.rho + c.kappa);
  c.alpha2 = c.kappa / (c.kappa + 1.0);
  c.delta1 = (1.0 - c.kappa) / (inp.rho + c.kappa);
  c.delta_t1 = c.delta1 / c.sigma1;
  c.delta2 = 1.0 / (1.0 + c.kappa) - inp.eta / inp.r;
  c.delta_t2 = c.delta2;
  c.g1 = -1.0 / (inp.rho + c.kappa);
  c.g2 = -1.0 / (1.0 + c.kappa);
  const double mean_a = c.mu1 * c.a1 + c.mu2 * c.a2;
  c.s1 = mean_a * c.a1;
  c.s2 = mean_a * c.a2;
  c.sigma_bar = c.mu1 * c.sigma1 + c.mu2 * c.sigma2;
  return c;
}

TheoryComponents theory_components(const TheoryInputs& inp) {
  const TheoryConstants c = theory_constants(inp);
  if (!(inp.beta >= 0.0)) throw DomainError("theory_components: beta must be >= 0");
  if (std::abs(inp.beta - 1.0) <= kPoleGuard) {
    std::ostringstream os;
    os << "theory_components: beta = " << inp.beta << " lies within " << kPoleGuard
       << " of the pole at beta = 1";
    throw PoleError(os.str());
  }
  const std::array<double, 2> mu{c.mu1, c.mu2};
  const std::array<double, 2> a_sq{c.a1 * c.a1, c.a2 * c.a2};

  TheoryComponents out;
  const std::optional<double> q = solve_q(inp.beta, mu, a_sq);
  if (q) {
    out.q = *q;
    out.w1 = a_sq[0] * out.q / (1.0 + a_sq[0] * out.q);
    out.w2 = a_sq[1] * out.q / (1.0 + a_sq[1] * out.q);
    out.v1 = out.w1 * (1.0 - out.w1);
    out.v2 = out.w2 * (1.0 - out.w2);
    const double den = c.mu1 * out.v1 + c.mu2 * out.v2;
    out.t12 = den > 0.0 ? c.mu1 * c.mu2 * out.v1 * out.v2 / den : 0.0;
  } else {
    out.saturated = true;
    out.w1 = out.w2 = 1.0;
  }

  const double dt1 = c.delta_t1;
  const double dt2 = c.delta_t2;
  out.bias = weighted_bracket(c, 1.0, 1.0, c.alpha1, c.alpha2, c.delta1, c.delta2, out.w1, out.w2) +
             out.t12 * (dt2 * dt2 - dt1 * dt1) * (c.sigma1 * c.sigma1 - c.sigma2 * c.sigma2);

  if (!out.saturated) {
    const double den = c.mu1 * out.w1 * out.w1 / a_sq[0] + c.mu2 * out.w2 * out.w2 / a_sq[1];
    if (out.q > 0.0 && den > 0.0) {
      const double num = c.mu1 * c.sigma1 * c.sigma1 * out.w1 * out.w1 / a_sq[0] +
                         c.mu2 * c.sigma2 * c.sigma2 * out.w2 * out.w2 / a_sq[1];
      const double num_sigma = c.mu1 * c.sigma1 * out.w1 * out.w1 / a_sq[0] +
                               c.mu2 * c.sigma2 * out.w2 * out.w2 / a_sq[1];
      out.t_inv = out.q * num / den;
      out.t_inv_sigma = out.q * num_sigma / den;
    }
  } else {
    const double scale = 1.0 / (inp.beta - 1.0);
    out.t_inv = scale * (c.mu1 * c.sigma1 * c.sigma1 / a_sq[0] +
                         c.mu2 * c.sigma2 * c.sigma2 / a_sq[1]);
    out.t_inv_sigma = scale * (c.mu1 * c.sigma1 / a_sq[0] + c.mu2 * c.sigma2 / a_sq[1]);
  }

  // Cross-block mass of the projection enters every weighted trace of
  // V_S X V_S^T (X block-diagonal with entries x_k) as T12 (dt2^2 - dt1^2) (x1 - x2),
  // the same way it enters the bias with x_k = Sigma_k^2.
  const double cross = out.t12 * (dt2 * dt2 - dt1 * dt1);
  out.t_var = weighted_bracket(c, c.s1, c.s2, c.g1, c.g2, dt1, dt2, out.w1, out.w2) +
              cross * (c.s1 - c.s2);
  out.t_var_sigma = weighted_bracket(c, c.sigma1, c.sigma2, c.g1, c.g2, dt1, dt2, out.w1, out.w2) +
                    cross * (c.sigma1 - c.sigma2);

  const double g = inp.gamma;
  out.f = out.bias + g * out.t_inv * out.t_var + g * c.sigma_bar * out.t_var_sigma +
          g * g * c.sigma_bar * out.t_inv_sigma * out.t_var;
  return out;
}

TheoryEndpoints theory_endpoints(const TheoryInputs& inp) {
  const TheoryConstants c = theory_constants(inp);
  const double g = inp.gamma;
  const double dt1 = c.delta_t1;
  const double dt2 = c.delta_t2;
  TheoryEndpoints out;

  out.f0 = c.mu1 * c.alpha1 * c.alpha1 + c.mu2 * c.alpha2 * c.alpha2 +
           g * c.sigma_bar * (c.mu1 * c.sigma1 * c.g1 * c.g1 + c.mu2 * c.sigma2 * c.g2 * c.g2);

  const double full1 = c.alpha1 + c.delta1;
  const double full2 = c.alpha2 + c.delta2;
  const double var1 = c.g1 + dt1;
  const double var2 = c.g2 + dt2;
  out.f_inf = c.mu1 * full1 * full1 + c.mu2 * full2 * full2 +
              g * c.sigma_bar * (c.mu1 * c.sigma1 * var1 * var1 + c.mu2 * c.sigma2 * var2 * var2);

  // Derivatives at beta = 0 via q'(0) = 1/c, w_k'(0) = a_k^2 / c and
  // T12'(0) = mu1 mu2 a1^2 a2^2 / c^2.
  const double a1s = c.a1 * c.a1;
  const double a2s = c.a2 * c.a2;
  const double cc = c.mu1 * a1s + c.mu2 * a2s;
  const double dw1 = a1s / cc;
  const double dw2 = a2s / cc;
  const double dt12 = c.mu1 * c.mu2 * a1s * a2s / (cc * cc);

  const double bias_prime =
      c.mu1 * dw1 * (2.0 * c.alpha1 * c.delta1 + c.delta1 * c.delta1) +
      c.mu2 * dw2 * (2.0 * c.alpha2 * c.delta2 + c.delta2 * c.delta2) +
      dt12 * (dt2 * dt2 - dt1 * dt1) * (c.sigma1 * c.sigma1 - c.sigma2 * c.sigma2);
  const double t_inv_prime =
      (c.mu1 * c.sigma1 * c.sigma1 * a1s + c.mu2 * c.sigma2 * c.sigma2 * a2s) / (cc * cc);
  const double t_inv_sigma_prime = (c.mu1 * c.sigma1 * a1s + c.mu2 * c.sigma2 * a2s) / (cc * cc);
  const double t_var0 = c.mu1 * c.s1 * c.g1 * c.g1 + c.mu2 * c.s2 * c.g2 * c.g2;
  const double t_var_sigma_prime =
      c.mu1 * c.sigma1 * dw1 * (2.0 * c.g1 * dt1 + dt1 * dt1) +
      c.mu2 * c.sigma2 * dw2 * (2.0 * c.g2 * dt2 + dt2 * dt2) +
      dt12 * (dt2 * dt2 - dt1 * dt1) * (c.sigma1 - c.sigma2);

  out.f_prime0 = bias_prime + g * (t_inv_prime * t_var0 + c.sigma_bar * t_var_sigma_prime) +
                 g * g * c.sigma_bar * t_inv_sigma_prime * t_var0;
  return out;
}

double interference_gap_coefficient(const TheoryInputs& inp) {
  check_inputs(inp);
  const double mu2 = 1.0 - inp.mu1;
  const double sigma_bar = inp.mu1 * (inp.rho + 1.0) + mu2;
  return mu2 * (1.0 + inp.gamma * sigma_bar) * inp.eta * inp.eta;
}

}  // namespace icl
