#pragma once

// Proportional-regime (d, m, n, B -> infinity with B/d = beta, m/d = mu1,
// d/n = gamma) prediction of the dimension-normalized post-test error of the
// first-order SFT solution for the two-block covariance model.
//
// Block k has post-train scale a_k (a_1 = eta (rho + 1), a_2 = r) and
// post-test scale Sigma_k (Sigma_1 = rho + 1, Sigma_2 = 1). The projection of
// the post-train signal onto block k captures a fraction w_k of that block,
// with w_k = a_k^2 q / (1 + a_k^2 q) and q the root of
// beta = sum_k mu_k w_k(q). For beta >= 1 the projection is full rank.

#include <array>
#include <optional>

namespace icl {

struct TheoryInputs {
  double rho = 0.1;
  double r = 0.1;
  double eta = 0.2;
  double gamma = 1.0;  // d / n
  double mu1 = 0.5;    // m / d
  double beta = 0.5;   // B / d
};

struct TheoryConstants {
  double kappa = 0.0;
  double mu1 = 0.0, mu2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
  double sigma1 = 0.0, sigma2 = 0.0;
  double alpha1 = 0.0, alpha2 = 0.0;
  double delta1 = 0.0, delta2 = 0.0;
  double delta_t1 = 0.0, delta_t2 = 0.0;
  double g1 = 0.0, g2 = 0.0;
  double s1 = 0.0, s2 = 0.0;
  double sigma_bar = 0.0;
};

struct TheoryComponents {
  double q = 0.0;
  bool saturated = false;  // beta >= 1
  double w1 = 0.0, w2 = 0.0;
  double v1 = 0.0, v2 = 0.0;
  double t12 = 0.0;
  double bias = 0.0;
  double t_inv = 0.0;
  double t_inv_sigma = 0.0;
  double t_var = 0.0;
  double t_var_sigma = 0.0;
  double f = 0.0;
};

struct TheoryEndpoints {
  double f0 = 0.0;       // F(0)
  double f_inf = 0.0;    // lim_{beta -> inf} F(beta)
  double f_prime0 = 0.0; // dF/dbeta at 0
};

inline constexpr double kPoleGuard = 1e-6;

/// Non-negative root q of beta = sum_k mu_k a_k^2 q / (1 + a_k^2 q) by
/// bisection. Returns nullopt when beta >= 1 (rank saturation). Throws
/// DomainError when beta cannot be reached (every block carrying mass has
/// a_k = 0).
std::optional<double> solve_q(double beta, std::array<double, 2> mu, std::array<double, 2> a_sq);

/// Throws PoleError for r = 0 (the 1/r pole of delta_2) and DomainError for
/// inputs outside rho >= 0, 0 < eta < 1, gamma > 0, 0 < mu1 < 1.
TheoryConstants theory_constants(const TheoryInputs& inp);

/// All terms of F(beta) = Bias + gamma T_inv T_var + gamma Sigma_bar T_var_Sigma
/// + gamma^2 Sigma_bar T_inv_Sigma T_var. Throws PoleError when
/// |beta - 1| <= 1e-6.
TheoryComponents theory_components(const TheoryInputs& inp);

/// F(0), the beta -> infinity floor and F'(0). `inp.beta` is ignored.
TheoryEndpoints theory_endpoints(const TheoryInputs& inp);

/// Leading coefficient of (F(inf) - F(0)) r^2 as r -> 0+:
/// mu2 (1 + gamma Sigma_bar) eta^2.
double interference_gap_coefficient(const TheoryInputs& inp);

}  // namespace icl
