#include <gtest/gtest.h>

#include <cmath>

#include "icl/errors.hpp"
#include "icl/experimental.hpp"
#include "icl/sft_trainer.hpp"

namespace icl {
namespace {

PromptBatch scalar_batch(double s, double w) {
  PromptBatch b;
  b.n = 1;
  b.omega = Matrix::Constant(1, 1, w);
  b.covariances = {Matrix::Constant(1, 1, s)};
  b.signal = Matrix::Constant(1, 1, s * w);
  return b;
}

LsaParams identity_key(Matrix value) {
  LsaParams p;
  p.key_query = Matrix::Identity(value.rows(), value.rows());
  p.value = std::move(value);
  return p;
}

struct Instance {
  Matrix sigma0;
  Matrix gamma0_inv;
  PromptBatch batch;
};

Instance random_instance(std::uint64_t seed, Index d, Index b, Index n, bool covariances = true) {
  Instance inst;
  const Index m = std::max<Index>(1, d / 2);
  inst.sigma0 = materialize(CovarianceSpec::pretrain(d, m, 0.1));
  inst.gamma0_inv = gamma0_inverse(inst.sigma0, n);
  const Matrix a = materialize(CovarianceSpec::posttrain(d, m, 0.1, 0.3, 0.2));
  RngStream rng(seed, 0);
  BatchOptions opts;
  opts.keep_covariances = covariances;
  inst.batch = gen_prompt_batch(a, b, n, rng, opts);
  return inst;
}

TEST(SftWeight, ClosedForm) {
  EXPECT_NEAR(sft_weight(0.2, 1), 1.64, 1e-15);
  EXPECT_NEAR(sft_weight(0.5, 3), 1.0 + 0.25 + 0.0625 + 0.015625, 1e-15);
}

TEST(SftLoss, ScalarHandEvaluation) {
  SftConfig cfg;
  cfg.eta = 0.2;
  cfg.k = 1;
  EXPECT_NEAR(sft_loss(identity_key(Matrix::Zero(1, 1)), scalar_batch(2.0, 1.0), cfg), 0.0328, 1e-15);
}

TEST(SftLoss, GeneralPathMatchesIdentityKeyClosedForm) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Instance inst = random_instance(s, 5, 4, 7);
    RngStream rng(s, 1);
    const Matrix v = standard_normal(5, 5, rng);
    for (Index k : {1, 2, 5}) {
      SftConfig cfg;
      cfg.k = k;
      const double general = sft_loss(identity_key(v), inst.batch, cfg);
      const PhiGram pg = build_phi(inst.batch);
      const double closed = sft_loss_identity_key(v, pg.phi, inst.batch.omega, cfg.eta, k);
      EXPECT_NEAR(general, closed, 1e-10 * std::max(1.0, closed));
    }
  }
}

TEST(SftLoss, GeneralKeyQueryNeedsCovariances) {
  const Instance inst = random_instance(1, 4, 3, 5, false);
  LsaParams p = identity_key(Matrix::Zero(4, 4));
  p.key_query(0, 1) = 0.5;
  EXPECT_THROW(sft_loss(p, inst.batch, SftConfig{}), DomainError);
}

TEST(SftClosedForm, ScalarHandEvaluation) {
  const PromptBatch b = scalar_batch(2.0, 1.0);
  const LsaParams p = sft_closed_form(b, Matrix::Constant(1, 1, 1.0), 0.2);
  EXPECT_NEAR(p.value(0, 0), -0.1, 1e-15);
  EXPECT_NEAR(p.value(0, 0) * 2.0, -0.2, 1e-15);
}

TEST(SftClosedForm, ZeroRankSignalKeepsInitialization) {
  RngStream rng(2, 0);
  const Matrix sigma0 = materialize(CovarianceSpec::pretrain(4, 2, 0.1));
  const Matrix g = gamma0_inverse(sigma0, 5);
  const PromptBatch b = gen_prompt_batch(Matrix::Zero(4, 4), 3, 5, rng);
  EXPECT_EQ(sft_closed_form(b, g, 0.2).value, Matrix(-g));
}

TEST(SftClosedForm, ZeroLossAndMinimalDeviationConditions) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Index b = 2 + static_cast<Index>(s % 6);  // both B < d and B >= d
    const Instance inst = random_instance(s, 6, b, 9);
    const double eta = 0.2;
    const LsaParams p = sft_closed_form(inst.batch, inst.gamma0_inv, eta);
    const PhiGram pg = build_phi(inst.batch);
    const Matrix proj = pg.phi * pinv(pg.phi);
    if (b <= 6) {
      EXPECT_LE((p.value * pg.phi + eta * inst.batch.omega).cwiseAbs().maxCoeff(), 1e-8);
    }
    EXPECT_LE(((p.value + inst.gamma0_inv) * (Matrix::Identity(6, 6) - proj)).cwiseAbs().maxCoeff(),
              1e-8);
    if (b <= 6) {
      SftConfig cfg;
      EXPECT_LE(sft_loss(p, inst.batch, cfg), 1e-12);
    }
  }
}

TEST(SftClosedForm, GradientVanishesAtMinimizer) {
  const Instance inst = random_instance(4, 4, 3, 6);
  const LsaParams p = sft_closed_form(inst.batch, inst.gamma0_inv, 0.2);
  SftConfig cfg;
  cfg.k = 3;
  const experimental::ParamsLoss loss = [&](const LsaParams& q) {
    const PhiGram pg = build_phi(inst.batch);
    return sft_loss_identity_key(q.value, pg.phi, inst.batch.omega, cfg.eta, cfg.k);
  };
  const LsaParams grad = experimental::fd_gradient(loss, p, 1e-5);
  EXPECT_LE(grad.value.norm(), 1e-6);
}

TEST(SftClosedForm, MinimalDeviationAmongZeroLossPoints) {
  const Instance inst = random_instance(8, 6, 3, 10);
  const LsaParams p = sft_closed_form(inst.batch, inst.gamma0_inv, 0.2);
  const PhiGram pg = build_phi(inst.batch);
  const Matrix complement = Matrix::Identity(6, 6) - pg.phi * pinv(pg.phi);
  const double best = (p.value + inst.gamma0_inv).norm();
  RngStream rng(8, 1);
  for (int i = 0; i < 50; ++i) {
    // Adding Z (I - Phi Phi^+) keeps V Phi = -eta Omega.
    const Matrix candidate = p.value + standard_normal(6, 6, rng) * complement;
    EXPECT_LE((candidate * pg.phi + 0.2 * inst.batch.omega).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_GE((candidate + inst.gamma0_inv).norm(), best - 1e-12);
  }
}

TEST(SftClosedForm, IndependentOfChainLength) {
  const Instance inst = random_instance(3, 5, 4, 8);
  const Matrix v = sft_closed_form(inst.batch, inst.gamma0_inv, 0.2).value;
  SftConfig cfg;
  for (Index k : {1, 3, 8}) {
    cfg.k = k;
    EXPECT_LE(sft_loss(identity_key(v), inst.batch, cfg), 1e-12);
  }
}

TEST(SftFirstOrder, ExactWhenSignalHasNoNoise) {
  const Index d = 5;
  RngStream rng(1, 3);
  Matrix a = Matrix::Zero(d, d);
  a.diagonal() << 0.5, 0.5, 0.2, 0.2, 0.2;
  const Matrix omega = standard_normal(d, 3, rng);
  const Matrix g = gamma0_inverse(Matrix::Identity(d, d), 4);
  const Matrix phi = a * omega;
  EXPECT_LE((sft_first_order(phi, omega, a, g, 0.2) - sft_minimizer(phi, omega, g, 0.2))
                .cwiseAbs()
                .maxCoeff(),
            1e-10);
}

TEST(SftFirstOrder, TruncationLeavesLinearTermFromPinvRotation) {
  const Index d = 6;
  RngStream rng(2, 3);
  Matrix a = Matrix::Zero(d, d);
  a.diagonal() << 0.5, 0.5, 0.5, 0.2, 0.2, 0.2;
  const Matrix omega = standard_normal(d, 4, rng);
  const Matrix noise = standard_normal(d, 4, rng);
  const Matrix g = gamma0_inverse(Matrix::Identity(d, d), 10);
  const double eta = 0.2;
  const Matrix m = a * omega;
  const Matrix mp = pinv(m);
  const Matrix outside = Matrix::Identity(d, d) - m * mp;
  const auto residual = [&](double eps) {
    const Matrix phi = m + eps * noise;
    return Matrix(sft_minimizer(phi, omega, g, eta) - sft_first_order(phi, omega, a, g, eta));
  };
  // The truncated expansion keeps -M^+ E M^+ but drops the column-space
  // rotation term (M^+)^T E^T (I - M M^+) of the pseudoinverse derivative, so
  // the residual is linear in E with exactly that coefficient.
  const Matrix dropped = (g - eta * omega * mp) * mp.transpose() * noise.transpose() * outside;
  const double ratio = residual(1e-3).norm() / residual(5e-4).norm();
  EXPECT_NEAR(ratio, 2.0, 0.05);
  const auto second_order = [&](double eps) { return (residual(eps) - eps * dropped).norm(); };
  EXPECT_NEAR(second_order(1e-3) / second_order(5e-4), 4.0, 0.2);
}

TEST(SftGd, RankOneConvergesInOneStep) {
  PromptBatch b;
  b.n = 3;
  b.omega = Matrix::Zero(3, 1);
  b.omega(0, 0) = 1.0;
  b.signal = b.omega * 2.0;
  SftConfig cfg;
  cfg.steps = 1;
  const Matrix g = gamma0_inverse(Matrix::Identity(3, 3), 3);
  const SftGdResult r = sft_gd(identity_key(-g), b, cfg);
  EXPECT_NEAR(r.trajectory.contraction, 0.0, 1e-15);
  EXPECT_LE(r.trajectory.distance[1], 1e-12);
  EXPECT_LE((r.params.value - sft_closed_form(b, g, cfg.eta).value).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SftGd, MeasuredRateMatchesEigenvalueContraction) {
  const Instance inst = random_instance(6, 8, 5, 12, false);
  SftConfig cfg;
  cfg.k = 2;
  cfg.steps = 400;
  const SftGdResult r = sft_gd(identity_key(-inst.gamma0_inv), inst.batch, cfg);
  const auto& dist = r.trajectory.distance;
  const double predicted = std::log(1.0 - r.trajectory.lambda_min_positive / r.trajectory.lambda_max);
  // Fit on iterates before the distance reaches the floating floor.
  std::size_t last = 1;
  while (last + 1 < dist.size() && dist[last + 1] > 1e-9 * dist[0]) ++last;
  const std::size_t first = last / 2;
  ASSERT_GT(last - first, 5u);
  const double slope = (std::log(dist[last]) - std::log(dist[first])) /
                       static_cast<double>(last - first);
  EXPECT_NEAR(slope, predicted, 1e-2);
  EXPECT_NEAR(std::log(r.trajectory.contraction), predicted, 1e-12);
}

TEST(SftGd, TooLargeStepDiverges) {
  const Instance inst = random_instance(7, 5, 4, 9, false);
  SftConfig cfg;
  cfg.steps = 500;
  const PhiGram pg = build_phi(inst.batch);
  const double lmax = lambda_max_symmetric(pg.gram);
  cfg.step = 3.0 * 4.0 / (sft_weight(cfg.eta, cfg.k) * lmax);
  EXPECT_THROW(sft_gd(identity_key(-inst.gamma0_inv), inst.batch, cfg), DivergenceError);
  cfg.strict_step = true;
  EXPECT_THROW(sft_gd(identity_key(-inst.gamma0_inv), inst.batch, cfg), ConfigError);
}

TEST(SftGd, LongerChainConvergesFasterAtFixedStep) {
  const Instance inst = random_instance(9, 6, 4, 9, false);
  const PhiGram pg = build_phi(inst.batch);
  const double lmax = lambda_max_symmetric(pg.gram);
  SftConfig cfg;
  cfg.steps = 60;
  // Admissible for every k below since c_k <= 1 / (1 - (1 - eta)^2).
  cfg.step = 0.5 * 4.0 / (lmax / (1.0 - 0.64));
  std::vector<double> previous;
  for (Index k : {1, 2, 4, 8}) {
    cfg.k = k;
    const auto dist = sft_gd(identity_key(-inst.gamma0_inv), inst.batch, cfg).trajectory.distance;
    if (!previous.empty()) {
      for (std::size_t t = 1; t < dist.size(); ++t) EXPECT_LE(dist[t], previous[t] * (1 + 1e-12));
    }
    previous = dist;
  }
}

TEST(SftGd, DistanceIsMeasuredToClosedForm) {
  const Instance inst = random_instance(5, 6, 3, 9, false);
  SftConfig cfg;
  cfg.steps = 0;
  const SftGdResult r = sft_gd(identity_key(-inst.gamma0_inv), inst.batch, cfg);
  const Matrix star = sft_closed_form(inst.batch, inst.gamma0_inv, cfg.eta).value;
  EXPECT_NEAR(r.trajectory.distance[0], (-inst.gamma0_inv - star).norm(), 1e-12);
}

TEST(SftPopulationLimit, Examples) {
  const Matrix g = gamma0_inverse(Matrix::Identity(2, 2), 2);
  EXPECT_TRUE(sft_population_limit(Matrix::Identity(2, 2), g, 0.2, 2)
                  .isApprox(-0.08 * Matrix::Identity(2, 2), 1e-14));
  EXPECT_EQ(sft_population_limit(Matrix::Zero(2, 2), g, 0.2, 2), Matrix(-g));
}

}  // namespace
}  // namespace icl
