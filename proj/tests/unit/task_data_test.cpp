#include <gtest/gtest.h>

#include <cstring>

#include "icl/errors.hpp"
#include "icl/task_data.hpp"

namespace icl {
namespace {

Vector diag_of(const Matrix& m) { return m.diagonal(); }

TEST(Materialize, PretrainShiftPosttrain) {
  Vector expected(4);
  expected << 0.1, 0.1, 1, 1;
  EXPECT_TRUE(diag_of(materialize(CovarianceSpec::pretrain(4, 2, 0.1))).isApprox(expected));
  expected << 1, 1, 0, 0;
  EXPECT_EQ(diag_of(materialize(CovarianceSpec::shift(4, 2))), expected);
  const Matrix a = materialize(CovarianceSpec::posttrain(4, 2, 0.1, 0.0, 0.2));
  EXPECT_NEAR(a(0, 0), 0.22, 1e-15);
  EXPECT_NEAR(a(1, 1), 0.22, 1e-15);
  EXPECT_EQ(a(2, 2), 0.0);
  EXPECT_EQ(a(3, 3), 0.0);
  EXPECT_EQ((a - Matrix(a.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Materialize, PosttestIsPretrainPlusShift) {
  for (double rho : {0.0, 0.1, 2.0}) {
    const Matrix sum = materialize(CovarianceSpec::pretrain(7, 3, rho)) +
                       materialize(CovarianceSpec::shift(7, 3));
    EXPECT_EQ(materialize(CovarianceSpec::posttest(7, 3, rho)), sum);
  }
}

TEST(Materialize, ValidationRejectsBadKnobs) {
  EXPECT_THROW(validate(CovarianceSpec::pretrain(4, 4, 0.1)), DomainError);
  EXPECT_THROW(validate(CovarianceSpec::pretrain(4, 0, 0.1)), DomainError);
  EXPECT_THROW(validate(CovarianceSpec::pretrain(4, 2, -0.1)), DomainError);
  EXPECT_THROW(validate(CovarianceSpec::posttrain(4, 2, 0.1, -1.0, 0.2)), DomainError);
  EXPECT_THROW(validate(CovarianceSpec::posttrain(4, 2, 0.1, 0.1, 1.0)), DomainError);
}

TEST(Materialize, CustomDenseEscapeHatch) {
  Matrix c(2, 2);
  c << 2.0, 0.5, 0.5, 1.0;
  EXPECT_EQ(materialize(CovarianceSpec::dense(c)), c);
}

TEST(Gamma0, Examples) {
  EXPECT_TRUE(gamma0(Matrix::Identity(2, 2), 2).isApprox(2.5 * Matrix::Identity(2, 2)));
  Matrix s0 = Matrix::Zero(2, 2);
  s0.diagonal() << 0.1, 1.0;
  const Matrix g = gamma0(s0, 4);
  EXPECT_NEAR(g(0, 0), 0.4, 1e-15);
  EXPECT_NEAR(g(1, 1), 1.525, 1e-15);
  const Matrix big = gamma0(Matrix::Identity(5, 5), 1000000000);
  EXPECT_LE((big - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Gamma0, EigenvaluesBoundedBelowByTraceOverN) {
  const Matrix s0 = materialize(CovarianceSpec::pretrain(10, 4, 0.05));
  for (Index n : {1, 5, 50}) {
    const double lmin = gamma0(s0, n).diagonal().minCoeff();
    EXPECT_GE(lmin, s0.trace() / static_cast<double>(n) - 1e-15);
  }
}

TEST(Gamma0, ZeroCovarianceIsSingularAtInversion) {
  EXPECT_NO_THROW(gamma0(Matrix::Zero(3, 3), 4));
  EXPECT_THROW(gamma0_inverse(Matrix::Zero(3, 3), 4), SingularityError);
}

TEST(PromptBatch, ZeroCovarianceGivesZeroFeaturesButGaussianWeights) {
  RngStream rng(3, 0);
  const PromptBatch b = gen_prompt_batch(Matrix::Zero(4, 4), 50, 6, rng);
  for (const Matrix& s : b.covariances) EXPECT_EQ(s.cwiseAbs().maxCoeff(), 0.0);
  const double second_moment = b.omega.squaredNorm() / static_cast<double>(b.omega.size());
  EXPECT_NEAR(second_moment, 1.0, 0.2);
  EXPECT_EQ(b.signal.cwiseAbs().maxCoeff(), 0.0);
}

TEST(PromptBatch, EmpiricalCovarianceConcentrates) {
  RngStream rng(4, 0);
  const Index d = 8;
  const PromptBatch b = gen_prompt_batch(Matrix::Identity(d, d), 1, 100000, rng);
  EXPECT_LE((b.covariances[0] - Matrix::Identity(d, d)).norm(), 0.05);
}

TEST(PromptBatch, DeterministicAndPrefixConsistent) {
  const Matrix a = materialize(CovarianceSpec::posttrain(5, 2, 0.1, 0.3, 0.2));
  RngStream r1(10, 2), r2(10, 2);
  const PromptBatch b1 = gen_prompt_batch(a, 6, 9, r1, {true, true});
  const PromptBatch b2 = gen_prompt_batch(a, 6, 9, r2, {true, true});
  EXPECT_EQ(0, std::memcmp(b1.omega.data(), b2.omega.data(), sizeof(double) * b1.omega.size()));
  for (std::size_t t = 0; t < 6; ++t) EXPECT_EQ(b1.covariances[t], b2.covariances[t]);

  RngStream r3(10, 2);
  const PromptBatch small = gen_prompt_batch(a, 3, 9, r3);
  const PromptBatch pre = b1.prefix(3);
  EXPECT_EQ(small.omega, pre.omega);
  EXPECT_EQ(small.signal, pre.signal);
}

TEST(PromptBatch, CovariancesAreSymmetricPsdWithBoundedRank) {
  const Matrix a = materialize(CovarianceSpec::posttrain(8, 3, 0.1, 0.0, 0.2));
  RngStream rng(2, 2);
  const PromptBatch b = gen_prompt_batch(a, 5, 20, rng, {true, true});
  for (std::size_t t = 0; t < 5; ++t) {
    const Matrix& s = b.covariances[t];
    EXPECT_LE((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    EXPECT_LE(pinv_with_rank(s, 1e-9).rank, 3);
    const Matrix& x = b.features[t];
    EXPECT_LE((s - x * x.transpose() / 20.0).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(BuildPhi, ScalarCase) {
  PromptBatch b;
  b.n = 1;
  b.omega = Matrix::Constant(1, 1, 1.0);
  b.covariances = {Matrix::Constant(1, 1, 2.0)};
  b.signal = Matrix::Zero(1, 1);
  const PhiGram pg = build_phi(b);
  EXPECT_EQ(pg.phi(0, 0), 2.0);
  EXPECT_EQ(pg.gram(0, 0), 4.0);
}

TEST(BuildPhi, IdentityCovariancesGiveOmega) {
  RngStream rng(1, 1);
  PromptBatch b;
  b.n = 3;
  b.omega = standard_normal(4, 5, rng);
  b.covariances.assign(5, Matrix::Identity(4, 4));
  b.signal = Matrix::Zero(4, 5);
  EXPECT_EQ(build_phi(b).phi, b.omega);
}

TEST(BuildPhi, GramIsSymmetricPsdAndRankBounded) {
  const Matrix a = materialize(CovarianceSpec::posttrain(10, 4, 0.1, 0.0, 0.2));
  RngStream rng(6, 0);
  const PromptBatch b = gen_prompt_batch(a, 7, 30, rng);
  const PhiGram pg = build_phi(b);
  EXPECT_LE((pg.gram - pg.gram.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  Eigen::SelfAdjointEigenSolver<Matrix> es(pg.gram);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
  EXPECT_LE(pinv_with_rank(pg.phi, 1e-9).rank, 4);
  EXPECT_LE((pg.phi - b.signal).cwiseAbs().maxCoeff(), 1e-14);
}

// The fast sampler draws (w*, S w*) jointly without forming S. Its second
// moment must reproduce E[S w w^T S] = (n+1)/n A w w^T A + (w^T A w / n) A.
TEST(FastSampler, ConditionalSecondMomentMatchesWishartIdentity) {
  const Index d = 4;
  const Index n = 5;
  Matrix a = Matrix::Zero(d, d);
  a.diagonal() << 0.22, 0.22, 0.1, 0.1;
  a(0, 2) = a(2, 0) = 0.05;
  const Index count = 200000;
  RngStream rng(12, 0);
  const PromptBatch b = gen_prompt_signals(a, count, n, rng);
  Matrix empirical = Matrix::Zero(d, d);
  Matrix expected = Matrix::Zero(d, d);
  const double nf = static_cast<double>(n);
  for (Index t = 0; t < count; ++t) {
    const Vector w = b.omega.col(t);
    const Vector aw = a * w;
    empirical += b.signal.col(t) * b.signal.col(t).transpose();
    expected += (nf + 1.0) / nf * aw * aw.transpose() + (w.dot(aw) / nf) * a;
  }
  empirical /= static_cast<double>(count);
  expected /= static_cast<double>(count);
  EXPECT_LE((empirical - expected).norm() / expected.norm(), 0.02);
}

TEST(FastSampler, AgreesWithExplicitSamplerInMean) {
  Matrix a = Matrix::Zero(3, 3);
  a.diagonal() << 1.0, 0.5, 0.0;
  RngStream r1(1, 0), r2(2, 0);
  const Index count = 40000;
  const PromptBatch fast = gen_prompt_signals(a, count, 4, r1);
  const PromptBatch slow = gen_prompt_batch(a, count, 4, r2, {false, false});
  const auto moment = [&](const PromptBatch& b) {
    return Matrix(b.signal * b.signal.transpose() / static_cast<double>(count));
  };
  EXPECT_LE((moment(fast) - moment(slow)).norm(), 0.05 * moment(slow).norm());
  EXPECT_EQ(fast.signal.row(2).cwiseAbs().maxCoeff(), 0.0);
}

}  // namespace
}  // namespace icl
