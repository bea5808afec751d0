#include <gtest/gtest.h>

#include <cmath>

#include "icl/errors.hpp"
#include "icl/experimental.hpp"
#include "icl/os_trainer.hpp"

namespace icl {
namespace {

TEST(FdGradient, QuadraticInBothBlocks) {
  LsaParams at;
  at.value = Matrix::Constant(2, 2, 1.0);
  at.key_query = Matrix::Constant(2, 2, -2.0);
  const experimental::ParamsLoss loss = [](const LsaParams& p) {
    return 0.5 * p.value.squaredNorm() + 1.5 * p.key_query.squaredNorm();
  };
  const LsaParams g = experimental::fd_gradient(loss, at);
  EXPECT_LE((g.value - at.value).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((g.key_query - 3.0 * at.key_query).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FdGradient, AgreesWithAnalyticOsGradient) {
  RngStream rng(4, 4);
  const PromptBatch b = gen_prompt_batch(Matrix::Identity(3, 3), 3, 8, rng);
  LsaParams at;
  at.value = -0.5 * Matrix::Identity(3, 3);
  at.key_query = Matrix::Identity(3, 3);
  const experimental::ParamsLoss loss = [&](const LsaParams& p) { return os_loss(p, b, 2); };
  const LsaParams g = experimental::fd_gradient(loss, at, 1e-6);
  EXPECT_LE((g.value - os_grad(at.value, b, 2)).norm(), 1e-6);
}

TEST(FdDescent, DecreasesConvexLossAndDetectsBlowUp) {
  LsaParams init;
  init.value = Matrix::Ones(2, 2);
  init.key_query = Matrix::Ones(2, 2);
  const experimental::ParamsLoss loss = [](const LsaParams& p) {
    return p.value.squaredNorm() + p.key_query.squaredNorm();
  };
  const auto res = experimental::fd_descent(loss, init, 0.1, 20);
  ASSERT_EQ(res.loss.size(), 21u);
  EXPECT_LT(res.loss.back(), 1e-3 * res.loss.front());
  const experimental::ParamsLoss blow = [](const LsaParams& p) {
    return std::pow(p.value(0, 0), 4);
  };
  EXPECT_THROW(experimental::fd_descent(blow, init, 10.0, 50), DivergenceError);
}

}  // namespace
}  // namespace icl
