// Copyright 2026 The mixflow Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "mixflow/flowcore.hpp"
#include "mixflow/optimizer.hpp"

namespace mixflow {
namespace {

AffineGaussianTask skewed_task() {
  AffineGaussianTask g;
  g.mean = Vec(2);
  g.mean << 0.5, -0.25;
  g.cov = Mat(2, 2);
  g.cov << 1.0, 0.3, 0.3, 0.5;
  return g;
}

MlpArch small_arch(Activation act = Activation::Tanh) {
  MlpArch a;
  a.dim = 2;
  a.num_conditions = 3;
  a.embed_dim = 3;
  a.hidden = {5, 4};
  a.activation = act;
  return a;
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
}

TEST(Rng, DerivedStreamsDiffer) {
  Rng root(42);
  Rng a = root.derive(1);
  Rng b = root.derive(2);
  Rng a2 = root.derive(1);
  EXPECT_NE(a.normal(), b.normal());
  a = root.derive(1);
  EXPECT_EQ(a.normal(), a2.normal());
}

TEST(Rng, UniformIntCoversRange) {
  Rng r(3);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 5000; ++i) ++hits[static_cast<std::size_t>(r.uniform_int(0, 4))];
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(ParamLayout, CountsMatchArchitecture) {
  const MlpArch a = small_arch();
  const ParamLayout l = ParamLayout::of(a);
  // 3x3 embedding, (6->5), (5->4), (4->2)
  const std::size_t expected = 9 + (6 * 5 + 5) + (5 * 4 + 4) + (4 * 2 + 2);
  EXPECT_EQ(l.total, expected);
  EXPECT_EQ(a.param_count(), expected);
  ASSERT_EQ(l.layers.size(), 3u);
  EXPECT_EQ(l.layers.back().out, 2);
}

TEST(VelocityModel, RejectsBadInputs) {
  Rng rng(1);
  const auto m = VelocityModel::trainable(small_arch(), rng);
  const Vec x = Vec::Zero(2);
  EXPECT_THROW(m.velocity(x, 0.0, {0}), std::domain_error);
  EXPECT_THROW(m.velocity(x, 1.5, {0}), std::domain_error);
  EXPECT_THROW(m.velocity(x, 0.5, {3}), std::invalid_argument);
  EXPECT_THROW(m.velocity(Vec::Zero(3), 0.5, {0}), std::invalid_argument);
  Vec bad = x;
  bad[0] = std::nan("");
  EXPECT_THROW(m.velocity(bad, 0.5, {0}), std::exception);
}

TEST(VelocityModel, ConditionChangesOutput) {
  Rng rng(2);
  const auto m = VelocityModel::trainable(small_arch(), rng);
  const Vec x = Vec::Ones(2);
  EXPECT_GT((m.velocity(x, 0.4, {0}) - m.velocity(x, 0.4, {1})).norm(), 1e-6);
}

TEST(Oracle, StandardNormalDataGivesZeroVelocityAtNoise) {
  // mu = 0, Sigma = I: S_t = (1-t)^2 + t^2, v = (t - (1-t)) x / S_t
  const auto m = VelocityModel::oracle(AffineGaussianTask::standard(2));
  Vec x(2);
  x << 0.7, -1.3;
  const double t = 0.3;
  const double s = (1 - t) * (1 - t) + t * t;
  EXPECT_LT((m.velocity(x, t, {0}) - (t - (1 - t)) / s * x).norm(), 1e-12);
}

TEST(Oracle, MatchesMonteCarloConditionalExpectation) {
  // E[eps - x0 | x_t] is linear in x_t; fit it by least squares on samples.
  const AffineGaussianTask g = skewed_task();
  const auto m = VelocityModel::oracle(g);
  const Mat chol = g.cov.llt().matrixL();
  Rng rng(11);
  for (double t : {0.2, 0.5, 0.85}) {
    const int n = 200000;
    Mat design(n, 3);
    Mat target(n, 2);
    for (int i = 0; i < n; ++i) {
      const Vec x0 = g.mean + chol * rng.normal_vec(2);
      const Vec eps = rng.normal_vec(2);
      const Vec xt = (1 - t) * x0 + t * eps;
      design.row(i) << 1.0, xt[0], xt[1];
      target.row(i) = (eps - x0).transpose();
    }
    const Mat coef = (design.transpose() * design).ldlt().solve(design.transpose() * target);
    for (const auto& probe : {Vec::Zero(2).eval(), Vec::Ones(2).eval(), (-0.5 * Vec::Ones(2)).eval()}) {
      Vec row(3);
      row << 1.0, probe[0], probe[1];
      const Vec mc = coef.transpose() * row;
      EXPECT_LT((mc - m.velocity(probe, t, {0})).norm(), 0.02) << "t=" << t;
    }
  }
}

TEST(Oracle, FineEulerReachesClosedFormFlowMap) {
  // Diagonal Sigma: x(t1) = m_{t1} + sqrt(S_{t1} / S_{t0}) (x(t0) - m_{t0}).
  AffineGaussianTask g;
  g.mean = Vec(2);
  g.mean << 0.5, -0.25;
  g.cov = Eigen::Vector2d(1.0, 0.5).asDiagonal();
  const auto m = VelocityModel::oracle(g);
  Vec x(2);
  x << 1.2, -0.4;
  const double t0 = 0.9;
  const double t1 = 0.1;
  Vec y = x;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double a = t0 + (t1 - t0) * i / n;
    const double b = t0 + (t1 - t0) * (i + 1) / n;
    y += (b - a) * m.velocity(y, a, {0});
  }
  Vec exact(2);
  for (int k = 0; k < 2; ++k) {
    const double s0 = (1 - t0) * (1 - t0) * g.cov(k, k) + t0 * t0;
    const double s1 = (1 - t1) * (1 - t1) * g.cov(k, k) + t1 * t1;
    exact[k] = (1 - t1) * g.mean[k] + std::sqrt(s1 / s0) * (x[k] - (1 - t0) * g.mean[k]);
  }
  EXPECT_LT((y - exact).norm(), 1e-3);
}

TEST(Score, OracleVelocityGivesGaussianScore) {
  const AffineGaussianTask g = skewed_task();
  const auto m = VelocityModel::oracle(g);
  Vec x(2);
  x << -0.3, 0.8;
  for (double t : {0.05, 0.4, 0.95}) {
    const Vec expected = -g.marginal_cov(t).inverse() * (x - g.marginal_mean(t));
    const Vec got = score_from_velocity(x, t, m.velocity(x, t, {0}));
    EXPECT_LT((got - expected).norm(), 1e-9 * (1 + expected.norm())) << t;
  }
}

TEST(Score, RejectsTimesOutsideClamp) {
  const Vec x = Vec::Zero(2);
  EXPECT_THROW(score_from_velocity(x, 1.0, x), std::domain_error);
  EXPECT_THROW(score_from_velocity(x, 0.001, x), std::domain_error);
  EXPECT_NO_THROW(score_from_velocity(x, 0.01, x));
}

TEST(Score, StandardNormalAtHalf) {
  // mu = 0, Sigma = I, t = 0.5: score = -x / 0.5
  const auto m = VelocityModel::oracle(AffineGaussianTask::standard(2));
  Vec x(2);
  x << 1.0, -2.0;
  EXPECT_LT((score_from_velocity(x, 0.5, m.velocity(x, 0.5, {0})) + 2.0 * x).norm(), 1e-12);
}

class FmGradient : public ::testing::TestWithParam<int> {};

TEST_P(FmGradient, MatchesCentralDifferences) {
  const int seed = GetParam();
  Rng rng(static_cast<std::uint64_t>(seed));
  const MlpArch arch = small_arch(seed % 2 ? Activation::SiLU : Activation::Tanh);
  const auto model = VelocityModel::trainable(arch, rng);
  std::vector<LabeledPoint> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({rng.normal_vec(2), Condition{i % 3}});
  const auto items = draw_fm_samples(batch, rng);
  const LossAndGrad lg = fm_loss_and_grad(model, items);
  const ParamGrad fd = finite_diff_grad(
      [&](const Vec& th) { return fm_loss(VelocityModel::trainable(arch, th), items); },
      model.params(), 1e-5);
  EXPECT_LT(relative_error(lg.grad, fd), 1e-6);
  EXPECT_NEAR(lg.loss, fm_loss(model, items), 1e-14);
}

INSTANTIATE_TEST_SUITE_P(Seeds, FmGradient, ::testing::Range(1, 9));

TEST(FmLoss, OracleBeatsPerturbedOracleOnAverage) {
  // The conditional expectation minimises the regression loss.
  const AffineGaussianTask g = skewed_task();
  const auto oracle = VelocityModel::oracle(g);
  const Mat chol = g.cov.llt().matrixL();
  Rng rng(5);
  double best = 0.0;
  double worse = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Vec x0 = g.mean + chol * rng.normal_vec(2);
    const Vec eps = rng.normal_vec(2);
    const double t = rng.uniform(0.01, 1.0);
    const Vec xt = (1 - t) * x0 + t * eps;
    const Vec v = oracle.velocity(xt, t, {0});
    best += (v - (eps - x0)).squaredNorm() / n;
    worse += (v + Vec::Constant(2, 0.1) - (eps - x0)).squaredNorm() / n;
  }
  EXPECT_LT(best, worse);
}

TEST(Optimizer, SgdIsPlainDescent) {
  Optimizer opt({OptimizerKind::Sgd, 0.1, 0.0});
  Vec p = Vec::Ones(3);
  Vec g(3);
  g << 1.0, -2.0, 0.5;
  opt.step(p, g);
  EXPECT_LT((p - (Vec::Ones(3) - 0.1 * g)).norm(), 1e-15);
}

TEST(Optimizer, AdamFirstStepHasLearningRateMagnitude) {
  Optimizer opt({OptimizerKind::AdamW, 1e-3, 0.0});
  Vec p = Vec::Zero(3);
  Vec g(3);
  g << 10.0, -0.01, 3.0;
  opt.step(p, g);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(std::abs(p[i]), 1e-3, 1e-6);
  EXPECT_LT(p[0], 0.0);
  EXPECT_GT(p[1], 0.0);
}

TEST(Optimizer, AdamMinimisesQuadratic) {
  Optimizer opt({OptimizerKind::AdamW, 0.05, 0.0});
  Vec p = Vec::Constant(2, 3.0);
  for (int i = 0; i < 2000; ++i) opt.step(p, 2.0 * p);
  EXPECT_LT(p.norm(), 1e-2);
}

}  // namespace
}  // namespace mixflow
