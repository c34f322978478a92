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

#include "mixflow/grpo.hpp"

namespace mixflow {
namespace {

MlpArch tiny_arch() {
  MlpArch a;
  a.dim = 2;
  a.num_conditions = 2;
  a.embed_dim = 2;
  a.hidden = {6, 5};
  a.activation = Activation::Tanh;
  return a;
}

TrainSetup tiny_setup(int T = 8, int w = 3, int N = 6) {
  TrainSetup s;
  s.grid = make_time_grid(T, 3.0, 0.7);
  ScheduleParams p;
  p.tau0 = 5;
  s.window = make_window_state(T, w, 1, Strategy::Progressive, p);
  s.grpo.group_size = N;
  s.grpo.accumulation = 3;
  s.grpo.optimizer.lr = 1e-3;
  s.num_conditions = 2;
  s.num_rewards = 2;
  s.reward = [](const Vec& x, Condition c) {
    Vec r(2);
    r << -x.squaredNorm(), std::exp(-(x - Vec::Constant(2, c.label ? 1.0 : -1.0)).squaredNorm());
    return r;
  };
  return s;
}

TEST(Advantages, StandardisedPerColumn) {
  Mat r(4, 1);
  r << 1, 2, 3, 4;
  const Vec a = compute_advantages(r, 5.0, {});
  const double sd = std::sqrt(1.25);
  EXPECT_NEAR(a[0], -1.5 / sd, 1e-12);
  EXPECT_NEAR(a[3], 1.5 / sd, 1e-12);
  EXPECT_NEAR(a.mean(), 0.0, 1e-12);
}

TEST(Advantages, WeightedSumAndClip) {
  Mat r(2, 2);
  r << 0, 10, 1, 20;
  const std::vector<double> w{2.0, 3.0};
  const Vec raw = raw_advantages(r, w);
  EXPECT_NEAR(raw[0], -5.0, 1e-12);
  EXPECT_NEAR(raw[1], 5.0, 1e-12);
  const Vec clipped = compute_advantages(r, 4.0, w);
  EXPECT_EQ(clipped[0], -4.0);
  EXPECT_EQ(clipped[1], 4.0);
}

TEST(Advantages, ConstantColumnContributesNothing) {
  Mat r(3, 2);
  r << 7, 1, 7, 2, 7, 3;
  const Vec a = compute_advantages(r, 5.0, {});
  const Vec only = compute_advantages(r.rightCols(1), 5.0, {});
  EXPECT_LT((a - only).norm(), 1e-15);
  Mat flat = Mat::Constant(4, 1, 0.3);
  EXPECT_EQ(compute_advantages(flat, 5.0, {}), Vec::Zero(4));
}

TEST(Advantages, NormalisationProperties) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Mat r(12, 4);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();
    const Vec a = raw_advantages(r, {});
    EXPECT_LT(std::abs(a.mean()), 1e-10);
    // Single column: unit population std.
    const Vec one = raw_advantages(r.leftCols(1), {});
    EXPECT_NEAR(std::sqrt(one.array().square().mean()), 1.0, 1e-6);
  }
}

TEST(Advantages, RejectsBadShapes) {
  EXPECT_THROW(compute_advantages(Mat::Ones(1, 2), 5.0, {}), std::invalid_argument);
  const std::vector<double> w{1.0};
  EXPECT_THROW(compute_advantages(Mat::Ones(3, 2), 5.0, w), std::invalid_argument);
}

TEST(Config, Validation) {
  GrpoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.accumulation = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GrpoConfig{};
  c.clip_eps = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

class Fixture : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng init(3);
    model = VelocityModel::trainable(tiny_arch(), init);
  }
  Group make_group(const Trainer& tr, std::uint64_t seed, Condition c = {1}) {
    Rng rng(seed);
    Group g = tr.sample_group(model, c, {1, 2, 3}, std::nullopt, rng);
    g.opt_steps = {1, 2, 3};
    return g;
  }
  VelocityModel model = VelocityModel::oracle(AffineGaussianTask::standard(2));
};

TEST_F(Fixture, GroupSharesInitialNoise) {
  const Trainer tr(model, tiny_setup(), 1);
  const Group g = make_group(tr, 4);
  ASSERT_EQ(g.members.size(), 6u);
  for (const auto& m : g.members) EXPECT_EQ(m.initial, g.initial);
  EXPECT_NE(g.members[0].final_state, g.members[1].final_state);
  EXPECT_EQ(g.rewards.rows(), 6);
  EXPECT_EQ(g.rewards.cols(), 2);
}

TEST_F(Fixture, RatioOneIdentity) {
  const Trainer tr(model, tiny_setup(), 1);
  Group g = make_group(tr, 5);
  g.advantages = raw_advantages(g.rewards, {});
  for (const auto& m : g.members) {
    for (int s : g.opt_steps) EXPECT_NEAR(policy_logratio(m.record_at(s), model, g.cond), 0.0, 1e-12);
  }
  const ObjectiveResult res = grpo_objective_and_grad(g, model, 1e-4);
  EXPECT_NEAR(res.objective, g.advantages.mean(), 1e-12);
  EXPECT_NEAR(res.objective, 0.0, 1e-10);
  EXPECT_EQ(res.clipped_terms, 0);
}

TEST_F(Fixture, LogRatioRejectsOdeSteps) {
  const Trainer tr(model, tiny_setup(), 1);
  const Group g = make_group(tr, 5);
  EXPECT_THROW(policy_logratio(g.members[0].record_at(0), model, g.cond), std::invalid_argument);
}

TEST_F(Fixture, LogRatioMatchesTransitionDensities) {
  const Trainer tr(model, tiny_setup(), 1);
  const Group g = make_group(tr, 6);
  VelocityModel other = model;
  Rng rng(9);
  other.mutable_params() += 0.05 * rng.normal_vec(static_cast<int>(model.params().size()));
  const StepRecord& rec = g.members[2].record_at(2);
  const Vec v = other.velocity(rec.x_cur, rec.t_cur, g.cond);
  const Vec new_mean = sde_mean(rec.x_cur, v, rec.t_cur, rec.t_next, rec.sigma);
  const double expected = transition_logprob(new_mean, rec.std, rec.x_next) -
                          transition_logprob(rec.mean, rec.std, rec.x_next);
  EXPECT_NEAR(policy_logratio(rec, other, g.cond), expected, 1e-10);
}

class ObjectiveGradient : public Fixture, public ::testing::WithParamInterface<int> {};

TEST_P(ObjectiveGradient, MatchesCentralDifferences) {
  const int seed = GetParam();
  const Trainer tr(model, tiny_setup(), 1);
  Group g = make_group(tr, static_cast<std::uint64_t>(seed), Condition{seed % 2});
  Rng rng(static_cast<std::uint64_t>(100 + seed));
  VelocityModel moved = model;
  moved.mutable_params() += 0.02 * rng.normal_vec(static_cast<int>(model.params().size()));
  // Wide band: every term on the unclipped branch, objective smooth.
  const double eps = 10.0;
  const ObjectiveResult res = grpo_objective_and_grad(g, moved, eps);
  ASSERT_EQ(res.clipped_terms, 0);
  const ParamGrad fd = finite_diff_grad(
      [&](const Vec& th) {
        return grpo_objective_and_grad(g, VelocityModel::trainable(tiny_arch(), th), eps).objective;
      },
      moved.params(), 1e-6);
  EXPECT_LT(relative_error(res.grad, fd), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, ObjectiveGradient, ::testing::Range(1, 7));

TEST_F(Fixture, SingleTermGradientIsScaledLogProbGradient) {
  const Trainer tr(model, tiny_setup(), 1);
  Group g = make_group(tr, 11);
  g.advantages = Vec::Ones(static_cast<Eigen::Index>(g.members.size()));
  const std::vector<int> member{0};
  const std::vector<int> step{2};
  VelocityModel moved = model;
  Rng rng(1);
  moved.mutable_params() += 0.01 * rng.normal_vec(static_cast<int>(model.params().size()));
  const ObjectiveResult res = grpo_objective_and_grad(g, moved, 10.0, member, step);
  const StepRecord& rec = g.members[0].record_at(2);
  const double r = std::exp(policy_logratio(rec, moved, g.cond));
  // d/dtheta of A r = A r d log q_new / d theta
  const ParamGrad fd = finite_diff_grad(
      [&](const Vec& th) {
        const auto m = VelocityModel::trainable(tiny_arch(), th);
        const Vec v = m.velocity(rec.x_cur, rec.t_cur, g.cond);
        return transition_logprob(sde_mean(rec.x_cur, v, rec.t_cur, rec.t_next, rec.sigma),
                                  rec.std, rec.x_next);
      },
      moved.params(), 1e-6);
  EXPECT_LT(relative_error(res.grad, r * fd), 1e-4);
  EXPECT_NEAR(res.objective, r, 1e-12);
}

TEST_F(Fixture, ClippedBranchHasZeroGradient) {
  const Trainer tr(model, tiny_setup(), 1);
  Group g = make_group(tr, 12);
  VelocityModel moved = model;
  Rng rng(2);
  moved.mutable_params() += 0.3 * rng.normal_vec(static_cast<int>(model.params().size()));
  const std::vector<int> step{2};
  for (int i = 0; i < static_cast<int>(g.members.size()); ++i) {
    const double logr = policy_logratio(g.members[static_cast<std::size_t>(i)].record_at(2), moved, g.cond);
    const std::vector<int> member{i};
    for (double adv : {1.0, -1.0}) {
      g.advantages = Vec::Constant(static_cast<Eigen::Index>(g.members.size()), adv);
      const ObjectiveResult res = grpo_objective_and_grad(g, moved, 1e-4, member, step);
      const double r = std::exp(logr);
      const bool binds = (adv > 0 && r > 1 + 1e-4) || (adv < 0 && r < 1 - 1e-4);
      if (binds) {
        EXPECT_EQ(res.grad.norm(), 0.0);
        EXPECT_EQ(res.clipped_terms, 1);
        EXPECT_NEAR(res.objective, adv * std::clamp(r, 1 - 1e-4, 1 + 1e-4), 1e-15);
      } else {
        EXPECT_EQ(res.clipped_terms, 0);
      }
    }
  }
}

TEST(Nfe, Accounting) {
  EXPECT_EQ(nfe_account(25, 4).old_policy, 25);
  EXPECT_EQ(nfe_account(25, 4).new_policy, 4);
  EXPECT_EQ(nfe_account(25, 14).new_policy, 14);
  const FlashPlan star = flash_plan(25, 0, 4, rate_for_post_steps(25, 4, 4), FlashVariant::FlashStar);
  EXPECT_EQ(nfe_account(25, 4, star).old_policy, 8);
  const FlashPlan flash = flash_plan(25, 0, 4, rate_for_post_steps(25, 4, 4), FlashVariant::Flash);
  const std::vector<int> visited{0, 21};
  // l = 0: 8 steps; l = 21: 25 steps.
  EXPECT_DOUBLE_EQ(nfe_account(25, 4, flash, visited).old_policy, 16.5);
}

TEST(Trainer, DeterministicAcrossInstances) {
  Rng init(3);
  const auto model = VelocityModel::trainable(tiny_arch(), init);
  Trainer a(model, tiny_setup(), 42);
  Trainer b(model, tiny_setup(), 42);
  for (int m = 0; m < 6; ++m) {
    const IterationMetrics ma = a.train_iteration();
    const IterationMetrics mb = b.train_iteration();
    EXPECT_EQ(ma.objective, mb.objective);
    EXPECT_EQ(ma.reward_means, mb.reward_means);
    EXPECT_EQ(ma.left, mb.left);
  }
  EXPECT_EQ(a.model().params(), b.model().params());
}

TEST(Trainer, UpdateCountsAndWindowMotion) {
  Rng init(3);
  const auto model = VelocityModel::trainable(tiny_arch(), init);
  Trainer tr(model, tiny_setup(), 1);
  for (int m = 1; m <= 5; ++m) {
    const IterationMetrics met = tr.train_iteration();
    EXPECT_EQ(met.updates, 2);  // N / accumulation
    EXPECT_EQ(met.left, 0);
    EXPECT_EQ(met.nfe_old, 8);
    EXPECT_EQ(met.nfe_new, 3);
  }
  EXPECT_EQ(tr.train_iteration().left, 1);
  EXPECT_EQ(tr.ledger().rows().size(), 6u);
  EXPECT_NE(tr.model().params(), model.params());
}

TEST(Trainer, PerTimestepUpdates) {
  Rng init(3);
  const auto model = VelocityModel::trainable(tiny_arch(), init);
  TrainSetup s = tiny_setup();
  s.grpo.update = UpdateMode::PerTimestep;
  Trainer tr(model, s, 1);
  EXPECT_EQ(tr.train_iteration().updates, 6);
}

TEST(Trainer, DanceBaselineSamplesEveryStepStochastically) {
  Rng init(3);
  const auto model = VelocityModel::trainable(tiny_arch(), init);
  TrainSetup s = tiny_setup();
  s.variant = TrainVariant::DanceBaseline;
  s.window.strategy = Strategy::Random;
  Trainer tr(model, s, 1);
  const IterationMetrics met = tr.train_iteration();
  EXPECT_EQ(met.nfe_old, 8);
  EXPECT_EQ(met.nfe_new, 3);
  Rng rng(0);
  const Group g = tr.sample_group(model, {0}, contiguous_window(0, 8), std::nullopt, rng);
  EXPECT_EQ(g.members[0].stochastic_steps(), 8);
}

TEST(Trainer, FlashStarUsesCompressedSampler) {
  Rng init(3);
  const auto model = VelocityModel::trainable(tiny_arch(), init);
  TrainSetup s = tiny_setup(25, 4, 6);
  s.variant = TrainVariant::FlashStar;
  s.window.strategy = Strategy::Frozen;
  s.flash_rate = rate_for_post_steps(25, 4, 4);
  Trainer tr(model, s, 1);
  const IterationMetrics met = tr.train_iteration();
  EXPECT_EQ(met.nfe_old, 8);
  EXPECT_EQ(met.nfe_new, 4);
}

TEST(Trainer, FlashStarRequiresFrozenStart) {
  TrainSetup s = tiny_setup(25, 4, 6);
  s.variant = TrainVariant::FlashStar;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Names, RoundTrip) {
  for (auto v : {TrainVariant::Mix, TrainVariant::Flash, TrainVariant::FlashStar, TrainVariant::DanceBaseline}) {
    EXPECT_EQ(variant_from_string(to_string(v)), v);
  }
  EXPECT_EQ(to_string(TrainVariant::FlashStar), "flash-star");
  EXPECT_EQ(update_mode_from_string("per-timestep"), UpdateMode::PerTimestep);
  EXPECT_THROW(variant_from_string("grpo"), std::invalid_argument);
}

}  // namespace
}  // namespace mixflow
