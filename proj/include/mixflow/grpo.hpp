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

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixflow/optimizer.hpp"
#include "mixflow/samplers.hpp"
#include "mixflow/scheduler.hpp"

namespace mixflow {

enum class TrainVariant { Mix, Flash, FlashStar, DanceBaseline };
enum class UpdateMode { PerChunk, PerTimestep };

std::string to_string(TrainVariant v);
std::string to_string(UpdateMode m);
TrainVariant variant_from_string(const std::string& s);
UpdateMode update_mode_from_string(const std::string& s);

struct GrpoConfig {
  int group_size = 12;              // N
  double clip_eps = 1e-4;
  double adv_clip = 5.0;
  int accumulation = 3;             // members per gradient update
  int prompts_per_iteration = 1;
  int iterations = 300;             // M
  std::vector<double> reward_weights;  // empty: weight 1 for every reward
  UpdateMode update = UpdateMode::PerChunk;
  double std_floor = 1e-8;
  OptimizerConfig optimizer;

  void validate() const;
  friend bool operator==(const GrpoConfig&, const GrpoConfig&) = default;
};

// Per reward column: (R - mean) / std with population std; columns whose std
// is below `std_floor` contribute zero. Weighted sum over columns, clipped to
// [-clip_bound, clip_bound].
Vec compute_advantages(const Mat& rewards, double clip_bound,
                       std::span<const double> weights, double std_floor = 1e-8);

// Same without the final clip.
Vec raw_advantages(const Mat& rewards, std::span<const double> weights,
                   double std_floor = 1e-8);

// log q_new(x_next | x_cur) - log q_old(x_next | x_cur) for a recorded SDE
// step. The new-policy mean is recomputed at (x_cur, t_cur) with the recorded
// sigma; both transitions share `std`.
double policy_logratio(const StepRecord& step, const VelocityModel& new_model,
                       const Vec& old_mean, double std, Condition c);
double policy_logratio(const StepRecord& step, const VelocityModel& new_model, Condition c);

// N trajectories for one condition from a shared initial noise.
struct Group {
  Condition cond;
  Vec initial;
  std::vector<Trajectory> members;
  Mat rewards;     // N x K
  Vec advantages;  // N
  std::vector<int> opt_steps;  // step indices carrying ratio terms
};

struct ObjectiveResult {
  double objective = 0.0;
  ParamGrad grad;
  int terms = 0;
  int clipped_terms = 0;  // terms where the clipped branch binds
  double max_abs_logratio = 0.0;
};

// J = mean over members and optimisation steps of
// min(r A, clip(r, 1 - eps, 1 + eps) A) and its gradient with respect to the
// new model's parameters. Empty spans select every member / all opt_steps.
ObjectiveResult grpo_objective_and_grad(const Group& group, const VelocityModel& new_model,
                                        double clip_eps,
                                        std::span<const int> members = {},
                                        std::span<const int> steps = {});

struct NfeAccount {
  double old_policy = 0.0;  // velocity evaluations per sampled trajectory
  int new_policy = 0;       // ratio evaluations per trajectory
};

// Without flash: (T, w). With a FlashStar plan: (T~, w). With a Flash plan and
// visited left boundaries: (mean T~ over them, w).
NfeAccount nfe_account(int steps, int optimized_steps,
                       const std::optional<FlashPlan>& flash = std::nullopt,
                       std::span<const int> visited_left = {});

struct LedgerRow {
  int iteration = 0;
  int nfe_old = 0;
  int nfe_new = 0;
  double seconds = 0.0;
};

class NfeLedger {
 public:
  void append(const LedgerRow& row) { rows_.push_back(row); }
  const std::vector<LedgerRow>& rows() const { return rows_; }

 private:
  std::vector<LedgerRow> rows_;
};

// Returns the K reward values for a final state.
using RewardFn = std::function<Vec(const Vec& x, Condition c)>;

struct TrainSetup {
  TimeGrid grid;
  WindowState window;
  GrpoConfig grpo;
  TrainVariant variant = TrainVariant::Mix;
  double flash_rate = 1.0;
  StepKind flash_solver = StepKind::OdeDpm2Midpoint;
  int num_conditions = 1;
  RewardFn reward;
  int num_rewards = 1;

  void validate() const;
};

struct IterationMetrics {
  int iteration = 0;
  double objective = 0.0;
  Vec reward_means;        // per reward, over all sampled members
  double reward_mean = 0.0;  // weighted mean of reward_means
  double adv_mean = 0.0;
  double adv_std = 0.0;
  double clipped_fraction = 0.0;
  double max_abs_logratio = 0.0;
  int left = 0;
  int tau = 0;
  WindowSet window;
  int nfe_old = 0;
  int nfe_new = 0;
  int updates = 0;
  double seconds = 0.0;
};

// Mutable training context: current policy, optimiser and scheduler state.
class Trainer {
 public:
  Trainer(VelocityModel model, TrainSetup setup, std::uint64_t seed);

  // One outer iteration: snapshot the old policy, sample groups, update, move
  // the window.
  IterationMetrics train_iteration();

  const VelocityModel& model() const { return model_; }
  const WindowState& window_state() const { return state_; }
  const NfeLedger& ledger() const { return ledger_; }
  const TrainSetup& setup() const { return setup_; }
  int iteration() const { return iteration_; }

  // Sample one group with the given policy (exposed for evaluation tools).
  Group sample_group(const VelocityModel& policy, Condition c, const WindowSet& window,
                     const std::optional<FlashSampling>& flash, Rng& rng) const;

 private:
  std::vector<double> weights() const;

  VelocityModel model_;
  TrainSetup setup_;
  WindowState state_;
  Optimizer optimizer_;
  NfeLedger ledger_;
  Rng rng_;
  int iteration_ = 0;
};

}  // namespace mixflow
