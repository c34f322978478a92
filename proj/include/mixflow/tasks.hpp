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

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mixflow/flowcore.hpp"
#include "mixflow/optimizer.hpp"
#include "mixflow/samplers.hpp"

namespace mixflow {

enum class TaskKind { AffineGaussian, BimodalMixture, Checkerboard };

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

struct MixtureComponent {
  Vec mean;
  Mat cov;
  double weight = 1.0;
};

// Conditional data distribution: a Gaussian mixture per condition, or a
// checkerboard whose occupied cells depend on the condition parity.
struct TaskSpec {
  TaskKind kind = TaskKind::BimodalMixture;
  int dim = 2;
  int num_conditions = 2;
  std::vector<std::vector<MixtureComponent>> components;  // [condition][component]
  int board_cells = 4;        // checkerboard cells per side
  double board_extent = 2.0;  // board covers [-extent, extent]^2

  void validate() const;
};

TaskSpec affine_gaussian_task(const AffineGaussianTask& g, int num_conditions = 1);
// Condition 0: modes at (+-separation, 0); condition 1: modes at
// (0, +-separation). Equal weights, isotropic spread.
TaskSpec bimodal_task(double separation = 2.0, double spread = 0.35);
TaskSpec checkerboard_task(int cells = 4, double extent = 2.0);

Vec sample_data(const TaskSpec& task, Condition c, Rng& rng);

enum class RewardKind { ModeProximity, RegionIndicatorSmooth, NegativeDistortion };

std::string to_string(RewardKind k);
RewardKind reward_kind_from_string(const std::string& s);

// Analytic reward. ModeProximity: exp(-||x - target_c||^2 / temperature).
// RegionIndicatorSmooth: sigmoid((radius^2 - ||x - target_c||^2) / temperature).
// NegativeDistortion: -||x - target_c||^2 / temperature.
struct RewardSpec {
  RewardKind kind = RewardKind::ModeProximity;
  std::vector<Vec> targets;  // one per condition
  double temperature = 1.0;
  double radius = 1.0;
  double weight = 1.0;
};

double reward_eval(const RewardSpec& spec, const Vec& x, Condition c);
Vec reward_vector(std::span<const RewardSpec> specs, const Vec& x, Condition c);
// Weighted mean of the individual rewards.
double combined_reward(std::span<const RewardSpec> specs, const Vec& x, Condition c);
// Mean over conditions of max_x combined_reward (multi-start local ascent from
// every target).
double reward_maximum(std::span<const RewardSpec> specs, int num_conditions);

// ModeProximity rewards targeting component `target_component` of each
// condition's mixture, one per temperature, unit weights.
std::vector<RewardSpec> mode_rewards(const TaskSpec& task, std::span<const double> temperatures,
                                     int target_component = 0);

struct PretrainConfig {
  int steps = 5000;
  int batch = 64;
  double t_min = kDefaultTMin;
  OptimizerConfig optimizer{OptimizerKind::AdamW, 2e-3, 0.0};
  // Cosine decay of the learning rate to zero over `steps`.
  bool cosine_decay = true;
};

struct PretrainResult {
  std::vector<double> losses;
};

// Flow-matching regression on task samples. Throws std::runtime_error on a
// non-finite loss.
PretrainResult pretrain(VelocityModel& model, const TaskSpec& task, const PretrainConfig& config,
                        Rng& rng);

// Mean pairwise Euclidean distance.
double group_dispersion(std::span<const Vec> states);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

struct SweepRow {
  double p_mix = 0.0;
  int trained_steps = 0;
  Vec reward_means;
  Vec reward_stds;
  double reward_mean = 0.0;  // combined
};

struct EvalReport {
  std::vector<SweepRow> rows;  // ascending p_mix; always contains 0 and 1
  double dispersion = 0.0;     // mean over conditions, trained model (p_mix = 1)
  int group_size = 0;
  std::uint64_t seed = 0;
  std::string config_hash;

  const SweepRow& row(double p_mix) const;
};

// For every p_mix, group_size hybrid samples per condition. Initial noises are
// shared across p_mix values.
EvalReport eval_suite(const VelocityModel& trained, const VelocityModel& base,
                      const TaskSpec& task, std::span<const RewardSpec> rewards,
                      const TimeGrid& grid, std::vector<double> p_mix_list, int group_size,
                      Rng& rng);

// key value per line.
void write_report(std::ostream& os, const EvalReport& report);
// p_mix,trained_steps,reward_mean,reward_0,...,std_0,...
void write_sweep_csv(std::ostream& os, const EvalReport& report);

}  // namespace mixflow
