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

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixflow/flowcore.hpp"
#include "mixflow/grpo.hpp"
#include "mixflow/samplers.hpp"
#include "mixflow/scheduler.hpp"
#include "mixflow/tasks.hpp"

namespace mixflow {

// Raised for malformed or invalid configuration; `field` is "section.key".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  // [run]
  std::uint64_t seed = 0;
  std::string out = "runs/default";

  // [task]
  TaskKind task = TaskKind::BimodalMixture;
  double separation = 2.0;
  double spread = 0.35;
  std::vector<double> gaussian_mean{0.5, -0.25};
  std::vector<double> gaussian_cov_diag{1.0, 0.5};
  int conditions = 2;
  int board_cells = 4;
  double board_extent = 2.0;

  // [reward]
  std::vector<double> temperatures{0.5, 1.0, 2.0, 4.0};
  std::vector<double> reward_weights;  // empty: equal
  int target_component = 0;

  // [model]
  int embed_dim = 8;
  std::vector<int> hidden{64, 64, 64};
  Activation activation = Activation::SiLU;

  // [grid]
  int steps = 25;
  double shift = 3.0;
  double eta = 0.7;
  double t_min = kDefaultTMin;

  // [scheduler]
  Strategy strategy = Strategy::Progressive;
  int window = 4;
  int stride = 1;
  int tau = 25;
  IntervalSchedule schedule = IntervalSchedule::Constant;
  double decay = 0.1;
  int threshold = 13;
  bool random_every_tau = false;

  // [grpo]
  int group_size = 12;
  double clip_eps = 1e-4;
  double adv_clip = 5.0;
  int accumulation = 3;
  int prompts = 1;
  int iterations = 300;
  double lr = 1e-5;
  double weight_decay = 1e-4;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  UpdateMode update = UpdateMode::PerChunk;
  int checkpoint_every = 100;

  // [flash]
  TrainVariant variant = TrainVariant::Mix;
  double flash_rate = 1.0;
  int flash_post_steps = -1;  // >= 0 overrides flash_rate
  StepKind solver = StepKind::OdeDpm2Midpoint;

  // [pretrain]
  int pretrain_steps = 5000;
  int pretrain_batch = 64;
  double pretrain_lr = 2e-3;

  // [eval]
  std::vector<double> p_mix{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  int eval_group_size = 64;

  // [ablate]
  double ablate_fraction = 1.0 / 3.0;
  std::vector<int> ablate_tau{15, 20, 25, 30};
  std::vector<int> ablate_window{2, 4, 6};
  std::vector<int> ablate_stride{1, 2, 3, 4};
  std::vector<double> ablate_flash_rates{0.6, 0.35, 0.15};
  std::vector<int> ablate_flash_star_post{8, 6, 4};

  // Checks every module precondition; throws ConfigError naming the field.
  void validate() const;

  TaskSpec task_spec() const;
  std::vector<RewardSpec> rewards() const;
  MlpArch arch() const;
  TimeGrid grid() const;
  WindowState window_state() const;
  GrpoConfig grpo() const;
  PretrainConfig pretrain() const;
  double resolved_flash_rate() const;
  TrainSetup train_setup() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// INI text: [section] headers, key = value, '#' or ';' comments. Required:
// run.seed, task.kind, grid.steps. Unknown sections or keys are rejected.
RunConfig parse_config(std::istream& is);
RunConfig parse_config_string(const std::string& text);
RunConfig load_config(const std::string& path);

// Every field, round-trip exact.
std::string serialize_config(const RunConfig& config);

// FNV-1a 64 of the serialized form, 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace mixflow
