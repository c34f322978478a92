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

#include <string>

#include "mixflow/types.hpp"

namespace mixflow {

enum class OptimizerKind { AdamW, Sgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::AdamW;
  double lr = 1e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

// Minimises: params <- params - lr * update(grad). Decoupled weight decay for
// AdamW; plain steepest descent for Sgd (no decay).
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  void step(Vec& params, const Vec& grad);
  const OptimizerConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  long steps_taken() const { return t_; }

 private:
  OptimizerConfig config_;
  Vec m_;
  Vec v_;
  long t_ = 0;
};

}  // namespace mixflow
