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

#include "mixflow/optimizer.hpp"

#include <cmath>

namespace mixflow {

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::AdamW ? "adamw" : "sgd";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adamw") return OptimizerKind::AdamW;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

void Optimizer::step(Vec& params, const Vec& grad) {
  if (grad.size() != params.size()) {
    throw std::invalid_argument("optimizer: gradient size mismatch");
  }
  ++t_;
  if (config_.kind == OptimizerKind::Sgd) {
    params -= config_.lr * grad;
    return;
  }
  if (m_.size() != params.size()) {
    m_ = Vec::Zero(params.size());
    v_ = Vec::Zero(params.size());
  }
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  params *= 1.0 - config_.lr * config_.weight_decay;
  params.array() -= config_.lr * (m_.array() / c1) /
                    ((v_.array() / c2).sqrt() + config_.eps);
}

}  // namespace mixflow
