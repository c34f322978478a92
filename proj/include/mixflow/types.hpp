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

#include <charconv>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mixflow {

// State vectors, velocities and flat parameter vectors.
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using ParamGrad = Eigen::VectorXd;

// Conditioning label (the toy stand-in for a prompt).
struct Condition {
  int label = 0;
  friend bool operator==(Condition, Condition) = default;
};

// Continuous time convention: t = 1 is pure noise, t -> 0 is data,
// x_t = (1 - t) x0 + t eps.
inline constexpr double kDefaultTMin = 0.01;

void require_finite(const Vec& v, const char* what);

// Shortest decimal text that parses back to the same double.
inline std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Seeded generator with deterministic stream derivation. Single owner; copy
// to fork.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  // Independent stream keyed by (seed, key).
  Rng derive(std::uint64_t key) const;

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  Vec normal_vec(int dim);

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mixflow
