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

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mixflow/types.hpp"

namespace mixflow {

enum class Activation { SiLU, Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Architecture of the conditional velocity MLP. Input is
// [x (dim), t, embedding(c) (embed_dim)], output has width dim.
struct MlpArch {
  int dim = 2;
  int num_conditions = 2;
  int embed_dim = 8;
  std::vector<int> hidden = {64, 64, 64};
  Activation activation = Activation::SiLU;

  int input_width() const { return dim + 1 + embed_dim; }
  std::size_t param_count() const;
  void validate() const;
  friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

// Offsets into the flat parameter vector.
struct LayerSlice {
  std::size_t weight = 0;  // column-major out x in
  std::size_t bias = 0;
  int in = 0;
  int out = 0;
};

struct ParamLayout {
  std::size_t embedding = 0;  // num_conditions x embed_dim, row per label
  std::vector<LayerSlice> layers;
  std::size_t total = 0;

  static ParamLayout of(const MlpArch& arch);
};

// Data distribution N(mean, cov) of the analytic test bed.
struct AffineGaussianTask {
  Vec mean;
  Mat cov;

  static AffineGaussianTask standard(int dim);
  void validate() const;
  // Marginal of x_t: N((1 - t) mean, (1 - t)^2 cov + t^2 I).
  Vec marginal_mean(double t) const;
  Mat marginal_cov(double t) const;
};

// Activations recorded by a forward pass; consumed by backward().
struct Tape {
  Condition cond;
  std::vector<Vec> inputs;  // input to each layer
  std::vector<Vec> pre;     // pre-activation of each hidden layer
};

class VelocityModel {
 public:
  enum class Variant { TrainableNet, AffineGaussianOracle };

  // Scaled-normal initialisation with zero biases.
  static VelocityModel trainable(const MlpArch& arch, Rng& rng);
  static VelocityModel trainable(const MlpArch& arch, Vec params);
  static VelocityModel oracle(AffineGaussianTask task);

  Variant variant() const { return variant_; }
  bool is_trainable() const { return variant_ == Variant::TrainableNet; }
  int dim() const;
  int num_conditions() const;

  const MlpArch& arch() const { return arch_; }
  const ParamLayout& layout() const { return layout_; }
  const Vec& params() const { return params_; }
  Vec& mutable_params() { return params_; }
  const AffineGaussianTask& task() const { return task_; }

  // v(x, t, c) for t in (0, 1]. Throws on non-finite input or t outside the
  // range.
  Vec velocity(const Vec& x, double t, Condition c) const;

  // Trainable variant only. Records what backward() needs.
  Vec forward(const Vec& x, double t, Condition c, Tape& tape) const;
  // grad += (dv)^T d v / d theta for the pass recorded in `tape`.
  void backward(const Tape& tape, const Vec& dv, ParamGrad& grad) const;

 private:
  VelocityModel() = default;
  Vec oracle_velocity(const Vec& x, double t) const;
  void check_inputs(const Vec& x, double t, Condition c) const;

  Variant variant_ = Variant::TrainableNet;
  MlpArch arch_;
  ParamLayout layout_;
  Vec params_;
  AffineGaussianTask task_;
};

// grad log q_t(x) = -x/t - ((1 - t)/t) v. Requires t in [t_min, 1).
Vec score_from_velocity(const Vec& x, double t, const Vec& v,
                        double t_min = kDefaultTMin);

struct LabeledPoint {
  Vec x;
  Condition cond;
};

// One flow-matching regression item with the interpolation pinned.
struct FmSample {
  Vec x0;
  Condition cond;
  Vec noise;
  double t = 0.5;
};

struct LossAndGrad {
  double loss = 0.0;
  ParamGrad grad;
};

// Mean over items of ||v(x_t, t, c) - (noise - x0)||^2 and its exact gradient.
LossAndGrad fm_loss_and_grad(const VelocityModel& model,
                             std::span<const FmSample> items);
double fm_loss(const VelocityModel& model, std::span<const FmSample> items);

// Draws noise ~ N(0, I) and t ~ U(t_min, 1) per item.
std::vector<FmSample> draw_fm_samples(std::span<const LabeledPoint> batch,
                                      Rng& rng, double t_min = kDefaultTMin);
LossAndGrad fm_loss_and_grad(const VelocityModel& model,
                             std::span<const LabeledPoint> batch, Rng& rng,
                             double t_min = kDefaultTMin);

// Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h.
ParamGrad finite_diff_grad(const std::function<double(const Vec&)>& f,
                           const Vec& theta, double h);

// ||a - b|| / max(||a||, ||b||); zero when both vanish.
double relative_error(const Vec& a, const Vec& b);

}  // namespace mixflow
