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

#include "mixflow/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mixflow {

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::AffineGaussian: return "affine_gaussian";
    case TaskKind::BimodalMixture: return "bimodal";
    case TaskKind::Checkerboard: return "checkerboard";
  }
  return "?";
}

TaskKind task_kind_from_string(const std::string& s) {
  for (auto k : {TaskKind::AffineGaussian, TaskKind::BimodalMixture, TaskKind::Checkerboard}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown task kind '" + s + "'");
}

std::string to_string(RewardKind k) {
  switch (k) {
    case RewardKind::ModeProximity: return "mode_proximity";
    case RewardKind::RegionIndicatorSmooth: return "region_smooth";
    case RewardKind::NegativeDistortion: return "negative_distortion";
  }
  return "?";
}

RewardKind reward_kind_from_string(const std::string& s) {
  for (auto k : {RewardKind::ModeProximity, RewardKind::RegionIndicatorSmooth,
                 RewardKind::NegativeDistortion}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown reward kind '" + s + "'");
}

void TaskSpec::validate() const {
  if (dim < 1 || num_conditions < 1) throw std::invalid_argument("task: bad dim/conditions");
  if (kind == TaskKind::Checkerboard) {
    if (dim != 2) throw std::invalid_argument("task: checkerboard is two-dimensional");
    if (board_cells < 2 || !(board_extent > 0.0)) {
      throw std::invalid_argument("task: bad checkerboard geometry");
    }
    return;
  }
  if (static_cast<int>(components.size()) != num_conditions) {
    throw std::invalid_argument("task: need one mixture per condition");
  }
  for (const auto& mix : components) {
    if (mix.empty()) throw std::invalid_argument("task: empty mixture");
    double total = 0.0;
    for (const auto& comp : mix) {
      AffineGaussianTask{comp.mean, comp.cov}.validate();
      if (comp.mean.size() != dim) throw std::invalid_argument("task: component dimension");
      if (comp.weight < 0.0) throw std::invalid_argument("task: negative mixture weight");
      total += comp.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("task: mixture weights must sum to 1");
    }
  }
}

TaskSpec affine_gaussian_task(const AffineGaussianTask& g, int num_conditions) {
  TaskSpec t;
  t.kind = TaskKind::AffineGaussian;
  t.dim = static_cast<int>(g.mean.size());
  t.num_conditions = num_conditions;
  t.components.assign(static_cast<std::size_t>(num_conditions), {{g.mean, g.cov, 1.0}});
  t.validate();
  return t;
}

TaskSpec bimodal_task(double separation, double spread) {
  TaskSpec t;
  t.kind = TaskKind::BimodalMixture;
  t.dim = 2;
  t.num_conditions = 2;
  const Mat cov = spread * spread * Mat::Identity(2, 2);
  t.components = {
      {{Vec::Unit(2, 0) * separation, cov, 0.5}, {-Vec::Unit(2, 0) * separation, cov, 0.5}},
      {{Vec::Unit(2, 1) * separation, cov, 0.5}, {-Vec::Unit(2, 1) * separation, cov, 0.5}},
  };
  t.validate();
  return t;
}

TaskSpec checkerboard_task(int cells, double extent) {
  TaskSpec t;
  t.kind = TaskKind::Checkerboard;
  t.dim = 2;
  t.num_conditions = 2;
  t.board_cells = cells;
  t.board_extent = extent;
  t.validate();
  return t;
}

Vec sample_data(const TaskSpec& task, Condition c, Rng& rng) {
  if (c.label < 0 || c.label >= task.num_conditions) {
    throw std::invalid_argument("sample_data: condition out of range");
  }
  if (task.kind == TaskKind::Checkerboard) {
    // Cells with (row + col) parity equal to the condition parity.
    const int n = task.board_cells;
    const double cell = 2.0 * task.board_extent / n;
    int row = 0;
    int col = 0;
    do {
      row = rng.uniform_int(0, n - 1);
      col = rng.uniform_int(0, n - 1);
    } while ((row + col) % 2 != c.label % 2);
    Vec x(2);
    x[0] = -task.board_extent + (col + rng.uniform()) * cell;
    x[1] = -task.board_extent + (row + rng.uniform()) * cell;
    return x;
  }
  const auto& mix = task.components[static_cast<std::size_t>(c.label)];
  double u = rng.uniform();
  std::size_t k = 0;
  while (k + 1 < mix.size() && u >= mix[k].weight) {
    u -= mix[k].weight;
    ++k;
  }
  const MixtureComponent& comp = mix[k];
  const Mat chol = comp.cov.llt().matrixL();
  return comp.mean + chol * rng.normal_vec(task.dim);
}

double reward_eval(const RewardSpec& spec, const Vec& x, Condition c) {
  const Vec& target = spec.targets.at(static_cast<std::size_t>(c.label));
  const double d2 = (x - target).squaredNorm();
  switch (spec.kind) {
    case RewardKind::ModeProximity:
      return std::exp(-d2 / spec.temperature);
    case RewardKind::RegionIndicatorSmooth:
      return 1.0 / (1.0 + std::exp(-(spec.radius * spec.radius - d2) / spec.temperature));
    case RewardKind::NegativeDistortion:
      return -d2 / spec.temperature;
  }
  return 0.0;
}

Vec reward_vector(std::span<const RewardSpec> specs, const Vec& x, Condition c) {
  Vec r(static_cast<Eigen::Index>(specs.size()));
  for (std::size_t k = 0; k < specs.size(); ++k) r[k] = reward_eval(specs[k], x, c);
  return r;
}

double combined_reward(std::span<const RewardSpec> specs, const Vec& x, Condition c) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& s : specs) {
    num += s.weight * reward_eval(s, x, c);
    den += s.weight;
  }
  return num / den;
}

double reward_maximum(std::span<const RewardSpec> specs, int num_conditions) {
  double total = 0.0;
  for (int label = 0; label < num_conditions; ++label) {
    const Condition c{label};
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& start : specs) {
      Vec x = start.targets.at(static_cast<std::size_t>(label));
      double fx = combined_reward(specs, x, c);
      double step = 0.1;
      // Coordinate pattern search; every reward is smooth and unimodal per target.
      while (step > 1e-10) {
        bool improved = false;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          for (double dir : {1.0, -1.0}) {
            Vec y = x;
            y[i] += dir * step;
            const double fy = combined_reward(specs, y, c);
            if (fy > fx) {
              x = y;
              fx = fy;
              improved = true;
            }
          }
        }
        if (!improved) step *= 0.5;
      }
      best = std::max(best, fx);
    }
    total += best;
  }
  return total / num_conditions;
}

std::vector<RewardSpec> mode_rewards(const TaskSpec& task, std::span<const double> temperatures,
                                     int target_component) {
  std::vector<Vec> targets;
  for (int label = 0; label < task.num_conditions; ++label) {
    if (task.kind == TaskKind::Checkerboard) {
      // Centre of the first occupied cell.
      const double cell = 2.0 * task.board_extent / task.board_cells;
      const int col = label % 2;
      Vec t(2);
      t << -task.board_extent + (col + 0.5) * cell, -task.board_extent + 0.5 * cell;
      targets.push_back(t);
      continue;
    }
    targets.push_back(
        task.components.at(static_cast<std::size_t>(label)).at(static_cast<std::size_t>(target_component)).mean);
  }
  std::vector<RewardSpec> out;
  for (double temp : temperatures) {
    RewardSpec s;
    s.kind = RewardKind::ModeProximity;
    s.targets = targets;
    s.temperature = temp;
    out.push_back(s);
  }
  return out;
}

PretrainResult pretrain(VelocityModel& model, const TaskSpec& task, const PretrainConfig& config,
                        Rng& rng) {
  if (!model.is_trainable()) throw std::invalid_argument("pretrain: model is not trainable");
  if (model.dim() != task.dim || model.arch().num_conditions < task.num_conditions) {
    throw std::invalid_argument("pretrain: model and task are incompatible");
  }
  PretrainResult out;
  out.losses.reserve(static_cast<std::size_t>(config.steps));
  Optimizer opt(config.optimizer);
  std::vector<LabeledPoint> batch(static_cast<std::size_t>(config.batch));
  for (int step = 0; step < config.steps; ++step) {
    for (auto& p : batch) {
      p.cond = Condition{rng.uniform_int(0, task.num_conditions - 1)};
      p.x = sample_data(task, p.cond, rng);
    }
    const LossAndGrad lg = fm_loss_and_grad(model, std::span<const LabeledPoint>(batch), rng,
                                            config.t_min);
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
      std::ostringstream os;
      os << "pretrain diverged at step " << step << " (loss " << lg.loss << ")";
      throw std::runtime_error(os.str());
    }
    out.losses.push_back(lg.loss);
    if (config.cosine_decay) {
      opt.set_lr(0.5 * config.optimizer.lr * (1.0 + std::cos(M_PI * step / config.steps)));
    }
    opt.step(model.mutable_params(), lg.grad);
  }
  return out;
}

double group_dispersion(std::span<const Vec> states) {
  if (states.size() < 2) throw std::invalid_argument("group_dispersion: need >= 2 states");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      total += (states[i] - states[j]).norm();
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length samples");
  }
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const Eigen::Map<const Vec> x(ra.data(), static_cast<Eigen::Index>(ra.size()));
  const Eigen::Map<const Vec> y(rb.data(), static_cast<Eigen::Index>(rb.size()));
  const Vec xc = x.array() - x.mean();
  const Vec yc = y.array() - y.mean();
  const double den = xc.norm() * yc.norm();
  return den == 0.0 ? 0.0 : xc.dot(yc) / den;
}

const SweepRow& EvalReport::row(double p_mix) const {
  for (const auto& r : rows) {
    if (std::abs(r.p_mix - p_mix) < 1e-12) return r;
  }
  throw std::out_of_range("no sweep row for the requested p_mix");
}

EvalReport eval_suite(const VelocityModel& trained, const VelocityModel& base,
                      const TaskSpec& task, std::span<const RewardSpec> rewards,
                      const TimeGrid& grid, std::vector<double> p_mix_list, int group_size,
                      Rng& rng) {
  if (trained.dim() != base.dim() || trained.dim() != task.dim) {
    throw std::invalid_argument("eval_suite: incompatible models");
  }
  if (group_size < 2) throw std::invalid_argument("eval_suite: group_size must be >= 2");
  p_mix_list.push_back(0.0);
  p_mix_list.push_back(1.0);
  std::sort(p_mix_list.begin(), p_mix_list.end());
  p_mix_list.erase(std::unique(p_mix_list.begin(), p_mix_list.end(),
                               [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                   p_mix_list.end());

  std::vector<std::vector<Vec>> noises(static_cast<std::size_t>(task.num_conditions));
  for (auto& per_cond : noises) {
    for (int j = 0; j < group_size; ++j) per_cond.push_back(rng.normal_vec(task.dim));
  }

  EvalReport report;
  report.group_size = group_size;
  report.seed = rng.seed();
  const auto k = static_cast<Eigen::Index>(rewards.size());
  for (double p : p_mix_list) {
    SweepRow row;
    row.p_mix = p;
    row.trained_steps = hybrid_split(grid.steps, p);
    Mat values(static_cast<Eigen::Index>(task.num_conditions) * group_size, k);
    double dispersion = 0.0;
    Eigen::Index n = 0;
    for (int label = 0; label < task.num_conditions; ++label) {
      std::vector<Vec> finals;
      for (const Vec& z : noises[static_cast<std::size_t>(label)]) {
        finals.push_back(hybrid_sample(trained, base, grid, p, Condition{label}, z));
        values.row(n++) = reward_vector(rewards, finals.back(), Condition{label}).transpose();
      }
      dispersion += group_dispersion(finals) / task.num_conditions;
    }
    row.reward_means = values.colwise().mean().transpose();
    row.reward_stds =
        ((values.rowwise() - row.reward_means.transpose()).array().square().colwise().mean())
            .sqrt()
            .transpose();
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      num += rewards[static_cast<std::size_t>(j)].weight * row.reward_means[j];
      den += rewards[static_cast<std::size_t>(j)].weight;
    }
    row.reward_mean = num / den;
    if (p == 1.0) report.dispersion = dispersion;
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_report(std::ostream& os, const EvalReport& report) {
  os << "group_size " << report.group_size << '\n';
  os << "seed " << report.seed << '\n';
  os << "config_hash " << (report.config_hash.empty() ? "-" : report.config_hash) << '\n';
  os << "dispersion " << num(report.dispersion) << '\n';
  os << "rows " << report.rows.size() << '\n';
  for (const auto& r : report.rows) {
    os << "row.p_mix " << num(r.p_mix) << '\n';
    os << "row.trained_steps " << r.trained_steps << '\n';
    os << "row.reward_mean " << num(r.reward_mean) << '\n';
    for (Eigen::Index k = 0; k < r.reward_means.size(); ++k) {
      os << "row.reward_" << k << ".mean " << num(r.reward_means[k]) << '\n';
      os << "row.reward_" << k << ".std " << num(r.reward_stds[k]) << '\n';
    }
  }
}

void write_sweep_csv(std::ostream& os, const EvalReport& report) {
  const auto k = report.rows.empty() ? 0 : report.rows.front().reward_means.size();
  os << "p_mix,trained_steps,reward_mean";
  for (Eigen::Index j = 0; j < k; ++j) os << ",reward_" << j;
  for (Eigen::Index j = 0; j < k; ++j) os << ",std_" << j;
  os << '\n';
  for (const auto& r : report.rows) {
    os << num(r.p_mix) << ',' << r.trained_steps << ',' << num(r.reward_mean);
    for (Eigen::Index j = 0; j < k; ++j) os << ',' << num(r.reward_means[j]);
    for (Eigen::Index j = 0; j < k; ++j) os << ',' << num(r.reward_stds[j]);
    os << '\n';
  }
}

}  // namespace mixflow
