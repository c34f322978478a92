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

#include "mixflow/grpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mixflow {

std::string to_string(TrainVariant v) {
  switch (v) {
    case TrainVariant::Mix: return "mix";
    case TrainVariant::Flash: return "flash";
    case TrainVariant::FlashStar: return "flash-star";
    case TrainVariant::DanceBaseline: return "dance-baseline";
  }
  return "?";
}

std::string to_string(UpdateMode m) {
  return m == UpdateMode::PerChunk ? "per-chunk" : "per-timestep";
}

TrainVariant variant_from_string(const std::string& s) {
  for (auto v : {TrainVariant::Mix, TrainVariant::Flash, TrainVariant::FlashStar,
                 TrainVariant::DanceBaseline}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown variant '" + s + "'");
}

UpdateMode update_mode_from_string(const std::string& s) {
  if (s == "per-chunk") return UpdateMode::PerChunk;
  if (s == "per-timestep") return UpdateMode::PerTimestep;
  throw std::invalid_argument("unknown update mode '" + s + "'");
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("grpo.group_size must be >= 2");
  if (accumulation < 1 || group_size % accumulation != 0) {
    throw std::invalid_argument("grpo.accumulation must divide grpo.group_size");
  }
  if (!(clip_eps > 0.0)) throw std::invalid_argument("grpo.clip_eps must be > 0");
  if (!(adv_clip > 0.0)) throw std::invalid_argument("grpo.adv_clip must be > 0");
  if (prompts_per_iteration < 1) {
    throw std::invalid_argument("grpo.prompts_per_iteration must be >= 1");
  }
  if (iterations < 0) throw std::invalid_argument("grpo.iterations must be >= 0");
  if (optimizer.lr < 0.0) throw std::invalid_argument("grpo.lr must be >= 0");
}

Vec raw_advantages(const Mat& rewards, std::span<const double> weights, double std_floor) {
  const auto n = rewards.rows();
  const auto k = rewards.cols();
  if (n < 2) throw std::invalid_argument("compute_advantages: need at least 2 group members");
  if (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != k) {
    throw std::invalid_argument("compute_advantages: weight count does not match rewards");
  }
  Vec adv = Vec::Zero(n);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Vec col = rewards.col(j);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    if (sd < std_floor) continue;
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(j)];
    adv += w * (col.array() - mean).matrix() / sd;
  }
  return adv;
}

Vec compute_advantages(const Mat& rewards, double clip_bound,
                       std::span<const double> weights, double std_floor) {
  Vec adv = raw_advantages(rewards, weights, std_floor);
  return adv.cwiseMax(-clip_bound).cwiseMin(clip_bound);
}

double policy_logratio(const StepRecord& step, const VelocityModel& new_model,
                       const Vec& old_mean, double std, Condition c) {
  if (step.kind != StepKind::SdeEm) {
    throw std::invalid_argument("policy ratio is only defined on SDE window steps");
  }
  if (!(std > 0.0)) throw std::domain_error("policy_logratio: std must be > 0");
  const Vec v = new_model.velocity(step.x_cur, step.t_cur, c);
  const Vec new_mean = sde_mean(step.x_cur, v, step.t_cur, step.t_next, step.sigma);
  // Shared std: the log-ratio is a difference of quadratic forms.
  return ((step.x_next - old_mean).squaredNorm() - (step.x_next - new_mean).squaredNorm()) /
         (2.0 * std * std);
}

double policy_logratio(const StepRecord& step, const VelocityModel& new_model, Condition c) {
  return policy_logratio(step, new_model, step.mean, step.std, c);
}

ObjectiveResult grpo_objective_and_grad(const Group& group, const VelocityModel& new_model,
                                        double clip_eps, std::span<const int> members,
                                        std::span<const int> steps) {
  std::vector<int> all_members;
  if (members.empty()) {
    all_members.resize(group.members.size());
    std::iota(all_members.begin(), all_members.end(), 0);
    members = all_members;
  }
  if (steps.empty()) steps = group.opt_steps;
  if (steps.empty()) throw std::invalid_argument("grpo objective: empty optimisation window");

  ObjectiveResult out;
  out.grad = ParamGrad::Zero(new_model.params().size());
  const double norm = 1.0 / (static_cast<double>(members.size()) * static_cast<double>(steps.size()));
  Tape tape;
  for (int i : members) {
    const Trajectory& traj = group.members.at(static_cast<std::size_t>(i));
    const double adv = group.advantages[i];
    for (int s : steps) {
      const StepRecord& rec = traj.record_at(s);
      if (rec.kind != StepKind::SdeEm) {
        throw std::invalid_argument("policy ratio is only defined on SDE window steps");
      }
      const Vec v = new_model.forward(rec.x_cur, rec.t_cur, group.cond, tape);
      const Vec new_mean = sde_mean(rec.x_cur, v, rec.t_cur, rec.t_next, rec.sigma);
      const double inv_var = 1.0 / (rec.std * rec.std);
      const double logr = 0.5 * inv_var *
                          ((rec.x_next - rec.mean).squaredNorm() -
                           (rec.x_next - new_mean).squaredNorm());
      const double r = std::exp(logr);
      const double clipped = std::clamp(r, 1.0 - clip_eps, 1.0 + clip_eps);
      const double unclipped_term = r * adv;
      const double clipped_term = clipped * adv;
      out.max_abs_logratio = std::max(out.max_abs_logratio, std::abs(logr));
      ++out.terms;
      if (clipped_term < unclipped_term) {
        // Clipped branch is the minimum: constant in theta.
        out.objective += norm * clipped_term;
        ++out.clipped_terms;
        continue;
      }
      out.objective += norm * unclipped_term;
      // d term / d mean_new = A r (x_next - mean_new) / std^2
      const double gain = sde_mean_gain(rec.t_cur, rec.t_next, rec.sigma);
      const Vec dv = (norm * adv * r * inv_var * gain) * (rec.x_next - new_mean);
      new_model.backward(tape, dv, out.grad);
    }
  }
  return out;
}

NfeAccount nfe_account(int steps, int optimized_steps, const std::optional<FlashPlan>& flash,
                       std::span<const int> visited_left) {
  NfeAccount acc;
  acc.new_policy = optimized_steps;
  if (!flash) {
    acc.old_policy = steps;
    return acc;
  }
  if (flash->variant == FlashVariant::FlashStar || visited_left.empty()) {
    acc.old_policy = flash->effective_steps;
    return acc;
  }
  double total = 0.0;
  for (int l : visited_left) {
    total += flash_plan(steps, l, flash->size, flash->rate, FlashVariant::Flash).effective_steps;
  }
  acc.old_policy = total / static_cast<double>(visited_left.size());
  return acc;
}

void TrainSetup::validate() const {
  grpo.validate();
  window.validate();
  if (window.steps != grid.steps) {
    throw std::invalid_argument("scheduler T does not match the time grid");
  }
  if (num_conditions < 1) throw std::invalid_argument("need at least one condition");
  if (!reward || num_rewards < 1) throw std::invalid_argument("need at least one reward");
  if (!grpo.reward_weights.empty() &&
      static_cast<int>(grpo.reward_weights.size()) != num_rewards) {
    throw std::invalid_argument("grpo.reward_weights count does not match rewards");
  }
  if (variant == TrainVariant::Flash || variant == TrainVariant::FlashStar) {
    if (!(flash_rate > 0.0 && flash_rate <= 1.0)) {
      throw std::invalid_argument("flash.rate must be in (0, 1]");
    }
    if (window.strategy == Strategy::Random) {
      throw std::invalid_argument("flash variants need a frozen or progressive window");
    }
  }
  if (variant == TrainVariant::FlashStar &&
      (window.strategy != Strategy::Frozen || window.left != 0)) {
    throw std::invalid_argument("flash-star requires the frozen strategy with l = 0");
  }
}

Trainer::Trainer(VelocityModel model, TrainSetup setup, std::uint64_t seed)
    : model_(std::move(model)),
      setup_(std::move(setup)),
      state_(setup_.window),
      optimizer_(setup_.grpo.optimizer),
      rng_(seed) {
  if (!model_.is_trainable()) throw std::invalid_argument("trainer needs a trainable model");
  setup_.validate();
}

std::vector<double> Trainer::weights() const {
  if (!setup_.grpo.reward_weights.empty()) return setup_.grpo.reward_weights;
  return std::vector<double>(static_cast<std::size_t>(setup_.num_rewards), 1.0);
}

Group Trainer::sample_group(const VelocityModel& policy, Condition c, const WindowSet& window,
                            const std::optional<FlashSampling>& flash, Rng& rng) const {
  Group g;
  g.cond = c;
  g.initial = rng.normal_vec(policy.dim());
  const auto plan = plan_steps(setup_.grid, window, flash);
  const int n = setup_.grpo.group_size;
  g.rewards.resize(n, setup_.num_rewards);
  for (int i = 0; i < n; ++i) {
    Rng member = rng.derive(static_cast<std::uint64_t>(i));
    g.members.push_back(run_plan(policy, plan, c, g.initial, member));
    g.rewards.row(i) = setup_.reward(g.members.back().final_state, c).transpose();
  }
  const auto w = weights();
  g.advantages = compute_advantages(g.rewards, setup_.grpo.adv_clip, w, setup_.grpo.std_floor);
  return g;
}

IterationMetrics Trainer::train_iteration() {
  const auto start = std::chrono::steady_clock::now();
  const int m = ++iteration_;
  const GrpoConfig& cfg = setup_.grpo;
  const int T = setup_.grid.steps;
  Rng it_rng = rng_.derive(static_cast<std::uint64_t>(m));

  const VelocityModel old_model = model_;

  WindowSet window = window_at(state_, it_rng);
  WindowSet sde_window = window;
  std::vector<int> opt_steps = window;
  std::optional<FlashSampling> flash;

  switch (setup_.variant) {
    case TrainVariant::Mix:
      break;
    case TrainVariant::Flash:
    case TrainVariant::FlashStar: {
      const auto variant = setup_.variant == TrainVariant::FlashStar ? FlashVariant::FlashStar
                                                                     : FlashVariant::Flash;
      flash = FlashSampling{flash_plan(T, window.front(), state_.size, setup_.flash_rate, variant),
                            setup_.flash_solver};
      break;
    }
    case TrainVariant::DanceBaseline: {
      sde_window = contiguous_window(0, T);
      if (state_.strategy != Strategy::Frozen) {
        // Random subset of w steps, not necessarily contiguous.
        std::vector<int> all = contiguous_window(0, T);
        for (int k = 0; k < state_.size; ++k) {
          std::swap(all[k], all[it_rng.uniform_int(k, T - 1)]);
        }
        opt_steps.assign(all.begin(), all.begin() + state_.size);
        std::sort(opt_steps.begin(), opt_steps.end());
      }
      break;
    }
  }

  IterationMetrics met;
  met.iteration = m;
  met.left = window.front();
  met.tau = state_.tau;
  met.window = opt_steps;
  met.reward_means = Vec::Zero(setup_.num_rewards);

  const auto w = weights();
  const double weight_sum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> all_adv;
  int nfe_old = 0;
  int total_terms = 0;
  int clipped_terms = 0;
  double objective_sum = 0.0;

  for (int p = 0; p < cfg.prompts_per_iteration; ++p) {
    Rng prompt_rng = it_rng.derive(1000 + static_cast<std::uint64_t>(p));
    const Condition c{prompt_rng.uniform_int(0, setup_.num_conditions - 1)};
    Group g = sample_group(old_model, c, sde_window, flash, prompt_rng);
    g.opt_steps = opt_steps;
    nfe_old = g.members.front().nfe();
    met.reward_means += g.rewards.colwise().mean().transpose() / cfg.prompts_per_iteration;
    for (Eigen::Index i = 0; i < g.advantages.size(); ++i) all_adv.push_back(g.advantages[i]);

    for (int start_i = 0; start_i < cfg.group_size; start_i += cfg.accumulation) {
      std::vector<int> chunk(static_cast<std::size_t>(cfg.accumulation));
      std::iota(chunk.begin(), chunk.end(), start_i);
      auto update = [&](std::span<const int> steps) {
        ObjectiveResult res = grpo_objective_and_grad(g, model_, cfg.clip_eps, chunk, steps);
        objective_sum += res.objective;
        total_terms += res.terms;
        clipped_terms += res.clipped_terms;
        met.max_abs_logratio = std::max(met.max_abs_logratio, res.max_abs_logratio);
        // Gradient ascent on J.
        optimizer_.step(model_.mutable_params(), -res.grad);
        ++met.updates;
      };
      if (cfg.update == UpdateMode::PerChunk) {
        update(opt_steps);
      } else {
        for (int s : opt_steps) update(std::span<const int>(&s, 1));
      }
    }
  }

  met.objective = met.updates ? objective_sum / met.updates : 0.0;
  met.clipped_fraction = total_terms ? static_cast<double>(clipped_terms) / total_terms : 0.0;
  double rm = 0.0;
  for (int k = 0; k < setup_.num_rewards; ++k) rm += w[k] * met.reward_means[k];
  met.reward_mean = rm / weight_sum;
  const Eigen::Map<const Vec> adv(all_adv.data(), static_cast<Eigen::Index>(all_adv.size()));
  met.adv_mean = adv.mean();
  met.adv_std = std::sqrt((adv.array() - met.adv_mean).square().mean());
  met.nfe_old = nfe_old;
  met.nfe_new = static_cast<int>(opt_steps.size());

  Rng advance_rng = it_rng.derive(7);
  state_ = advance(state_, m, &advance_rng);
  met.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ledger_.append({m, met.nfe_old, met.nfe_new, met.seconds});
  return met;
}

}  // namespace mixflow
