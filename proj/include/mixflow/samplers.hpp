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

#include <deque>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mixflow/flowcore.hpp"
#include "mixflow/scheduler.hpp"

namespace mixflow {

enum class StepKind { OdeEuler, SdeEm, OdeDpm2Midpoint, OdeDpm2Heun, OdeDpm1, OdeDpm3 };

std::string to_string(StepKind k);
StepKind step_kind_from_string(const std::string& s);
bool is_dpm(StepKind k);

// Decreasing times 1 = t_0 > t_1 > ... > t_T = t_min and per-step noise
// scales sigma_i = eta * sqrt(t_i / (1 - t_i)).
struct TimeGrid {
  int steps = 0;
  std::vector<double> times;   // T + 1
  std::vector<double> sigmas;  // T
  double shift = 1.0;
  double eta = 0.0;
  double t_min = kDefaultTMin;
};

// s u / (1 + (s - 1) u)
double shift_time(double u, double shift);

// u_i = 1 - i/T, shifted, clamped to >= t_min. sigma at i = 0 (t = 1, where
// t/(1-t) diverges) is evaluated at t_1.
TimeGrid make_time_grid(int steps, double shift, double eta,
                        double t_min = kDefaultTMin);

Vec ode_euler_step(const VelocityModel& model, const Vec& x, double t_cur,
                   double t_next, Condition c);

// Euler-Maruyama mean of the reverse SDE given the velocity v at (x, t_cur):
// x + [v + sigma^2 (x + (1 - t) v) / (2t)] dt.
Vec sde_mean(const Vec& x, const Vec& v, double t_cur, double t_next, double sigma);
// d mean / d v (a scalar multiple of the identity).
double sde_mean_gain(double t_cur, double t_next, double sigma);
// sigma sqrt(|dt|)
double sde_std(double t_cur, double t_next, double sigma);

struct SdeStep {
  Vec x_next;
  Vec mean;
  double std = 0.0;
};

SdeStep sde_em_step(const VelocityModel& model, const Vec& x, double t_cur,
                    double t_next, double sigma, Condition c, const Vec& noise,
                    double t_min = kDefaultTMin);

// log N(x; mean, std^2 I)
double transition_logprob(const Vec& mean, double std, const Vec& x);

// log((1 - t) / t), t in (0, 1).
double dpm_lambda(double t);

// Data predictions x - v t at previously visited times, newest last.
class DpmHistory {
 public:
  struct Entry {
    double t;
    Vec x_pred;
  };
  void push(double t, Vec x_pred);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  const Entry& back(std::size_t k = 0) const;  // k-th newest

 private:
  std::deque<Entry> entries_;
};

// Multistep DPM-Solver++ update from t_cur (the newest history entry) to
// t_next, using as many history entries as the order allows. Entries at t = 1
// (infinite log-SNR step) only support a first-order update.
Vec dpm_update(StepKind kind, const DpmHistory& history, const Vec& x, double t_next);

// Evaluates v at (x, t_cur), records the data prediction and applies the
// second-order midpoint update.
Vec dpm2m_step(const VelocityModel& model, DpmHistory& history, const Vec& x,
               double t_cur, double t_next, Condition c);

struct StepRecord {
  int index = 0;
  double t_cur = 0.0;
  double t_next = 0.0;
  StepKind kind = StepKind::OdeEuler;
  double sigma = 0.0;
  Vec x_cur;
  Vec x_next;
  // SdeEm only.
  Vec mean;
  double std = 0.0;
  Vec noise;
};

struct Trajectory {
  Condition cond;
  Vec initial;
  Vec final_state;
  std::vector<StepRecord> records;

  int nfe() const { return static_cast<int>(records.size()); }
  int stochastic_steps() const;
  const StepRecord& record_at(int index) const;
};

struct FlashSampling {
  FlashPlan plan;
  StepKind solver = StepKind::OdeDpm2Midpoint;
};

struct PlannedStep {
  int index = 0;
  double t_cur = 0.0;
  double t_next = 0.0;
  StepKind kind = StepKind::OdeEuler;
  double sigma = 0.0;
};

// DPM segments shorter than this take a first-order final step (and at most
// second order on the step before it).
inline constexpr int kLowerOrderFinalBelow = 15;

// Step schedule: SdeEm on the window, OdeEuler elsewhere; with flash the
// post-window region is re-gridded to the plan's step count (uniform in the
// unshifted coordinate) and uses the configured solver.
std::vector<PlannedStep> plan_steps(const TimeGrid& grid, const WindowSet& window,
                                    const std::optional<FlashSampling>& flash = std::nullopt);

Trajectory run_plan(const VelocityModel& model, const std::vector<PlannedStep>& plan,
                    Condition c, const Vec& initial, Rng& rng);

Trajectory sample_trajectory(const VelocityModel& model, const TimeGrid& grid,
                             const WindowSet& window, Condition c, const Vec& initial,
                             Rng& rng,
                             const std::optional<FlashSampling>& flash = std::nullopt);

// Number of leading steps driven by the trained model: round(p_mix * T).
int hybrid_split(int steps, double p_mix);

// Euler ODE sampling; trained model for the first round(p_mix T) steps, base
// model afterwards.
Vec hybrid_sample(const VelocityModel& trained, const VelocityModel& base,
                  const TimeGrid& grid, double p_mix, Condition c, const Vec& initial);

// Tab-separated, one line per step:
//   index kind t_cur t_next sigma x_cur[0..d) x_next[0..d) mean[0..d) std
// mean/std are '-' on deterministic steps.
void write_trajectory_dump(std::ostream& os, const Trajectory& traj);

}  // namespace mixflow
