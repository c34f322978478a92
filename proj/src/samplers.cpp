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

#include "mixflow/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace mixflow {

std::string to_string(StepKind k) {
  switch (k) {
    case StepKind::OdeEuler: return "ode_euler";
    case StepKind::SdeEm: return "sde_em";
    case StepKind::OdeDpm2Midpoint: return "dpm2_midpoint";
    case StepKind::OdeDpm2Heun: return "dpm2_heun";
    case StepKind::OdeDpm1: return "dpm1";
    case StepKind::OdeDpm3: return "dpm3";
  }
  return "?";
}

StepKind step_kind_from_string(const std::string& s) {
  for (StepKind k : {StepKind::OdeEuler, StepKind::SdeEm, StepKind::OdeDpm2Midpoint,
                     StepKind::OdeDpm2Heun, StepKind::OdeDpm1, StepKind::OdeDpm3}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown step kind '" + s + "'");
}

bool is_dpm(StepKind k) {
  return k == StepKind::OdeDpm1 || k == StepKind::OdeDpm2Midpoint ||
         k == StepKind::OdeDpm2Heun || k == StepKind::OdeDpm3;
}

double shift_time(double u, double shift) {
  return shift * u / (1.0 + (shift - 1.0) * u);
}

TimeGrid make_time_grid(int steps, double shift, double eta, double t_min) {
  if (steps < 2) throw std::invalid_argument("time grid: T must be >= 2");
  if (shift < 1.0) throw std::invalid_argument("time grid: shift must be >= 1");
  if (eta < 0.0) throw std::invalid_argument("time grid: eta must be >= 0");
  if (!(t_min > 0.0 && t_min < 1.0)) {
    throw std::invalid_argument("time grid: t_min must be in (0, 1)");
  }
  TimeGrid g;
  g.steps = steps;
  g.shift = shift;
  g.eta = eta;
  g.t_min = t_min;
  g.times.resize(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    const double u = 1.0 - static_cast<double>(i) / steps;
    g.times[i] = std::max(shift_time(u, shift), t_min);
  }
  for (int i = 0; i < steps; ++i) {
    if (!(g.times[i] > g.times[i + 1])) {
      std::ostringstream os;
      os << "time grid: times not strictly decreasing at step " << i
         << " (T too large for t_min=" << t_min << ")";
      throw std::invalid_argument(os.str());
    }
  }
  g.sigmas.resize(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double t = i == 0 ? g.times[1] : g.times[i];
    g.sigmas[i] = eta * std::sqrt(t / (1.0 - t));
  }
  return g;
}

Vec ode_euler_step(const VelocityModel& model, const Vec& x, double t_cur,
                   double t_next, Condition c) {
  if (!(t_cur > t_next)) throw std::invalid_argument("ode_euler_step: need t_cur > t_next");
  return x + model.velocity(x, t_cur, c) * (t_next - t_cur);
}

Vec sde_mean(const Vec& x, const Vec& v, double t_cur, double t_next, double sigma) {
  const Vec drift = v + (sigma * sigma) * (x + (1.0 - t_cur) * v) / (2.0 * t_cur);
  return x + drift * (t_next - t_cur);
}

double sde_mean_gain(double t_cur, double t_next, double sigma) {
  return (t_next - t_cur) * (1.0 + sigma * sigma * (1.0 - t_cur) / (2.0 * t_cur));
}

double sde_std(double t_cur, double t_next, double sigma) {
  return sigma * std::sqrt(std::abs(t_next - t_cur));
}

SdeStep sde_em_step(const VelocityModel& model, const Vec& x, double t_cur,
                    double t_next, double sigma, Condition c, const Vec& noise,
                    double t_min) {
  if (t_cur < t_min) {
    std::ostringstream os;
    os << "sde_em_step: t_cur=" << t_cur << " below t_min=" << t_min;
    throw std::domain_error(os.str());
  }
  if (sigma < 0.0) throw std::invalid_argument("sde_em_step: sigma must be >= 0");
  if (noise.size() != x.size()) throw std::invalid_argument("sde_em_step: noise dimension");
  SdeStep out;
  out.mean = sde_mean(x, model.velocity(x, t_cur, c), t_cur, t_next, sigma);
  out.std = sde_std(t_cur, t_next, sigma);
  out.x_next = out.mean + out.std * noise;
  return out;
}

double transition_logprob(const Vec& mean, double std, const Vec& x) {
  if (!(std > 0.0)) throw std::domain_error("transition_logprob: std must be > 0");
  const double d = static_cast<double>(x.size());
  return -(x - mean).squaredNorm() / (2.0 * std * std) - d * std::log(std) -
         0.5 * d * std::log(2.0 * std::numbers::pi);
}

double dpm_lambda(double t) {
  if (!(t > 0.0 && t < 1.0)) {
    std::ostringstream os;
    os << "dpm_lambda: t=" << t << " outside (0, 1)";
    throw std::domain_error(os.str());
  }
  return std::log((1.0 - t) / t);
}

void DpmHistory::push(double t, Vec x_pred) {
  entries_.push_back({t, std::move(x_pred)});
  while (entries_.size() > 3) entries_.pop_front();
}

const DpmHistory::Entry& DpmHistory::back(std::size_t k) const {
  if (k >= entries_.size()) throw std::out_of_range("DpmHistory::back");
  return entries_[entries_.size() - 1 - k];
}

Vec dpm_update(StepKind kind, const DpmHistory& history, const Vec& x, double t_next) {
  if (history.size() == 0) throw std::invalid_argument("dpm_update: empty history");
  const double t_cur = history.back().t;
  if (!(t_next > 0.0 && t_next < t_cur)) {
    throw std::invalid_argument("dpm_update: need 0 < t_next < t_cur");
  }
  int order = 1;
  switch (kind) {
    case StepKind::OdeDpm1: order = 1; break;
    case StepKind::OdeDpm2Midpoint:
    case StepKind::OdeDpm2Heun: order = 2; break;
    case StepKind::OdeDpm3: order = 3; break;
    default: throw std::invalid_argument("dpm_update: not a DPM step kind");
  }
  // Only entries strictly inside (0, 1) carry a finite log-SNR.
  std::size_t usable = 0;
  while (usable < history.size() && history.back(usable).t < 1.0) ++usable;
  order = std::min<int>(order, static_cast<int>(usable));

  const Vec& m0 = history.back().x_pred;
  const double ratio = t_next / t_cur;
  const double alpha = 1.0 - t_next;
  if (order < 1) {
    // t_cur = 1: exp(-h) = 0.
    return ratio * x + alpha * m0;
  }
  const double h = dpm_lambda(t_next) - dpm_lambda(t_cur);
  const double em1 = std::expm1(-h);  // exp(-h) - 1
  if (order == 1) return ratio * x - alpha * em1 * m0;

  const auto& e1 = history.back(1);
  const double h0 = dpm_lambda(t_cur) - dpm_lambda(e1.t);
  if (!(h0 > 0.0)) throw std::invalid_argument("dpm_update: coincident history times");
  const double r0 = h0 / h;
  const Vec d1_0 = (m0 - e1.x_pred) / r0;

  if (order == 2 || kind != StepKind::OdeDpm3) {
    if (kind == StepKind::OdeDpm2Heun) {
      return ratio * x - alpha * em1 * m0 + alpha * (em1 / h + 1.0) * d1_0;
    }
    return ratio * x - alpha * em1 * (m0 + 0.5 * d1_0);
  }

  const auto& e2 = history.back(2);
  const double h1 = dpm_lambda(e1.t) - dpm_lambda(e2.t);
  if (!(h1 > 0.0)) throw std::invalid_argument("dpm_update: coincident history times");
  const double r1 = h1 / h;
  const Vec d1_1 = (e1.x_pred - e2.x_pred) / r1;
  const Vec d1 = d1_0 + (r0 / (r0 + r1)) * (d1_0 - d1_1);
  const Vec d2 = (d1_0 - d1_1) / (r0 + r1);
  return ratio * x - alpha * em1 * m0 + alpha * (em1 / h + 1.0) * d1 -
         alpha * ((em1 + h) / (h * h) - 0.5) * d2;
}

Vec dpm2m_step(const VelocityModel& model, DpmHistory& history, const Vec& x,
               double t_cur, double t_next, Condition c) {
  const Vec v = model.velocity(x, t_cur, c);
  history.push(t_cur, x - v * t_cur);
  return dpm_update(StepKind::OdeDpm2Midpoint, history, x, t_next);
}

int Trajectory::stochastic_steps() const {
  return static_cast<int>(std::count_if(records.begin(), records.end(), [](const auto& r) {
    return r.kind == StepKind::SdeEm;
  }));
}

const StepRecord& Trajectory::record_at(int index) const {
  for (const auto& r : records) {
    if (r.index == index) return r;
  }
  throw std::out_of_range("trajectory has no step " + std::to_string(index));
}

std::vector<PlannedStep> plan_steps(const TimeGrid& grid, const WindowSet& window,
                                    const std::optional<FlashSampling>& flash) {
  const int T = grid.steps;
  std::vector<char> in_window(static_cast<std::size_t>(T), 0);
  for (std::size_t k = 0; k < window.size(); ++k) {
    const int i = window[k];
    if (i < 0 || i >= T) throw std::invalid_argument("window index out of range");
    if (k > 0 && window[k - 1] >= i) throw std::invalid_argument("window must be sorted and unique");
    if (grid.times[i + 1] < grid.t_min) {
      throw std::invalid_argument("window step ends below t_min");
    }
    in_window[i] = 1;
  }

  std::vector<PlannedStep> plan;
  if (!flash) {
    for (int i = 0; i < T; ++i) {
      plan.push_back({i, grid.times[i], grid.times[i + 1],
                      in_window[i] ? StepKind::SdeEm : StepKind::OdeEuler, grid.sigmas[i]});
    }
    return plan;
  }

  const FlashPlan& fp = flash->plan;
  if (fp.steps != T) throw std::invalid_argument("flash plan built for a different T");
  if (window != contiguous_window(fp.left, fp.size)) {
    throw std::invalid_argument("flash plan inconsistent with window");
  }
  if (!is_dpm(flash->solver) && flash->solver != StepKind::OdeEuler) {
    throw std::invalid_argument("flash solver must be an ODE step kind");
  }
  const int end = fp.left + fp.size;
  for (int i = 0; i < end; ++i) {
    plan.push_back({i, grid.times[i], grid.times[i + 1],
                    in_window[i] ? StepKind::SdeEm : StepKind::OdeEuler, grid.sigmas[i]});
  }
  const int n = fp.post_window_steps;
  if (n == 0) return plan;
  const double u0 = 1.0 - static_cast<double>(end) / T;
  std::vector<double> t(static_cast<std::size_t>(n) + 1);
  t[0] = grid.times[end];
  for (int j = 1; j <= n; ++j) {
    const double u = u0 * (1.0 - static_cast<double>(j) / n);
    t[j] = std::max(shift_time(u, grid.shift), grid.t_min);
  }
  for (int j = 0; j < n; ++j) {
    if (!(t[j] > t[j + 1])) throw std::invalid_argument("flash grid not decreasing");
    StepKind kind = flash->solver;
    // Short multistep runs drop to lower order at the end.
    if (is_dpm(kind) && n < kLowerOrderFinalBelow) {
      if (j == n - 1) {
        kind = StepKind::OdeDpm1;
      } else if (j == n - 2 && kind == StepKind::OdeDpm3) {
        kind = StepKind::OdeDpm2Midpoint;
      }
    }
    plan.push_back({end + j, t[j], t[j + 1], kind, 0.0});
  }
  return plan;
}

Trajectory run_plan(const VelocityModel& model, const std::vector<PlannedStep>& plan,
                    Condition c, const Vec& initial, Rng& rng) {
  Trajectory traj;
  traj.cond = c;
  traj.initial = initial;
  traj.records.reserve(plan.size());
  Vec x = initial;
  DpmHistory history;
  std::optional<StepKind> prev;
  for (const PlannedStep& p : plan) {
    if (!prev || is_dpm(*prev) != is_dpm(p.kind)) history.clear();
    prev = p.kind;
    StepRecord r;
    r.index = p.index;
    r.t_cur = p.t_cur;
    r.t_next = p.t_next;
    r.kind = p.kind;
    r.sigma = p.sigma;
    r.x_cur = x;
    if (p.kind == StepKind::SdeEm) {
      r.noise = rng.normal_vec(static_cast<int>(x.size()));
      SdeStep s = sde_em_step(model, x, p.t_cur, p.t_next, p.sigma, c, r.noise);
      r.mean = std::move(s.mean);
      r.std = s.std;
      r.x_next = std::move(s.x_next);
    } else if (p.kind == StepKind::OdeEuler) {
      r.x_next = ode_euler_step(model, x, p.t_cur, p.t_next, c);
    } else {
      const Vec v = model.velocity(x, p.t_cur, c);
      history.push(p.t_cur, x - v * p.t_cur);
      r.x_next = dpm_update(p.kind, history, x, p.t_next);
    }
    x = r.x_next;
    traj.records.push_back(std::move(r));
  }
  traj.final_state = x;
  return traj;
}

Trajectory sample_trajectory(const VelocityModel& model, const TimeGrid& grid,
                             const WindowSet& window, Condition c, const Vec& initial,
                             Rng& rng, const std::optional<FlashSampling>& flash) {
  return run_plan(model, plan_steps(grid, window, flash), c, initial, rng);
}

int hybrid_split(int steps, double p_mix) {
  if (!(p_mix >= 0.0 && p_mix <= 1.0)) throw std::invalid_argument("p_mix must be in [0, 1]");
  return static_cast<int>(std::lround(p_mix * steps));
}

Vec hybrid_sample(const VelocityModel& trained, const VelocityModel& base,
                  const TimeGrid& grid, double p_mix, Condition c, const Vec& initial) {
  if (trained.dim() != base.dim()) throw std::invalid_argument("hybrid_sample: dimension mismatch");
  const int split = hybrid_split(grid.steps, p_mix);
  Vec x = initial;
  for (int i = 0; i < grid.steps; ++i) {
    const VelocityModel& m = i < split ? trained : base;
    x = ode_euler_step(m, x, grid.times[i], grid.times[i + 1], c);
  }
  return x;
}

void write_trajectory_dump(std::ostream& os, const Trajectory& traj) {
  auto put = [&os](const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << '\t' << num(v[i]);
  };
  const auto d = traj.initial.size();
  for (const StepRecord& r : traj.records) {
    os << r.index << '\t' << to_string(r.kind) << '\t' << num(r.t_cur) << '\t'
       << num(r.t_next) << '\t' << num(r.sigma);
    put(r.x_cur);
    put(r.x_next);
    if (r.kind == StepKind::SdeEm) {
      put(r.mean);
      os << '\t' << num(r.std);
    } else {
      for (Eigen::Index i = 0; i <= d; ++i) os << "\t-";
    }
    os << '\n';
  }
}

}  // namespace mixflow
