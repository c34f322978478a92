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

#include "mixflow/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mixflow {
namespace {

// (T - l - w) * r can land a few ulps above an integer (e.g. 21 * 4/21).
int ceil_count(double x) {
  return static_cast<int>(std::ceil(x - 1e-9 * std::max(1.0, std::abs(x))));
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Frozen: return "frozen";
    case Strategy::Random: return "random";
    case Strategy::Progressive: return "progressive";
  }
  return "?";
}

std::string to_string(IntervalSchedule s) {
  switch (s) {
    case IntervalSchedule::Constant: return "constant";
    case IntervalSchedule::LinearDecay: return "linear";
    case IntervalSchedule::ExpDecay: return "exp";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "frozen") return Strategy::Frozen;
  if (s == "random") return Strategy::Random;
  if (s == "progressive") return Strategy::Progressive;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

IntervalSchedule schedule_from_string(const std::string& s) {
  if (s == "constant") return IntervalSchedule::Constant;
  if (s == "linear") return IntervalSchedule::LinearDecay;
  if (s == "exp") return IntervalSchedule::ExpDecay;
  throw std::invalid_argument("unknown interval schedule '" + s + "'");
}

int tau_of(int left, const ScheduleParams& schedule) {
  if (left < 0) throw std::invalid_argument("tau_of: negative left boundary");
  const double excess = std::max(0.0, left - schedule.threshold);
  double tau = schedule.tau0;
  switch (schedule.kind) {
    case IntervalSchedule::Constant:
      break;
    case IntervalSchedule::ExpDecay:
      tau = schedule.tau0 * std::exp(-schedule.decay * excess);
      break;
    case IntervalSchedule::LinearDecay:
      tau = schedule.tau0 * std::max(0.0, 1.0 - schedule.decay * excess);
      break;
  }
  return std::max(1, static_cast<int>(std::ceil(tau)));
}

void WindowState::validate() const {
  std::ostringstream err;
  if (steps < 1) err << "scheduler: T must be >= 1; ";
  if (size < 1 || size > steps) err << "scheduler: window size must be in [1, T]; ";
  if (left < 0 || left + size > steps) err << "scheduler: l + w must be <= T; ";
  if (stride < 1) err << "scheduler: stride must be >= 1; ";
  if (tau < 1) err << "scheduler: tau must be >= 1; ";
  if (schedule.tau0 < 1.0) err << "scheduler: tau0 must be >= 1; ";
  const auto msg = err.str();
  if (!msg.empty()) throw std::invalid_argument(msg.substr(0, msg.size() - 2));
}

WindowState make_window_state(int steps, int size, int stride, Strategy strategy,
                              const ScheduleParams& schedule) {
  WindowState s;
  s.steps = steps;
  s.size = size;
  s.stride = stride;
  s.strategy = strategy;
  s.schedule = schedule;
  s.left = 0;
  s.tau = tau_of(0, schedule);
  s.validate();
  return s;
}

WindowSet contiguous_window(int left, int size) {
  WindowSet w(static_cast<std::size_t>(size));
  std::iota(w.begin(), w.end(), left);
  return w;
}

WindowSet window_at(const WindowState& state, Rng& rng) {
  if (state.strategy == Strategy::Random && !state.random_every_tau) {
    return contiguous_window(rng.uniform_int(0, state.max_left()), state.size);
  }
  return contiguous_window(state.left, state.size);
}

WindowState advance(WindowState state, int iteration, Rng* rng) {
  if (iteration < 1) throw std::invalid_argument("advance: iteration must be >= 1");
  switch (state.strategy) {
    case Strategy::Frozen:
      return state;
    case Strategy::Random:
      if (state.random_every_tau) {
        if (++state.since_shift >= state.tau) {
          state.since_shift = 0;
          if (rng == nullptr) throw std::invalid_argument("advance: random redraw needs an rng");
          state.left = rng->uniform_int(0, state.max_left());
        }
      }
      return state;
    case Strategy::Progressive:
      if (++state.since_shift >= state.tau) {
        state.since_shift = 0;
        state.left = std::min(state.left + state.stride, state.max_left());
        state.tau = tau_of(state.left, state.schedule);
      }
      return state;
  }
  return state;
}

FlashPlan flash_plan(int steps, int left, int size, double rate, FlashVariant variant) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw std::invalid_argument("flash_plan: compression rate must be in (0, 1]");
  }
  if (variant == FlashVariant::FlashStar) left = 0;
  if (left < 0 || size < 1 || left + size > steps) {
    throw std::invalid_argument("flash_plan: need 0 <= l and l + w <= T");
  }
  FlashPlan p;
  p.variant = variant;
  p.rate = rate;
  p.steps = steps;
  p.left = left;
  p.size = size;
  p.post_window_steps = ceil_count((steps - left - size) * rate);
  p.effective_steps = left + size + p.post_window_steps;
  return p;
}

double rate_for_post_steps(int steps, int size, int post_steps) {
  if (post_steps < 1 || post_steps > steps - size) {
    throw std::invalid_argument("rate_for_post_steps: need 1 <= post steps <= T - w");
  }
  return static_cast<double>(post_steps) / static_cast<double>(steps - size);
}

double speedup(int steps, int size, double rate,
               std::optional<std::span<const int>> visited_left) {
  if (!visited_left) {
    return steps / (size + (steps - size) * rate);
  }
  if (visited_left->empty()) throw std::invalid_argument("speedup: no visited l");
  double total = 0.0;
  for (int l : *visited_left) {
    total += flash_plan(steps, l, size, rate, FlashVariant::Flash).effective_steps;
  }
  return steps / (total / static_cast<double>(visited_left->size()));
}

void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows) {
  os << "m,strategy,l,tau,window,T_eff\n";
  for (const TraceRow& r : rows) {
    os << r.iteration << ',' << to_string(r.strategy) << ',' << r.left << ',' << r.tau
       << ',';
    for (std::size_t i = 0; i < r.window.size(); ++i) os << (i ? " " : "") << r.window[i];
    os << ',' << r.effective_steps << '\n';
  }
}

std::vector<int> simulate_left(WindowState state, int iterations) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(iterations));
  for (int m = 1; m <= iterations; ++m) {
    out.push_back(state.left);
    state = advance(state, m);
  }
  return out;
}

}  // namespace mixflow
