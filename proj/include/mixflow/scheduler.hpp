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

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixflow/types.hpp"

namespace mixflow {

// Sorted, duplicate-free denoising step indices.
using WindowSet = std::vector<int>;

enum class Strategy { Frozen, Random, Progressive };
enum class IntervalSchedule { Constant, LinearDecay, ExpDecay };

std::string to_string(Strategy s);
std::string to_string(IntervalSchedule s);
Strategy strategy_from_string(const std::string& s);
IntervalSchedule schedule_from_string(const std::string& s);

struct ScheduleParams {
  IntervalSchedule kind = IntervalSchedule::Constant;
  double tau0 = 25.0;
  double decay = 0.1;      // k
  double threshold = 13.0; // lambda_thr
  friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

// Shift interval for left boundary l. Constant: tau0. ExpDecay:
// tau0 * exp(-k * relu(l - thr)). LinearDecay: tau0 * max(0, 1 - k * relu(l - thr)).
// Non-integer values are rounded up; the result is at least 1.
int tau_of(int left, const ScheduleParams& schedule);

// Sliding-window scheduler state.
struct WindowState {
  int steps = 25;  // T
  int size = 4;    // w
  int left = 0;    // l
  int stride = 1;  // s
  int tau = 25;    // current shift interval
  Strategy strategy = Strategy::Progressive;
  ScheduleParams schedule;
  // Random strategy: redraw the placement once per tau iterations instead of
  // every iteration.
  bool random_every_tau = false;
  int since_shift = 0;

  void validate() const;
  int max_left() const { return steps - size; }
};

WindowState make_window_state(int steps, int size, int stride, Strategy strategy,
                              const ScheduleParams& schedule);

// Contiguous window {l', ..., l' + w - 1}. Random draws l' uniformly from
// [0, T - w] unless random_every_tau is set (then l is the stored draw).
WindowSet window_at(const WindowState& state, Rng& rng);
WindowSet contiguous_window(int left, int size);

// Post-iteration update for iteration m >= 1. Progressive shifts l by the
// stride once `tau` iterations have elapsed since the previous shift and then
// re-derives tau from the new l. `rng` is only used by Random with
// random_every_tau.
WindowState advance(WindowState state, int iteration, Rng* rng = nullptr);

enum class FlashVariant { Flash, FlashStar };

struct FlashPlan {
  FlashVariant variant = FlashVariant::Flash;
  double rate = 1.0;  // compression rate in (0, 1]
  int steps = 25;     // T
  int left = 0;       // l (forced to 0 for FlashStar)
  int size = 4;       // w
  int post_window_steps = 0;
  int effective_steps = 0;  // T~ = l + w + post_window_steps
};

// ceil((T - l - w) * rate) post-window steps.
FlashPlan flash_plan(int steps, int left, int size, double rate, FlashVariant variant);

// Rate giving exactly `post_steps` post-window steps at l = 0.
double rate_for_post_steps(int steps, int size, int post_steps);

// FlashStar: T / (w + (T - w) r). Flash: T / mean over visited l of
// (w + l + ceil((T - w - l) r)).
double speedup(int steps, int size, double rate,
               std::optional<std::span<const int>> visited_left = std::nullopt);

// One row of the scheduler trace.
struct TraceRow {
  int iteration = 0;
  Strategy strategy = Strategy::Progressive;
  int left = 0;
  int tau = 0;
  WindowSet window;
  int effective_steps = 0;
};

// CSV: m,strategy,l,tau,window,T_eff with the window as space-separated
// indices.
void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows);

// Left boundaries in effect at iterations 1..iterations (before each
// iteration's advance) for a progressive schedule.
std::vector<int> simulate_left(WindowState state, int iterations);

}  // namespace mixflow
