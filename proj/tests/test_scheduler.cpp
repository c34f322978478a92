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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "mixflow/scheduler.hpp"

namespace mixflow {
namespace {

WindowState progressive(int T, int w, int s, int tau) {
  ScheduleParams p;
  p.tau0 = tau;
  return make_window_state(T, w, s, Strategy::Progressive, p);
}

TEST(Window, ContiguousFromLeft) {
  EXPECT_EQ(contiguous_window(0, 4), (WindowSet{0, 1, 2, 3}));
  const WindowState st = progressive(25, 4, 1, 25);
  Rng rng(0);
  EXPECT_EQ(window_at(st, rng), (WindowSet{0, 1, 2, 3}));
  WindowState last = st;
  last.left = 21;
  EXPECT_EQ(window_at(last, rng), (WindowSet{21, 22, 23, 24}));
}

TEST(Window, RandomIsSeededAndInRange) {
  ScheduleParams p;
  const WindowState st = make_window_state(25, 4, 1, Strategy::Random, p);
  Rng a(5);
  Rng b(5);
  std::vector<int> seen(22, 0);
  for (int i = 0; i < 2000; ++i) {
    const WindowSet wa = window_at(st, a);
    EXPECT_EQ(wa, window_at(st, b));
    ASSERT_EQ(wa.size(), 4u);
    ASSERT_GE(wa.front(), 0);
    ASSERT_LE(wa.back(), 24);
    ++seen[static_cast<std::size_t>(wa.front())];
  }
  for (int c : seen) EXPECT_GT(c, 40);
}

TEST(Window, RandomEveryTauHoldsPlacement) {
  ScheduleParams p;
  p.tau0 = 5;
  WindowState st = make_window_state(25, 4, 1, Strategy::Random, p);
  st.random_every_tau = true;
  Rng rng(8);
  std::vector<int> lefts;
  for (int m = 1; m <= 20; ++m) {
    lefts.push_back(window_at(st, rng).front());
    st = advance(st, m, &rng);
  }
  for (int m = 0; m < 20; ++m) {
    if (m % 5 != 0) {
      EXPECT_EQ(lefts[static_cast<std::size_t>(m)], lefts[static_cast<std::size_t>(m - 1)]);
    }
  }
}

TEST(Advance, GoldenTrace) {
  std::ifstream in(std::string(MIXFLOW_TEST_DATA) + "/golden_progressive_T25_w4_tau25_s1.csv");
  ASSERT_TRUE(in) << "missing golden trace";
  std::string line;
  std::getline(in, line);
  WindowState st = progressive(25, 4, 1, 25);
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    int m = 0;
    int l = 0;
    int tau = 0;
    char comma = 0;
    ss >> m >> comma >> l >> comma >> tau;
    st = advance(st, m);
    ASSERT_EQ(st.left, l) << "m=" << m;
    ASSERT_EQ(st.tau, tau) << "m=" << m;
    ++rows;
  }
  EXPECT_EQ(rows, 300);
}

TEST(Advance, FrozenNeverMoves) {
  ScheduleParams p;
  WindowState st = make_window_state(25, 4, 1, Strategy::Frozen, p);
  for (int m = 1; m <= 300; ++m) st = advance(st, m);
  EXPECT_EQ(st.left, 0);
}

TEST(Advance, StrideThreeCapsAtLastWindow) {
  WindowState st = progressive(25, 4, 3, 10);
  for (int m = 1; m <= 80; ++m) st = advance(st, m);
  EXPECT_EQ(st.left, 21);
}

TEST(Advance, ConstantShiftsEveryTau) {
  WindowState st = progressive(25, 4, 1, 7);
  int prev = st.left;
  int last_shift = 0;
  for (int m = 1; m <= 100; ++m) {
    st = advance(st, m);
    if (st.left != prev) {
      EXPECT_EQ(m - last_shift, 7);
      last_shift = m;
      prev = st.left;
    }
  }
}

TEST(Advance, LeftIsMonotoneAndBounded) {
  for (auto kind : {IntervalSchedule::Constant, IntervalSchedule::ExpDecay, IntervalSchedule::LinearDecay}) {
    ScheduleParams p{kind, 20.0, 0.1, 13.0};
    WindowState st = make_window_state(25, 4, 2, Strategy::Progressive, p);
    int prev = 0;
    for (int m = 1; m <= 1000; ++m) {
      st = advance(st, m);
      EXPECT_GE(st.left, prev);
      EXPECT_LE(st.left, 21);
      prev = st.left;
    }
    EXPECT_EQ(st.left, 21);
  }
}

TEST(Advance, RejectsIterationZero) {
  EXPECT_THROW(advance(progressive(25, 4, 1, 25), 0), std::invalid_argument);
}

TEST(TauOf, ExpDecayValues) {
  const ScheduleParams p{IntervalSchedule::ExpDecay, 20.0, 0.1, 13.0};
  for (int l = 0; l <= 13; ++l) EXPECT_EQ(tau_of(l, p), 20);
  EXPECT_EQ(tau_of(23, p), 8);
  EXPECT_EQ(tau_of(23, p), static_cast<int>(std::ceil(20.0 * std::exp(-1.0))));
  int prev = 20;
  for (int l = 0; l <= 60; ++l) {
    EXPECT_LE(tau_of(l, p), prev);
    prev = tau_of(l, p);
  }
}

TEST(TauOf, ConstantAndLinear) {
  const ScheduleParams c{IntervalSchedule::Constant, 25.0, 0.1, 13.0};
  for (int l = 0; l < 30; ++l) EXPECT_EQ(tau_of(l, c), 25);
  const ScheduleParams lin{IntervalSchedule::LinearDecay, 20.0, 0.1, 13.0};
  EXPECT_EQ(tau_of(13, lin), 20);
  EXPECT_EQ(tau_of(18, lin), 10);
  EXPECT_EQ(tau_of(40, lin), 1);
}

TEST(TauOf, DecayedIntervalIsAppliedAfterShift) {
  ScheduleParams p{IntervalSchedule::ExpDecay, 20.0, 0.1, 13.0};
  WindowState st = make_window_state(25, 4, 1, Strategy::Progressive, p);
  st.left = 13;
  st = advance(advance(st, 1), 2);
  st.since_shift = st.tau - 1;
  st = advance(st, 3);
  EXPECT_EQ(st.left, 14);
  EXPECT_EQ(st.tau, tau_of(14, p));
}

TEST(State, ValidateRejectsBadBounds) {
  WindowState st = progressive(25, 4, 1, 25);
  st.left = 22;
  EXPECT_THROW(st.validate(), std::invalid_argument);
  EXPECT_THROW(make_window_state(25, 26, 1, Strategy::Frozen, {}), std::invalid_argument);
  EXPECT_THROW(make_window_state(25, 4, 0, Strategy::Frozen, {}), std::invalid_argument);
}

TEST(Flash, NoCompressionAtRateOne) {
  for (int l = 0; l <= 21; ++l) {
    EXPECT_EQ(flash_plan(25, l, 4, 1.0, FlashVariant::Flash).effective_steps, 25);
  }
  EXPECT_DOUBLE_EQ(speedup(25, 4, 1.0), 1.0);
}

TEST(Flash, StarWithFourPostSteps) {
  const double r = 4.0 / 21.0;
  EXPECT_DOUBLE_EQ(rate_for_post_steps(25, 4, 4), r);
  const FlashPlan p = flash_plan(25, 9, 4, r, FlashVariant::FlashStar);
  EXPECT_EQ(p.left, 0);
  EXPECT_EQ(p.post_window_steps, 4);
  EXPECT_EQ(p.effective_steps, 8);
  EXPECT_DOUBLE_EQ(speedup(25, 4, r), 3.125);
}

TEST(Flash, EffectiveStepsShrinkWithRate) {
  int prev = 26;
  for (double r = 1.0; r > 0.04; r -= 0.05) {
    const int e = flash_plan(25, 0, 4, r, FlashVariant::Flash).effective_steps;
    EXPECT_LE(e, prev);
    EXPECT_LE(e, 25);
    prev = e;
  }
  EXPECT_EQ(flash_plan(25, 0, 4, 0.01, FlashVariant::Flash).post_window_steps, 1);
}

TEST(Flash, RejectsBadRate) {
  EXPECT_THROW(flash_plan(25, 0, 4, 0.0, FlashVariant::Flash), std::invalid_argument);
  EXPECT_THROW(flash_plan(25, 0, 4, 1.5, FlashVariant::Flash), std::invalid_argument);
  EXPECT_THROW(flash_plan(25, 22, 4, 0.5, FlashVariant::Flash), std::invalid_argument);
}

TEST(Flash, AveragedSpeedupIsSmaller) {
  const double r = 4.0 / 21.0;
  const std::vector<int> visited = simulate_left(progressive(25, 4, 1, 14), 300);
  EXPECT_LT(speedup(25, 4, r, std::span<const int>(visited)), speedup(25, 4, r));
}

TEST(Simulate, LeftBeforeEachAdvance) {
  const std::vector<int> l = simulate_left(progressive(25, 4, 1, 25), 300);
  ASSERT_EQ(l.size(), 300u);
  EXPECT_EQ(l[0], 0);
  EXPECT_EQ(l[24], 0);
  EXPECT_EQ(l[25], 1);
  EXPECT_EQ(l.back(), 11);
}

TEST(Trace, CsvLayout) {
  std::vector<TraceRow> rows{{1, Strategy::Progressive, 0, 25, {0, 1, 2, 3}, 25},
                             {2, Strategy::Random, 7, 25, {7, 8, 9, 10}, 25}};
  std::ostringstream os;
  write_trace_csv(os, rows);
  EXPECT_EQ(os.str(),
            "m,strategy,l,tau,window,T_eff\n"
            "1,progressive,0,25,0 1 2 3,25\n"
            "2,random,7,25,7 8 9 10,25\n");
}

TEST(Names, RoundTrip) {
  for (auto s : {Strategy::Frozen, Strategy::Random, Strategy::Progressive}) {
    EXPECT_EQ(strategy_from_string(to_string(s)), s);
  }
  for (auto s : {IntervalSchedule::Constant, IntervalSchedule::LinearDecay, IntervalSchedule::ExpDecay}) {
    EXPECT_EQ(schedule_from_string(to_string(s)), s);
  }
  EXPECT_THROW(strategy_from_string("sideways"), std::invalid_argument);
}

}  // namespace
}  // namespace mixflow
