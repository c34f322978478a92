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

#include <filesystem>
#include <sstream>

#include "mixflow/checkpoint.hpp"

namespace mixflow {
namespace {

Checkpoint sample_checkpoint() {
  MlpArch a;
  a.hidden = {7, 3};
  a.embed_dim = 2;
  a.activation = Activation::Tanh;
  Rng rng(9);
  const auto m = VelocityModel::trainable(a, rng);
  return {a, m.params(), 1234567890123ULL};
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint c = sample_checkpoint();
  std::stringstream ss;
  write_checkpoint(ss, c);
  const Checkpoint back = read_checkpoint(ss);
  EXPECT_EQ(back.arch, c.arch);
  EXPECT_EQ(back.seed, c.seed);
  ASSERT_EQ(back.params.size(), c.params.size());
  for (Eigen::Index i = 0; i < c.params.size(); ++i) EXPECT_EQ(back.params[i], c.params[i]);
}

TEST(Checkpoint, EmptyHiddenRoundTrips) {
  Checkpoint c = sample_checkpoint();
  c.arch.hidden.clear();
  c.params = Vec::LinSpaced(static_cast<Eigen::Index>(c.arch.param_count()), -1.0, 1.0);
  std::stringstream ss;
  write_checkpoint(ss, c);
  EXPECT_EQ(read_checkpoint(ss).arch.hidden.size(), 0u);
}

TEST(Checkpoint, HeaderIsVersioned) {
  std::stringstream ss;
  write_checkpoint(ss, sample_checkpoint());
  std::string first;
  std::getline(ss, first);
  EXPECT_EQ(first, "mixflow-checkpoint 1");
}

TEST(Checkpoint, RejectsUnknownVersion) {
  std::stringstream ss;
  write_checkpoint(ss, sample_checkpoint());
  std::string text = ss.str();
  text.replace(text.find(" 1\n"), 3, " 9\n");
  std::stringstream in(text);
  EXPECT_THROW(read_checkpoint(in), std::runtime_error);
}

TEST(Checkpoint, RejectsTruncatedParameters) {
  std::stringstream ss;
  write_checkpoint(ss, sample_checkpoint());
  std::string text = ss.str();
  text.resize(text.size() - 40);
  std::stringstream in(text);
  EXPECT_THROW(read_checkpoint(in), std::runtime_error);
}

TEST(Checkpoint, SaveAndLoadFile) {
  const auto dir = std::filesystem::temp_directory_path() / "mixflow_ckpt_test";
  std::filesystem::create_directories(dir);
  const Checkpoint c = sample_checkpoint();
  save_checkpoint(dir / "a.ckpt", c);
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.params, c.params);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ModelReproducesVelocities) {
  const Checkpoint c = sample_checkpoint();
  std::stringstream ss;
  write_checkpoint(ss, c);
  const auto a = c.model();
  const auto b = read_checkpoint(ss).model();
  const Vec x = Vec::Constant(2, 0.3);
  EXPECT_EQ(a.velocity(x, 0.7, {1}), b.velocity(x, 0.7, {1}));
}

}  // namespace
}  // namespace mixflow
