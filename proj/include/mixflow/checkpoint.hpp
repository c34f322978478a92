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

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "mixflow/flowcore.hpp"

namespace mixflow {

// Text container, version 1:
//
//   mixflow-checkpoint 1
//   seed <u64>
//   dim <int>
//   num_conditions <int>
//   embed_dim <int>
//   hidden <w1,w2,...>
//   activation <silu|tanh>
//   params <count>
//   <one hexadecimal float per line, flat parameter order>
//
// Hex floats make the round trip bit-exact.
struct Checkpoint {
  MlpArch arch;
  Vec params;
  std::uint64_t seed = 0;

  VelocityModel model() const { return VelocityModel::trainable(arch, params); }
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mixflow
