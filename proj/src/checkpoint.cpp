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

#include "mixflow/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace mixflow {
namespace {

constexpr const char* kMagic = "mixflow-checkpoint";
constexpr int kVersion = 1;

template <typename T>
T expect_field(std::istream& is, const char* key) {
  std::string k;
  T value{};
  if (!(is >> k) || k != key || !(is >> value)) {
    throw std::runtime_error(std::string("checkpoint: expected field '") + key + "'");
  }
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os << kMagic << ' ' << kVersion << '\n';
  os << "seed " << ckpt.seed << '\n';
  os << "dim " << ckpt.arch.dim << '\n';
  os << "num_conditions " << ckpt.arch.num_conditions << '\n';
  os << "embed_dim " << ckpt.arch.embed_dim << '\n';
  os << "hidden ";
  for (std::size_t i = 0; i < ckpt.arch.hidden.size(); ++i) {
    os << (i ? "," : "") << ckpt.arch.hidden[i];
  }
  if (ckpt.arch.hidden.empty()) os << "-";
  os << '\n';
  os << "activation " << to_string(ckpt.arch.activation) << '\n';
  os << "params " << ckpt.params.size() << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < ckpt.params.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%a\n", ckpt.params[i]);
    os << buf;
  }
}

Checkpoint read_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic) {
    throw std::runtime_error("checkpoint: bad header");
  }
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.seed = expect_field<std::uint64_t>(is, "seed");
  ck.arch.dim = expect_field<int>(is, "dim");
  ck.arch.num_conditions = expect_field<int>(is, "num_conditions");
  ck.arch.embed_dim = expect_field<int>(is, "embed_dim");
  const auto hidden = expect_field<std::string>(is, "hidden");
  ck.arch.hidden.clear();
  if (hidden != "-") {
    std::istringstream hs(hidden);
    std::string tok;
    while (std::getline(hs, tok, ',')) ck.arch.hidden.push_back(std::stoi(tok));
  }
  ck.arch.activation = activation_from_string(expect_field<std::string>(is, "activation"));
  const auto n = expect_field<long>(is, "params");
  if (static_cast<std::size_t>(n) != ck.arch.param_count()) {
    throw std::runtime_error("checkpoint: parameter count does not match architecture");
  }
  ck.params.resize(n);
  std::string tok;
  for (long i = 0; i < n; ++i) {
    if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated parameter list");
    ck.params[i] = std::strtod(tok.c_str(), nullptr);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace mixflow
