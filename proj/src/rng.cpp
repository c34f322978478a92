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

#include "mixflow/types.hpp"

#include <cmath>

namespace mixflow {

void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) {
    throw std::domain_error(std::string(what) + ": non-finite value");
  }
}

std::uint64_t Rng::mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t key) const {
  return Rng(mix(seed_ ^ mix(key + 0x632be59bd9b4e019ULL)));
}

int Rng::uniform_int(int lo, int hi) {
  std::uniform_int_distribution<int> dist(lo, hi);
  return dist(engine_);
}

Vec Rng::normal_vec(int dim) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal();
  return v;
}

}  // namespace mixflow
