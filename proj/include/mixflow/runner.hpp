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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mixflow/config.hpp"
#include "mixflow/grpo.hpp"

namespace mixflow {

std::string code_version();

// Run record written as manifest.json in a command's output directory. It is
// written with status "incomplete" before any work and rewritten as
// "complete" once every listed artifact exists.
class Manifest {
 public:
  Manifest(std::filesystem::path dir, std::string command, const RunConfig& config);

  void add(const std::filesystem::path& artifact);
  void complete();
  void fail(const std::string& error);

  const std::filesystem::path& path() const { return path_; }

 private:
  void write(const std::string& status, const std::string& error = {}) const;

  std::filesystem::path dir_;
  std::filesystem::path path_;
  std::string command_;
  std::string hash_;
  std::uint64_t seed_ = 0;
  std::string started_;
  std::string finished_;
  std::vector<std::string> artifacts_;
};

// One JSON object per line.
std::string metrics_json(const IterationMetrics& m);

enum class AblateAxis { Strategy, Tau, Window, Stride, Order, Nfe };
std::string to_string(AblateAxis a);
AblateAxis ablate_axis_from_string(const std::string& s);

// Output layout below config.out:
//   pretrain/          base.ckpt, loss.csv, config.ini, manifest.json
//   train-<variant>/   metrics.jsonl, trace.csv, ledger.csv, ckpt-<m>.ckpt,
//                      final.ckpt, config.ini, manifest.json
//   eval/              report.txt, sweep.csv, config.ini, manifest.json
//   ablate-<axis>/     <axis>.csv, config.ini, manifest.json
// Each command returns its output directory and throws on failure.
std::filesystem::path default_base_checkpoint(const RunConfig& config);
std::filesystem::path default_trained_checkpoint(const RunConfig& config);

std::filesystem::path cmd_pretrain(const RunConfig& config, std::ostream& log);
std::filesystem::path cmd_train(const RunConfig& config,
                                const std::optional<std::filesystem::path>& base,
                                std::ostream& log);
std::filesystem::path cmd_eval(const RunConfig& config,
                               const std::optional<std::filesystem::path>& base,
                               const std::optional<std::filesystem::path>& trained,
                               std::ostream& log);
std::filesystem::path cmd_ablate(const RunConfig& config, AblateAxis axis,
                                 const std::optional<std::filesystem::path>& base,
                                 std::ostream& log);

// Loads a checkpoint and rejects it unless its architecture matches the
// configuration.
VelocityModel load_matching_model(const RunConfig& config, const std::filesystem::path& path);

}  // namespace mixflow
