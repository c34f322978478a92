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

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "mixflow/config.hpp"
#include "mixflow/runner.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
  std::optional<std::string> checkpoint;
  std::optional<std::string> trained;
  std::string axis;
};

// Precedence: command-line flag, then environment, then config file.
mixflow::RunConfig resolve(const Options& opt) {
  mixflow::RunConfig config = mixflow::load_config(opt.config);
  if (const char* env = std::getenv("MIXFLOW_SEED")) {
    try {
      std::size_t used = 0;
      config.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw mixflow::ConfigError("MIXFLOW_SEED", "not an unsigned integer");
    }
  }
  if (const char* env = std::getenv("MIXFLOW_OUT")) config.out = env;
  if (opt.seed) config.seed = *opt.seed;
  if (opt.out) config.out = *opt.out;
  if (opt.variant) {
    try {
      config.variant = mixflow::variant_from_string(*opt.variant);
    } catch (const std::invalid_argument& e) {
      throw mixflow::ConfigError("--variant", e.what());
    }
  }
  config.validate();
  return config;
}

std::optional<std::filesystem::path> as_path(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  return std::filesystem::path(*s);
}

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("-c,--config", opt.config, "INI configuration file")->required();
  cmd->add_option("--seed", opt.seed, "override run.seed");
  cmd->add_option("--out", opt.out, "override run.out");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixflow: mixed ODE/SDE GRPO on toy flow-matching models"};
  app.set_version_flag("--version", mixflow::code_version());
  app.require_subcommand(1);
  Options opt;

  auto* pretrain = app.add_subcommand("pretrain", "flow-matching pretraining of the base model");
  add_common(pretrain, opt);

  auto* train = app.add_subcommand("train", "GRPO fine-tuning from a pretrained checkpoint");
  add_common(train, opt);
  train->add_option("--variant", opt.variant, "mix, flash, flash-star or dance-baseline");
  train->add_option("--checkpoint", opt.checkpoint, "base checkpoint");

  auto* eval = app.add_subcommand("eval", "reward report and hybrid-inference sweep");
  add_common(eval, opt);
  eval->add_option("--variant", opt.variant, "variant whose final checkpoint is evaluated");
  eval->add_option("--checkpoint", opt.checkpoint, "base checkpoint");
  eval->add_option("--trained", opt.trained, "trained checkpoint");

  auto* ablate = app.add_subcommand("ablate", "reduced-budget comparison along one axis");
  add_common(ablate, opt);
  ablate->add_option("--axis", opt.axis, "strategy, tau, w, stride, order or nfe")->required();
  ablate->add_option("--checkpoint", opt.checkpoint, "base checkpoint");

  auto* show = app.add_subcommand("config", "print the resolved configuration and its hash");
  add_common(show, opt);

  CLI11_PARSE(app, argc, argv);

  try {
    const mixflow::RunConfig config = resolve(opt);
    if (*pretrain) {
      mixflow::cmd_pretrain(config, std::cerr);
    } else if (*train) {
      mixflow::cmd_train(config, as_path(opt.checkpoint), std::cerr);
    } else if (*eval) {
      mixflow::cmd_eval(config, as_path(opt.checkpoint), as_path(opt.trained), std::cerr);
    } else if (*ablate) {
      mixflow::AblateAxis axis;
      try {
        axis = mixflow::ablate_axis_from_string(opt.axis);
      } catch (const std::invalid_argument& e) {
        throw mixflow::ConfigError("--axis", e.what());
      }
      mixflow::cmd_ablate(config, axis, as_path(opt.checkpoint), std::cerr);
    } else if (*show) {
      std::cout << "# hash " << mixflow::config_hash(config) << '\n'
                << mixflow::serialize_config(config);
    }
  } catch (const mixflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
