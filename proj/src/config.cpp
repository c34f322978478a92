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

#include "mixflow/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace mixflow {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& field, const std::string& text) {
  const std::string s = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(field, "cannot parse '" + text + "' as a number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ConfigError(field, "value must be finite");
  }
  return value;
}

template <class T>
std::vector<T> parse_list(const std::string& field, const std::string& text) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(field, item));
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(int v) { return std::to_string(v); }

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt(v[i]);
  }
  return out;
}

bool parse_bool(const std::string& field, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(field, "expected true or false, got '" + text + "'");
}

template <class E>
E parse_enum(const std::string& field, const std::string& text, E (*from)(const std::string&)) {
  try {
    return from(trim(text));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  }
}

struct Field {
  std::string section;
  std::string key;
  bool required = false;
  std::function<void(RunConfig&, const std::string& field, const std::string& text)> set;
  std::function<std::string(const RunConfig&)> get;

  std::string name() const { return section + "." + key; }
};

template <class T>
Field num(const char* section, const char* key, T RunConfig::*member, bool required = false) {
  return {section, key, required,
          [member](RunConfig& c, const std::string& f, const std::string& t) {
            c.*member = parse_number<T>(f, t);
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_same_v<T, std::uint64_t>) {
              return std::to_string(c.*member);
            } else {
              return fmt(c.*member);
            }
          }};
}

template <class T>
Field list(const char* section, const char* key, std::vector<T> RunConfig::*member) {
  return {section, key, false,
          [member](RunConfig& c, const std::string& f, const std::string& t) {
            c.*member = parse_list<T>(f, t);
          },
          [member](const RunConfig& c) { return fmt_list(c.*member); }};
}

template <class E>
Field enumeration(const char* section, const char* key, E RunConfig::*member,
                  E (*from)(const std::string&), bool required = false) {
  return {section, key, required,
          [member, from](RunConfig& c, const std::string& f, const std::string& t) {
            c.*member = parse_enum(f, t, from);
          },
          [member](const RunConfig& c) { return to_string(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(num("run", "seed", &RunConfig::seed, true));
    f.push_back({"run", "out", false,
                 [](RunConfig& c, const std::string& name, const std::string& t) {
                   c.out = trim(t);
                   if (c.out.empty()) throw ConfigError(name, "must not be empty");
                 },
                 [](const RunConfig& c) { return c.out; }});

    f.push_back(enumeration("task", "kind", &RunConfig::task, &task_kind_from_string, true));
    f.push_back(num("task", "separation", &RunConfig::separation));
    f.push_back(num("task", "spread", &RunConfig::spread));
    f.push_back(list("task", "mean", &RunConfig::gaussian_mean));
    f.push_back(list("task", "cov_diag", &RunConfig::gaussian_cov_diag));
    f.push_back(num("task", "conditions", &RunConfig::conditions));
    f.push_back(num("task", "board_cells", &RunConfig::board_cells));
    f.push_back(num("task", "board_extent", &RunConfig::board_extent));

    f.push_back(list("reward", "temperatures", &RunConfig::temperatures));
    f.push_back(list("reward", "weights", &RunConfig::reward_weights));
    f.push_back(num("reward", "target_component", &RunConfig::target_component));

    f.push_back(num("model", "embed_dim", &RunConfig::embed_dim));
    f.push_back(list("model", "hidden", &RunConfig::hidden));
    f.push_back(enumeration("model", "activation", &RunConfig::activation,
                            &activation_from_string));

    f.push_back(num("grid", "steps", &RunConfig::steps, true));
    f.push_back(num("grid", "shift", &RunConfig::shift));
    f.push_back(num("grid", "eta", &RunConfig::eta));
    f.push_back(num("grid", "t_min", &RunConfig::t_min));

    f.push_back(enumeration("scheduler", "strategy", &RunConfig::strategy,
                            &strategy_from_string));
    f.push_back(num("scheduler", "window", &RunConfig::window));
    f.push_back(num("scheduler", "stride", &RunConfig::stride));
    f.push_back(num("scheduler", "tau", &RunConfig::tau));
    f.push_back(enumeration("scheduler", "schedule", &RunConfig::schedule,
                            &schedule_from_string));
    f.push_back(num("scheduler", "decay", &RunConfig::decay));
    f.push_back(num("scheduler", "threshold", &RunConfig::threshold));
    f.push_back({"scheduler", "random_every_tau", false,
                 [](RunConfig& c, const std::string& name, const std::string& t) {
                   c.random_every_tau = parse_bool(name, t);
                 },
                 [](const RunConfig& c) { return std::string(c.random_every_tau ? "true" : "false"); }});

    f.push_back(num("grpo", "group_size", &RunConfig::group_size));
    f.push_back(num("grpo", "clip_eps", &RunConfig::clip_eps));
    f.push_back(num("grpo", "adv_clip", &RunConfig::adv_clip));
    f.push_back(num("grpo", "accumulation", &RunConfig::accumulation));
    f.push_back(num("grpo", "prompts", &RunConfig::prompts));
    f.push_back(num("grpo", "iterations", &RunConfig::iterations));
    f.push_back(num("grpo", "lr", &RunConfig::lr));
    f.push_back(num("grpo", "weight_decay", &RunConfig::weight_decay));
    f.push_back(enumeration("grpo", "optimizer", &RunConfig::optimizer, &optimizer_from_string));
    f.push_back(enumeration("grpo", "update", &RunConfig::update, &update_mode_from_string));
    f.push_back(num("grpo", "checkpoint_every", &RunConfig::checkpoint_every));

    f.push_back(enumeration("flash", "variant", &RunConfig::variant, &variant_from_string));
    f.push_back(num("flash", "rate", &RunConfig::flash_rate));
    f.push_back(num("flash", "post_steps", &RunConfig::flash_post_steps));
    f.push_back(enumeration("flash", "solver", &RunConfig::solver, &step_kind_from_string));

    f.push_back(num("pretrain", "steps", &RunConfig::pretrain_steps));
    f.push_back(num("pretrain", "batch", &RunConfig::pretrain_batch));
    f.push_back(num("pretrain", "lr", &RunConfig::pretrain_lr));

    f.push_back(list("eval", "p_mix", &RunConfig::p_mix));
    f.push_back(num("eval", "group_size", &RunConfig::eval_group_size));

    f.push_back(num("ablate", "fraction", &RunConfig::ablate_fraction));
    f.push_back(list("ablate", "tau", &RunConfig::ablate_tau));
    f.push_back(list("ablate", "window", &RunConfig::ablate_window));
    f.push_back(list("ablate", "stride", &RunConfig::ablate_stride));
    f.push_back(list("ablate", "flash_rates", &RunConfig::ablate_flash_rates));
    f.push_back(list("ablate", "flash_star_post", &RunConfig::ablate_flash_star_post));
    return f;
  }();
  return table;
}

void check(bool ok, const char* field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

template <class F>
void wrap(const char* field, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  check(!out.empty(), "run.out", "must not be empty");

  check(separation > 0.0, "task.separation", "must be > 0");
  check(spread > 0.0, "task.spread", "must be > 0");
  if (task == TaskKind::AffineGaussian) {
    check(!gaussian_mean.empty(), "task.mean", "must not be empty");
    check(gaussian_cov_diag.size() == gaussian_mean.size(), "task.cov_diag",
          "must have one entry per task.mean entry");
    for (double v : gaussian_cov_diag) check(v > 0.0, "task.cov_diag", "entries must be > 0");
    check(conditions >= 1, "task.conditions", "must be >= 1");
  } else {
    check(conditions == 2, "task.conditions", "bimodal and checkerboard tasks have 2 conditions");
  }
  if (task == TaskKind::Checkerboard) {
    check(board_cells >= 2, "task.board_cells", "must be >= 2");
    check(board_extent > 0.0, "task.board_extent", "must be > 0");
  }

  check(!temperatures.empty(), "reward.temperatures", "need at least one reward");
  for (double v : temperatures) check(v > 0.0, "reward.temperatures", "entries must be > 0");
  if (!reward_weights.empty()) {
    check(reward_weights.size() == temperatures.size(), "reward.weights",
          "must have one entry per temperature");
    double total = 0.0;
    for (double v : reward_weights) {
      check(v >= 0.0, "reward.weights", "entries must be >= 0");
      total += v;
    }
    check(total > 0.0, "reward.weights", "must not all be zero");
  }
  const int components = task == TaskKind::BimodalMixture ? 2 : 1;
  check(target_component >= 0 && target_component < components, "reward.target_component",
        "out of range for the task");

  check(embed_dim >= 0, "model.embed_dim", "must be >= 0");
  for (int h : hidden) check(h >= 1, "model.hidden", "layer widths must be >= 1");

  check(steps >= 2, "grid.steps", "must be >= 2");
  check(shift >= 1.0, "grid.shift", "must be >= 1");
  check(eta >= 0.0, "grid.eta", "must be >= 0");
  check(t_min > 0.0 && t_min < 1.0, "grid.t_min", "must be in (0, 1)");
  wrap("grid.steps", [&] { (void)grid(); });

  check(window >= 1 && window <= steps, "scheduler.window", "must be in [1, grid.steps]");
  check(stride >= 1, "scheduler.stride", "must be >= 1");
  check(tau >= 1, "scheduler.tau", "must be >= 1");
  check(decay >= 0.0, "scheduler.decay", "must be >= 0");
  check(threshold >= 0, "scheduler.threshold", "must be >= 0");

  check(group_size >= 2, "grpo.group_size", "must be >= 2");
  check(accumulation >= 1 && group_size % accumulation == 0, "grpo.accumulation",
        "must divide grpo.group_size");
  check(clip_eps > 0.0, "grpo.clip_eps", "must be > 0");
  check(adv_clip > 0.0, "grpo.adv_clip", "must be > 0");
  check(prompts >= 1, "grpo.prompts", "must be >= 1");
  check(iterations >= 0, "grpo.iterations", "must be >= 0");
  check(lr > 0.0, "grpo.lr", "must be > 0");
  check(weight_decay >= 0.0, "grpo.weight_decay", "must be >= 0");
  check(checkpoint_every >= 0, "grpo.checkpoint_every", "must be >= 0");

  check(flash_rate > 0.0 && flash_rate <= 1.0, "flash.rate", "must be in (0, 1]");
  check(flash_post_steps >= -1 && flash_post_steps <= steps - window, "flash.post_steps",
        "must be -1 or in [0, grid.steps - scheduler.window]");
  check(flash_post_steps != 0, "flash.post_steps", "must be -1 or >= 1");
  check(is_dpm(solver), "flash.solver", "must be a dpm solver kind");

  check(pretrain_steps >= 0, "pretrain.steps", "must be >= 0");
  check(pretrain_batch >= 1, "pretrain.batch", "must be >= 1");
  check(pretrain_lr > 0.0, "pretrain.lr", "must be > 0");

  for (double p : p_mix) check(p >= 0.0 && p <= 1.0, "eval.p_mix", "entries must be in [0, 1]");
  check(eval_group_size >= 2, "eval.group_size", "must be >= 2");

  check(ablate_fraction > 0.0 && ablate_fraction <= 1.0, "ablate.fraction", "must be in (0, 1]");
  for (int v : ablate_tau) check(v >= 1, "ablate.tau", "entries must be >= 1");
  for (int v : ablate_window) {
    check(v >= 1 && v <= steps, "ablate.window", "entries must be in [1, grid.steps]");
  }
  for (int v : ablate_stride) check(v >= 1, "ablate.stride", "entries must be >= 1");
  for (double v : ablate_flash_rates) {
    check(v > 0.0 && v <= 1.0, "ablate.flash_rates", "entries must be in (0, 1]");
  }
  for (int v : ablate_flash_star_post) {
    check(v >= 1 && v <= steps - window, "ablate.flash_star_post",
          "entries must be in [1, grid.steps - scheduler.window]");
  }

  wrap("task.kind", [&] { (void)task_spec(); });
  wrap("flash.variant", [&] { train_setup().validate(); });
}

TaskSpec RunConfig::task_spec() const {
  switch (task) {
    case TaskKind::AffineGaussian: {
      const auto n = static_cast<Eigen::Index>(gaussian_mean.size());
      AffineGaussianTask g;
      g.mean = Eigen::Map<const Vec>(gaussian_mean.data(), n);
      g.cov = Eigen::Map<const Vec>(gaussian_cov_diag.data(), n).asDiagonal();
      return affine_gaussian_task(g, conditions);
    }
    case TaskKind::BimodalMixture:
      return bimodal_task(separation, spread);
    case TaskKind::Checkerboard:
      return checkerboard_task(board_cells, board_extent);
  }
  throw std::logic_error("unreachable task kind");
}

std::vector<RewardSpec> RunConfig::rewards() const {
  auto specs = mode_rewards(task_spec(), temperatures, target_component);
  for (std::size_t k = 0; k < reward_weights.size(); ++k) specs[k].weight = reward_weights[k];
  return specs;
}

MlpArch RunConfig::arch() const {
  MlpArch a;
  a.dim = task == TaskKind::AffineGaussian ? static_cast<int>(gaussian_mean.size()) : 2;
  a.num_conditions = conditions;
  a.embed_dim = embed_dim;
  a.hidden = hidden;
  a.activation = activation;
  return a;
}

TimeGrid RunConfig::grid() const { return make_time_grid(steps, shift, eta, t_min); }

WindowState RunConfig::window_state() const {
  ScheduleParams sp;
  sp.kind = schedule;
  sp.tau0 = tau;
  sp.decay = decay;
  sp.threshold = threshold;
  // Flash* keeps the window at the first step.
  const Strategy s = variant == TrainVariant::FlashStar ? Strategy::Frozen : strategy;
  WindowState st = make_window_state(steps, window, stride, s, sp);
  st.random_every_tau = random_every_tau;
  return st;
}

GrpoConfig RunConfig::grpo() const {
  GrpoConfig g;
  g.group_size = group_size;
  g.clip_eps = clip_eps;
  g.adv_clip = adv_clip;
  g.accumulation = accumulation;
  g.prompts_per_iteration = prompts;
  g.iterations = iterations;
  g.reward_weights = reward_weights;
  g.update = update;
  g.optimizer.kind = optimizer;
  g.optimizer.lr = lr;
  g.optimizer.weight_decay = weight_decay;
  return g;
}

PretrainConfig RunConfig::pretrain() const {
  PretrainConfig p;
  p.steps = pretrain_steps;
  p.batch = pretrain_batch;
  p.t_min = t_min;
  p.optimizer.lr = pretrain_lr;
  return p;
}

double RunConfig::resolved_flash_rate() const {
  return flash_post_steps > 0 ? rate_for_post_steps(steps, window, flash_post_steps) : flash_rate;
}

TrainSetup RunConfig::train_setup() const {
  TrainSetup s;
  s.grid = grid();
  s.window = window_state();
  s.grpo = grpo();
  s.variant = variant;
  s.flash_rate = resolved_flash_rate();
  s.flash_solver = solver;
  s.num_conditions = conditions;
  const auto specs = rewards();
  s.num_rewards = static_cast<int>(specs.size());
  s.reward = [specs](const Vec& x, Condition c) { return reward_vector(specs, x, c); };
  return s;
}

RunConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()), e.message());
  }
  std::set<std::string> known_sections;
  for (const auto& f : fields()) known_sections.insert(f.section);

  RunConfig config;
  std::set<std::string> seen;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(section, "keys must appear inside a [section]");
    }
    if (!known_sections.count(section)) throw ConfigError(section, "unknown section");
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      const Field* match = nullptr;
      for (const auto& f : fields()) {
        if (f.section == section && f.key == key) match = &f;
      }
      if (!match) throw ConfigError(name, "unknown key");
      match->set(config, name, value.data());
      seen.insert(name);
    }
  }
  for (const auto& f : fields()) {
    if (f.required && !seen.count(f.name())) throw ConfigError(f.name(), "missing required field");
  }
  config.validate();
  return config;
}

RunConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  return parse_config(in);
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(config) + '\n';
  }
  return out;
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mixflow
