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

#include "mixflow/runner.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mixflow/checkpoint.hpp"
#include "mixflow/scheduler.hpp"
#include "mixflow/tasks.hpp"

namespace mixflow {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  return os;
}

fs::path prepare_dir(const RunConfig& config, const std::string& name) {
  const fs::path dir = fs::path(config.out) / name;
  fs::create_directories(dir);
  return dir;
}

void write_config_copy(const fs::path& dir, const RunConfig& config, Manifest& manifest) {
  const fs::path path = dir / "config.ini";
  open_out(path) << serialize_config(config);
  manifest.add(path);
}

// Mean reward of the trained model over a fixed evaluation batch.
SweepRow final_row(const VelocityModel& trained, const VelocityModel& base,
                   const RunConfig& config) {
  const auto specs = config.rewards();
  Rng rng = Rng(config.seed).derive(0xe7a1);
  const EvalReport report = eval_suite(trained, base, config.task_spec(), specs, config.grid(),
                                       {1.0}, config.eval_group_size, rng);
  return report.row(1.0);
}

struct TrainOutcome {
  VelocityModel model;
  double nfe_old_mean = 0.0;
  int nfe_new = 0;
  double seconds = 0.0;
  int iterations = 0;
};

template <class OnIteration>
TrainOutcome run_training(const RunConfig& config, VelocityModel base, int iterations,
                          OnIteration&& on_iteration) {
  Trainer trainer(std::move(base), config.train_setup(), config.seed);
  TrainOutcome out{trainer.model()};
  for (int m = 1; m <= iterations; ++m) {
    const IterationMetrics met = trainer.train_iteration();
    out.nfe_old_mean += met.nfe_old;
    out.nfe_new = met.nfe_new;
    out.seconds += met.seconds;
    on_iteration(trainer, met);
  }
  out.iterations = iterations;
  if (iterations > 0) out.nfe_old_mean /= iterations;
  out.model = trainer.model();
  return out;
}

}  // namespace

std::string code_version() { return MIXFLOW_VERSION; }

Manifest::Manifest(fs::path dir, std::string command, const RunConfig& config)
    : dir_(std::move(dir)),
      path_(dir_ / "manifest.json"),
      command_(std::move(command)),
      hash_(config_hash(config)),
      seed_(config.seed),
      started_(utc_now()) {
  write("incomplete");
}

void Manifest::add(const fs::path& artifact) { artifacts_.push_back(artifact.string()); }

void Manifest::complete() {
  for (const auto& a : artifacts_) {
    if (!fs::exists(a)) throw std::runtime_error("artifact missing: " + a);
  }
  finished_ = utc_now();
  write("complete");
}

void Manifest::fail(const std::string& error) { write("incomplete", error); }

void Manifest::write(const std::string& status, const std::string& error) const {
  json j;
  j["command"] = command_;
  j["status"] = status;
  j["config_hash"] = hash_;
  j["code_version"] = code_version();
  j["seed"] = seed_;
  j["started"] = started_;
  j["finished"] = finished_.empty() ? json(nullptr) : json(finished_);
  j["artifacts"] = artifacts_;
  if (!error.empty()) j["error"] = error;
  open_out(path_) << j.dump(2) << '\n';
}

std::string metrics_json(const IterationMetrics& m) {
  json j;
  j["iteration"] = m.iteration;
  j["objective"] = m.objective;
  j["reward_means"] = std::vector<double>(m.reward_means.begin(), m.reward_means.end());
  j["reward_mean"] = m.reward_mean;
  j["adv_mean"] = m.adv_mean;
  j["adv_std"] = m.adv_std;
  j["clipped_fraction"] = m.clipped_fraction;
  j["max_abs_logratio"] = m.max_abs_logratio;
  j["left"] = m.left;
  j["tau"] = m.tau;
  j["window"] = m.window;
  j["nfe_old"] = m.nfe_old;
  j["nfe_new"] = m.nfe_new;
  j["updates"] = m.updates;
  j["wall_seconds"] = m.seconds;
  return j.dump();
}

std::string to_string(AblateAxis a) {
  switch (a) {
    case AblateAxis::Strategy: return "strategy";
    case AblateAxis::Tau: return "tau";
    case AblateAxis::Window: return "w";
    case AblateAxis::Stride: return "stride";
    case AblateAxis::Order: return "order";
    case AblateAxis::Nfe: return "nfe";
  }
  return "?";
}

AblateAxis ablate_axis_from_string(const std::string& s) {
  for (auto a : {AblateAxis::Strategy, AblateAxis::Tau, AblateAxis::Window, AblateAxis::Stride,
                 AblateAxis::Order, AblateAxis::Nfe}) {
    if (to_string(a) == s) return a;
  }
  throw std::invalid_argument("unknown ablation axis '" + s +
                              "' (strategy, tau, w, stride, order, nfe)");
}

fs::path default_base_checkpoint(const RunConfig& config) {
  return fs::path(config.out) / "pretrain" / "base.ckpt";
}

fs::path default_trained_checkpoint(const RunConfig& config) {
  return fs::path(config.out) / ("train-" + to_string(config.variant)) / "final.ckpt";
}

VelocityModel load_matching_model(const RunConfig& config, const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  const Checkpoint ckpt = load_checkpoint(path);
  if (!(ckpt.arch == config.arch())) {
    throw std::runtime_error("checkpoint " + path.string() +
                             " does not match the configured model architecture or task");
  }
  return ckpt.model();
}

fs::path cmd_pretrain(const RunConfig& config, std::ostream& log) {
  const fs::path dir = prepare_dir(config, "pretrain");
  Manifest manifest(dir, "pretrain", config);
  try {
    write_config_copy(dir, config, manifest);
    Rng rng(config.seed);
    Rng init_rng = rng.derive(1);
    VelocityModel model = VelocityModel::trainable(config.arch(), init_rng);
    Rng data_rng = rng.derive(2);
    const PretrainResult res = pretrain(model, config.task_spec(), config.pretrain(), data_rng);

    const fs::path loss_path = dir / "loss.csv";
    {
      auto os = open_out(loss_path);
      os << "step,loss\n";
      for (std::size_t i = 0; i < res.losses.size(); ++i) os << i + 1 << ',' << num(res.losses[i]) << '\n';
    }
    manifest.add(loss_path);

    const fs::path ckpt_path = dir / "base.ckpt";
    save_checkpoint(ckpt_path, {model.arch(), model.params(), config.seed});
    manifest.add(ckpt_path);
    manifest.complete();
    log << "pretrain: " << res.losses.size() << " steps, final loss "
        << (res.losses.empty() ? 0.0 : res.losses.back()) << ", wrote " << ckpt_path.string()
        << '\n';
  } catch (const std::exception& e) {
    manifest.fail(e.what());
    throw;
  }
  return dir;
}

fs::path cmd_train(const RunConfig& config, const std::optional<fs::path>& base,
                   std::ostream& log) {
  const fs::path dir = prepare_dir(config, "train-" + to_string(config.variant));
  Manifest manifest(dir, "train", config);
  try {
    write_config_copy(dir, config, manifest);
    VelocityModel model = load_matching_model(config, base.value_or(default_base_checkpoint(config)));

    const fs::path metrics_path = dir / "metrics.jsonl";
    const fs::path trace_path = dir / "trace.csv";
    const fs::path ledger_path = dir / "ledger.csv";
    auto metrics = open_out(metrics_path);
    std::vector<TraceRow> trace;
    std::vector<fs::path> checkpoints;

    const TrainOutcome out =
        run_training(config, std::move(model), config.iterations,
                     [&](const Trainer& trainer, const IterationMetrics& met) {
                       metrics << metrics_json(met) << '\n';
                       trace.push_back({met.iteration, trainer.window_state().strategy, met.left,
                                        met.tau, met.window, met.nfe_old});
                       if (config.checkpoint_every > 0 &&
                           met.iteration % config.checkpoint_every == 0) {
                         const fs::path p =
                             dir / ("ckpt-" + std::to_string(met.iteration) + ".ckpt");
                         save_checkpoint(p, {trainer.model().arch(), trainer.model().params(),
                                             config.seed});
                         checkpoints.push_back(p);
                       }
                       if (met.iteration % 25 == 0 || met.iteration == config.iterations) {
                         log << "train[" << to_string(config.variant) << "] m=" << met.iteration
                             << " reward=" << met.reward_mean << " l=" << met.left << '\n';
                       }
                     });
    metrics.close();
    manifest.add(metrics_path);
    {
      auto os = open_out(trace_path);
      write_trace_csv(os, trace);
    }
    manifest.add(trace_path);
    {
      auto os = open_out(ledger_path);
      os << "iteration,nfe_old,nfe_new,seconds\n";
      std::ifstream in(metrics_path);
      std::string line;
      while (std::getline(in, line)) {
        const json j = json::parse(line);
        os << j["iteration"].get<int>() << ',' << j["nfe_old"].get<int>() << ','
           << j["nfe_new"].get<int>() << ',' << num(j["wall_seconds"].get<double>()) << '\n';
      }
    }
    manifest.add(ledger_path);
    for (const auto& p : checkpoints) manifest.add(p);
    const fs::path final_path = dir / "final.ckpt";
    save_checkpoint(final_path, {out.model.arch(), out.model.params(), config.seed});
    manifest.add(final_path);
    manifest.complete();
    log << "train: " << out.iterations << " iterations, mean NFE_old " << out.nfe_old_mean
        << ", NFE_new " << out.nfe_new << '\n';
  } catch (const std::exception& e) {
    manifest.fail(e.what());
    throw;
  }
  return dir;
}

fs::path cmd_eval(const RunConfig& config, const std::optional<fs::path>& base,
                  const std::optional<fs::path>& trained, std::ostream& log) {
  const fs::path dir = prepare_dir(config, "eval");
  Manifest manifest(dir, "eval", config);
  try {
    write_config_copy(dir, config, manifest);
    const VelocityModel base_model =
        load_matching_model(config, base.value_or(default_base_checkpoint(config)));
    const VelocityModel trained_model =
        load_matching_model(config, trained.value_or(default_trained_checkpoint(config)));
    const auto specs = config.rewards();
    Rng rng = Rng(config.seed).derive(0xe7a1);
    EvalReport report = eval_suite(trained_model, base_model, config.task_spec(), specs,
                                   config.grid(), config.p_mix, config.eval_group_size, rng);
    report.config_hash = config_hash(config);

    const fs::path report_path = dir / "report.txt";
    const fs::path sweep_path = dir / "sweep.csv";
    {
      auto os = open_out(report_path);
      write_report(os, report);
    }
    {
      auto os = open_out(sweep_path);
      write_sweep_csv(os, report);
    }
    manifest.add(report_path);
    manifest.add(sweep_path);
    manifest.complete();
    log << "eval: " << report.rows.size() << " sweep rows, trained reward "
        << report.row(1.0).reward_mean << ", base reward " << report.row(0.0).reward_mean
        << '\n';
  } catch (const std::exception& e) {
    manifest.fail(e.what());
    throw;
  }
  return dir;
}

namespace {

struct AblationSetting {
  std::string label;
  RunConfig config;
};

std::vector<AblationSetting> ablation_matrix(const RunConfig& base, AblateAxis axis) {
  std::vector<AblationSetting> out;
  auto add = [&](std::string label, auto&& edit) {
    RunConfig c = base;
    edit(c);
    c.validate();
    out.push_back({std::move(label), std::move(c)});
  };
  switch (axis) {
    case AblateAxis::Strategy:
      add("frozen", [](RunConfig& c) { c.strategy = Strategy::Frozen; });
      add("random", [](RunConfig& c) {
        c.strategy = Strategy::Random;
        c.schedule = IntervalSchedule::Constant;
      });
      add("progressive-linear", [](RunConfig& c) {
        c.strategy = Strategy::Progressive;
        c.schedule = IntervalSchedule::LinearDecay;
      });
      add("progressive-exp", [](RunConfig& c) {
        c.strategy = Strategy::Progressive;
        c.schedule = IntervalSchedule::ExpDecay;
      });
      add("progressive-constant", [](RunConfig& c) {
        c.strategy = Strategy::Progressive;
        c.schedule = IntervalSchedule::Constant;
      });
      break;
    case AblateAxis::Tau:
      for (int v : base.ablate_tau) {
        add(std::to_string(v), [v](RunConfig& c) { c.tau = v; });
      }
      break;
    case AblateAxis::Window:
      for (int v : base.ablate_window) {
        add(std::to_string(v), [v](RunConfig& c) {
          c.window = v;
          c.flash_post_steps = -1;
        });
      }
      break;
    case AblateAxis::Stride:
      for (int v : base.ablate_stride) {
        add(std::to_string(v), [v](RunConfig& c) { c.stride = v; });
      }
      break;
    case AblateAxis::Order:
      for (StepKind k : {StepKind::OdeDpm1, StepKind::OdeDpm2Midpoint, StepKind::OdeDpm2Heun,
                         StepKind::OdeDpm3}) {
        add(to_string(k), [k](RunConfig& c) {
          c.variant = TrainVariant::Flash;
          if (c.strategy == Strategy::Random) c.strategy = Strategy::Progressive;
          c.solver = k;
        });
      }
      break;
    case AblateAxis::Nfe:
      add("dance-baseline", [](RunConfig& c) { c.variant = TrainVariant::DanceBaseline; });
      for (double r : base.ablate_flash_rates) {
        std::ostringstream label;
        label << "flash-" << r;
        add(label.str(), [r](RunConfig& c) {
          c.variant = TrainVariant::Flash;
          if (c.strategy == Strategy::Random) c.strategy = Strategy::Progressive;
          c.flash_rate = r;
          c.flash_post_steps = -1;
        });
      }
      for (int p : base.ablate_flash_star_post) {
        add("flash-star-" + std::to_string(p), [p](RunConfig& c) {
          c.variant = TrainVariant::FlashStar;
          c.flash_post_steps = p;
        });
      }
      break;
  }
  return out;
}

}  // namespace

fs::path cmd_ablate(const RunConfig& config, AblateAxis axis, const std::optional<fs::path>& base,
                    std::ostream& log) {
  const std::string name = to_string(axis);
  const fs::path dir = prepare_dir(config, "ablate-" + name);
  Manifest manifest(dir, "ablate", config);
  try {
    write_config_copy(dir, config, manifest);
    const VelocityModel base_model =
        load_matching_model(config, base.value_or(default_base_checkpoint(config)));
    const int budget =
        std::max(1, static_cast<int>(std::lround(config.iterations * config.ablate_fraction)));
    const auto settings = ablation_matrix(config, axis);

    const fs::path csv_path = dir / (name + ".csv");
    auto os = open_out(csv_path);
    const std::size_t k = config.temperatures.size();
    os << "axis,setting,variant,strategy,schedule,tau,w,stride,solver,iterations,nfe_old,nfe_new,"
          "seconds_per_iteration,reward_mean";
    for (std::size_t j = 0; j < k; ++j) os << ",reward_" << j;
    os << '\n';
    for (const auto& s : settings) {
      const RunConfig& c = s.config;
      const TrainOutcome out =
          run_training(c, base_model, budget, [](const Trainer&, const IterationMetrics&) {});
      const SweepRow row = final_row(out.model, base_model, c);
      os << name << ',' << s.label << ',' << to_string(c.variant) << ','
         << to_string(c.window_state().strategy) << ',' << to_string(c.schedule) << ',' << c.tau
         << ',' << c.window << ',' << c.stride << ','
         << (c.variant == TrainVariant::Flash || c.variant == TrainVariant::FlashStar
                 ? to_string(c.solver)
                 : std::string("-"))
         << ',' << out.iterations << ',' << num(out.nfe_old_mean) << ',' << out.nfe_new << ','
         << num(out.seconds / out.iterations) << ',' << num(row.reward_mean);
      for (Eigen::Index j = 0; j < row.reward_means.size(); ++j) {
        os << ',' << num(row.reward_means[j]);
      }
      os << '\n';
      log << "ablate[" << name << "] " << s.label << ": reward " << row.reward_mean
          << ", NFE_old " << out.nfe_old_mean << '\n';
    }
    os.close();
    manifest.add(csv_path);
    manifest.complete();
  } catch (const std::exception& e) {
    manifest.fail(e.what());
    throw;
  }
  return dir;
}

}  // namespace mixflow
