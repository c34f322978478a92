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

#include "mixflow/flowcore.hpp"

#include <cmath>
#include <sstream>

namespace mixflow {
namespace {

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

double activate(Activation act, double a) {
  switch (act) {
    case Activation::SiLU:
      return a * sigmoid(a);
    case Activation::Tanh:
      return std::tanh(a);
  }
  return a;
}

double activate_grad(Activation act, double a) {
  switch (act) {
    case Activation::SiLU: {
      const double s = sigmoid(a);
      return s * (1.0 + a * (1.0 - s));
    }
    case Activation::Tanh: {
      const double th = std::tanh(a);
      return 1.0 - th * th;
    }
  }
  return 1.0;
}

}  // namespace

std::string to_string(Activation a) {
  return a == Activation::SiLU ? "silu" : "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "silu") return Activation::SiLU;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

std::size_t MlpArch::param_count() const { return ParamLayout::of(*this).total; }

void MlpArch::validate() const {
  if (dim < 1) throw std::invalid_argument("model.dim must be >= 1");
  if (num_conditions < 1) {
    throw std::invalid_argument("model.num_conditions must be >= 1");
  }
  if (embed_dim < 0) throw std::invalid_argument("model.embed_dim must be >= 0");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("model.hidden widths must be >= 1");
  }
}

ParamLayout ParamLayout::of(const MlpArch& arch) {
  ParamLayout layout;
  std::size_t off = 0;
  layout.embedding = off;
  off += static_cast<std::size_t>(arch.num_conditions) * arch.embed_dim;
  int in = arch.input_width();
  std::vector<int> widths = arch.hidden;
  widths.push_back(arch.dim);
  for (int out : widths) {
    LayerSlice s;
    s.in = in;
    s.out = out;
    s.weight = off;
    off += static_cast<std::size_t>(in) * out;
    s.bias = off;
    off += out;
    layout.layers.push_back(s);
    in = out;
  }
  layout.total = off;
  return layout;
}

AffineGaussianTask AffineGaussianTask::standard(int dim) {
  return {Vec::Zero(dim), Mat::Identity(dim, dim)};
}

void AffineGaussianTask::validate() const {
  if (mean.size() == 0 || cov.rows() != mean.size() ||
      cov.cols() != mean.size()) {
    throw std::invalid_argument("affine task: mean/cov dimension mismatch");
  }
  if (!cov.isApprox(cov.transpose(), 1e-12)) {
    throw std::invalid_argument("affine task: covariance not symmetric");
  }
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("affine task: covariance not positive-definite");
  }
}

Vec AffineGaussianTask::marginal_mean(double t) const { return (1.0 - t) * mean; }

Mat AffineGaussianTask::marginal_cov(double t) const {
  const auto d = mean.size();
  return (1.0 - t) * (1.0 - t) * cov + t * t * Mat::Identity(d, d);
}

VelocityModel VelocityModel::trainable(const MlpArch& arch, Rng& rng) {
  arch.validate();
  VelocityModel m;
  m.variant_ = Variant::TrainableNet;
  m.arch_ = arch;
  m.layout_ = ParamLayout::of(arch);
  m.params_ = Vec::Zero(static_cast<Eigen::Index>(m.layout_.total));
  const std::size_t emb_n =
      static_cast<std::size_t>(arch.num_conditions) * arch.embed_dim;
  for (std::size_t i = 0; i < emb_n; ++i) {
    m.params_[static_cast<Eigen::Index>(m.layout_.embedding + i)] = rng.normal();
  }
  for (std::size_t l = 0; l < m.layout_.layers.size(); ++l) {
    const LayerSlice& s = m.layout_.layers[l];
    const bool last = l + 1 == m.layout_.layers.size();
    const double scale = (last ? 0.1 : 1.0) / std::sqrt(static_cast<double>(s.in));
    for (int i = 0; i < s.in * s.out; ++i) {
      m.params_[static_cast<Eigen::Index>(s.weight) + i] = scale * rng.normal();
    }
  }
  return m;
}

VelocityModel VelocityModel::trainable(const MlpArch& arch, Vec params) {
  arch.validate();
  VelocityModel m;
  m.variant_ = Variant::TrainableNet;
  m.arch_ = arch;
  m.layout_ = ParamLayout::of(arch);
  if (static_cast<std::size_t>(params.size()) != m.layout_.total) {
    std::ostringstream os;
    os << "parameter count " << params.size() << " does not match architecture ("
       << m.layout_.total << ")";
    throw std::invalid_argument(os.str());
  }
  m.params_ = std::move(params);
  return m;
}

VelocityModel VelocityModel::oracle(AffineGaussianTask task) {
  task.validate();
  VelocityModel m;
  m.variant_ = Variant::AffineGaussianOracle;
  m.arch_.dim = static_cast<int>(task.mean.size());
  m.arch_.num_conditions = 1;
  m.arch_.embed_dim = 0;
  m.arch_.hidden.clear();
  m.task_ = std::move(task);
  return m;
}

int VelocityModel::dim() const { return arch_.dim; }

int VelocityModel::num_conditions() const {
  // The oracle ignores the condition.
  return variant_ == Variant::AffineGaussianOracle ? 0 : arch_.num_conditions;
}

void VelocityModel::check_inputs(const Vec& x, double t, Condition c) const {
  if (!(t > 0.0 && t <= 1.0)) {
    std::ostringstream os;
    os << "velocity: t=" << t << " outside (0, 1]";
    throw std::domain_error(os.str());
  }
  if (x.size() != dim()) throw std::invalid_argument("velocity: dimension mismatch");
  require_finite(x, "velocity input");
  if (is_trainable() && (c.label < 0 || c.label >= arch_.num_conditions)) {
    throw std::invalid_argument("velocity: condition label out of range");
  }
}

// E[eps - x0 | x_t = x] = -mean + (t I - (1-t) cov) S_t^{-1} (x - (1-t) mean).
Vec VelocityModel::oracle_velocity(const Vec& x, double t) const {
  const auto d = task_.mean.size();
  const Mat s = task_.marginal_cov(t);
  const Mat cross = t * Mat::Identity(d, d) - (1.0 - t) * task_.cov;
  const Vec centred = x - task_.marginal_mean(t);
  return -task_.mean + cross * s.llt().solve(centred);
}

Vec VelocityModel::velocity(const Vec& x, double t, Condition c) const {
  check_inputs(x, t, c);
  if (variant_ == Variant::AffineGaussianOracle) return oracle_velocity(x, t);
  Tape tape;
  return forward(x, t, c, tape);
}

Vec VelocityModel::forward(const Vec& x, double t, Condition c, Tape& tape) const {
  if (!is_trainable()) {
    throw std::logic_error("forward/backward require a trainable model");
  }
  check_inputs(x, t, c);
  tape.cond = c;
  tape.inputs.clear();
  tape.pre.clear();

  Vec z(arch_.input_width());
  z.head(arch_.dim) = x;
  z[arch_.dim] = t;
  if (arch_.embed_dim > 0) {
    z.tail(arch_.embed_dim) = params_.segment(
        static_cast<Eigen::Index>(layout_.embedding) +
            static_cast<Eigen::Index>(c.label) * arch_.embed_dim,
        arch_.embed_dim);
  }

  const std::size_t n = layout_.layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    const LayerSlice& s = layout_.layers[l];
    Eigen::Map<const Mat> w(params_.data() + s.weight, s.out, s.in);
    Eigen::Map<const Vec> b(params_.data() + s.bias, s.out);
    tape.inputs.push_back(z);
    Vec a = w * z + b;
    if (l + 1 == n) return a;
    tape.pre.push_back(a);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a[i] = activate(arch_.activation, a[i]);
    }
    z = std::move(a);
  }
  return z;
}

void VelocityModel::backward(const Tape& tape, const Vec& dv, ParamGrad& grad) const {
  if (grad.size() != params_.size()) grad = ParamGrad::Zero(params_.size());
  Vec delta = dv;
  for (std::size_t l = layout_.layers.size(); l-- > 0;) {
    const LayerSlice& s = layout_.layers[l];
    if (l + 1 < layout_.layers.size()) {
      const Vec& a = tape.pre[l];
      for (Eigen::Index i = 0; i < delta.size(); ++i) {
        delta[i] *= activate_grad(arch_.activation, a[i]);
      }
    }
    Eigen::Map<Mat> gw(grad.data() + s.weight, s.out, s.in);
    Eigen::Map<Vec> gb(grad.data() + s.bias, s.out);
    gw.noalias() += delta * tape.inputs[l].transpose();
    gb += delta;
    Eigen::Map<const Mat> w(params_.data() + s.weight, s.out, s.in);
    delta = w.transpose() * delta;
  }
  if (arch_.embed_dim > 0) {
    grad.segment(static_cast<Eigen::Index>(layout_.embedding) +
                     static_cast<Eigen::Index>(tape.cond.label) * arch_.embed_dim,
                 arch_.embed_dim) += delta.tail(arch_.embed_dim);
  }
}

Vec score_from_velocity(const Vec& x, double t, const Vec& v, double t_min) {
  if (t < t_min || t >= 1.0) {
    std::ostringstream os;
    os << "score_from_velocity: t=" << t << " outside [" << t_min << ", 1)";
    throw std::domain_error(os.str());
  }
  return -x / t - ((1.0 - t) / t) * v;
}

LossAndGrad fm_loss_and_grad(const VelocityModel& model,
                             std::span<const FmSample> items) {
  if (!model.is_trainable()) {
    throw std::invalid_argument("fm_loss_and_grad: oracle model is not trainable");
  }
  if (items.empty()) throw std::invalid_argument("fm_loss_and_grad: empty batch");
  LossAndGrad out;
  out.grad = ParamGrad::Zero(model.params().size());
  const double inv_n = 1.0 / static_cast<double>(items.size());
  Tape tape;
  for (const FmSample& it : items) {
    const Vec xt = (1.0 - it.t) * it.x0 + it.t * it.noise;
    const Vec v = model.forward(xt, it.t, it.cond, tape);
    const Vec r = v - (it.noise - it.x0);
    out.loss += r.squaredNorm() * inv_n;
    model.backward(tape, 2.0 * inv_n * r, out.grad);
  }
  return out;
}

double fm_loss(const VelocityModel& model, std::span<const FmSample> items) {
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(items.size());
  for (const FmSample& it : items) {
    const Vec xt = (1.0 - it.t) * it.x0 + it.t * it.noise;
    loss += (model.velocity(xt, it.t, it.cond) - (it.noise - it.x0)).squaredNorm() *
            inv_n;
  }
  return loss;
}

std::vector<FmSample> draw_fm_samples(std::span<const LabeledPoint> batch,
                                      Rng& rng, double t_min) {
  std::vector<FmSample> items;
  items.reserve(batch.size());
  for (const LabeledPoint& p : batch) {
    FmSample s;
    s.x0 = p.x;
    s.cond = p.cond;
    s.noise = rng.normal_vec(static_cast<int>(p.x.size()));
    s.t = rng.uniform(t_min, 1.0);
    items.push_back(std::move(s));
  }
  return items;
}

LossAndGrad fm_loss_and_grad(const VelocityModel& model,
                             std::span<const LabeledPoint> batch, Rng& rng,
                             double t_min) {
  const auto items = draw_fm_samples(batch, rng, t_min);
  return fm_loss_and_grad(model, std::span<const FmSample>(items));
}

ParamGrad finite_diff_grad(const std::function<double(const Vec&)>& f,
                           const Vec& theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  ParamGrad g(theta.size());
  Vec probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double up = f(probe);
    probe[i] = theta[i] - h;
    const double down = f(probe);
    probe[i] = theta[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const Vec& a, const Vec& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

}  // namespace mixflow
