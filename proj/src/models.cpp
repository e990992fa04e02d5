// Copyright 2026 The dynrollout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dynrollout/models.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

namespace dynrollout {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Dot product with four accumulators so the loop vectorizes without
// reassociation flags.
double fast_dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void check_width(std::span<const double> v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw ShapeError(std::string(what) + ": expected width " + std::to_string(n) + ", got " +
                     std::to_string(v.size()));
  }
}

Vector network_input(const NetworkModel& m, std::span<const double> s,
                     std::span<const double> a) {
  Vector in = m.normalizer.normalize_state(s);
  const Vector an = m.normalizer.normalize_action(a);
  in.insert(in.end(), an.begin(), an.end());
  return in;
}

struct NormalizedData {
  Matrix inputs;
  Matrix targets;
};

NormalizedData normalize_dataset(const Dataset& data, const Normalizer& norm,
                                 Formulation formulation) {
  const std::size_t n = data.size();
  const std::size_t ds = data.state_dim;
  const std::size_t da = data.action_dim;
  NormalizedData out{Matrix(n, ds + da), Matrix(n, ds)};
  for (std::size_t i = 0; i < n; ++i) {
    const Vector zs = norm.normalize_state(data.state(i));
    const Vector za = norm.normalize_action(data.action(i));
    auto row = out.inputs.row(i);
    std::copy(zs.begin(), zs.end(), row.begin());
    std::copy(za.begin(), za.end(), row.begin() + static_cast<std::ptrdiff_t>(ds));
    const Vector target = formulation == Formulation::kDelta
                              ? sub(data.next_state(i), data.state(i))
                              : Vector(data.next_state(i).begin(), data.next_state(i).end());
    const Vector zt = norm.normalize_target(target);
    std::copy(zt.begin(), zt.end(), out.targets.row(i).begin());
  }
  return out;
}

NetworkModel train_network(const Dataset& data, const TrainConfig& cfg, bool probabilistic) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("training needs a non-empty dataset");
  const std::size_t ds = data.state_dim;
  const std::size_t da = data.action_dim;

  NetworkModel model;
  model.probabilistic = probabilistic;
  model.formulation = cfg.formulation;
  model.normalizer = cfg.normalization_enabled ? fit_normalizer(data, cfg.formulation)
                                               : Normalizer::identity(ds, da);
  const NormalizedData nd = normalize_dataset(data, model.normalizer, cfg.formulation);

  std::vector<std::size_t> widths{ds + da};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(probabilistic ? 2 * ds : ds);
  Rng init_rng(derive_seed(cfg.seed, 0));
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  model.net = Mlp::initialized(widths, init_rng);

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  AdamState adam;
  std::vector<double> grad(model.net.num_params());
  Matrix batch_in;
  Matrix batch_target;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, n - start);
      if (batch_in.rows() != bs) {
        batch_in = Matrix(bs, nd.inputs.cols());
        batch_target = Matrix(bs, nd.targets.cols());
      }
      for (std::size_t b = 0; b < bs; ++b) {
        const std::size_t idx = order[start + b];
        std::ranges::copy(nd.inputs.row(idx), batch_in.row(b).begin());
        std::ranges::copy(nd.targets.row(idx), batch_target.row(b).begin());
      }
      const double loss = probabilistic
                              ? gaussian_nll_and_grad(model.net, batch_in, batch_target, grad)
                              : mse_loss_and_grad(model.net, batch_in, batch_target, grad);
      if (!std::isfinite(loss)) {
        throw NumericalError("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch + 1) + ", batch offset " +
                             std::to_string(start) + " (learning rate " +
                             format_double(cfg.learning_rate) + ")");
      }
      adam_step(model.net.params(), grad, adam, cfg.learning_rate);
      total += loss * static_cast<double>(bs);
    }
    model.epoch_losses.push_back(total / static_cast<double>(n));
  }
  return model;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

std::string to_string(Formulation f) { return f == Formulation::kDelta ? "delta" : "true_state"; }

Formulation parse_formulation(const std::string& s) {
  if (s == "delta") return Formulation::kDelta;
  if (s == "true_state" || s == "true") return Formulation::kTrueState;
  throw std::invalid_argument("unknown formulation '" + s + "'");
}

void Dataset::append(std::span<const double> s, std::span<const double> a,
                     std::span<const double> next) {
  if (states.empty()) {
    state_dim = s.size();
    action_dim = a.size();
  }
  check_width(s, state_dim, "dataset state");
  check_width(a, action_dim, "dataset action");
  check_width(next, state_dim, "dataset next state");
  states.insert(states.end(), s.begin(), s.end());
  actions.insert(actions.end(), a.begin(), a.end());
  next_states.insert(next_states.end(), next.begin(), next.end());
}

Dataset make_dataset(std::span<const Trajectory> trajectories) {
  Dataset d;
  for (const auto& traj : trajectories) {
    if (d.state_dim == 0 && !traj.states.empty()) {
      d.state_dim = traj.state_dim();
      d.action_dim = traj.actions.empty() ? 0 : traj.action_dim();
    }
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
      d.append(traj.states[t], traj.actions[t], traj.states[t + 1]);
    }
  }
  return d;
}

Normalizer Normalizer::identity(std::size_t state_dim, std::size_t action_dim) {
  return {Vector(state_dim, 0.0), Vector(state_dim, 1.0), Vector(state_dim, 0.0),
          Vector(state_dim, 1.0), Vector(action_dim, -1.0), Vector(action_dim, 1.0)};
}

Vector Normalizer::normalize_state(std::span<const double> s) const {
  check_width(s, state_mean.size(), "normalize state");
  Vector z(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) z[i] = (s[i] - state_mean[i]) / state_std[i];
  return z;
}

Vector Normalizer::denormalize_state(std::span<const double> z) const {
  check_width(z, state_mean.size(), "denormalize state");
  Vector s(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s[i] = z[i] * state_std[i] + state_mean[i];
  return s;
}

Vector Normalizer::normalize_target(std::span<const double> y) const {
  check_width(y, target_mean.size(), "normalize target");
  Vector z(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) z[i] = (y[i] - target_mean[i]) / target_std[i];
  return z;
}

Vector Normalizer::denormalize_target(std::span<const double> z) const {
  check_width(z, target_mean.size(), "denormalize target");
  Vector y(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) y[i] = z[i] * target_std[i] + target_mean[i];
  return y;
}

Vector Normalizer::normalize_action(std::span<const double> a) const {
  check_width(a, action_lo.size(), "normalize action");
  Vector z(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double mid = 0.5 * (action_hi[i] + action_lo[i]);
    const double half = std::max(0.5 * (action_hi[i] - action_lo[i]), kStdFloor);
    z[i] = (a[i] - mid) / half;
  }
  return z;
}

Vector Normalizer::denormalize_action(std::span<const double> z) const {
  check_width(z, action_lo.size(), "denormalize action");
  Vector a(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double mid = 0.5 * (action_hi[i] + action_lo[i]);
    const double half = std::max(0.5 * (action_hi[i] - action_lo[i]), kStdFloor);
    a[i] = z[i] * half + mid;
  }
  return a;
}

Normalizer fit_normalizer(const Dataset& data, Formulation formulation) {
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("normalizer needs at least 2 transitions");
  const std::size_t ds = data.state_dim;
  const std::size_t da = data.action_dim;
  auto moments = [n](auto&& get, std::size_t dim, Vector& mean, Vector& stddev) {
    mean.assign(dim, 0.0);
    stddev.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const Vector v = get(i);
      for (std::size_t d = 0; d < dim; ++d) mean[d] += v[d];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vector v = get(i);
      for (std::size_t d = 0; d < dim; ++d) stddev[d] += (v[d] - mean[d]) * (v[d] - mean[d]);
    }
    for (double& s : stddev) s = std::max(std::sqrt(s / static_cast<double>(n)), kStdFloor);
  };
  Normalizer norm;
  moments([&](std::size_t i) { return Vector(data.state(i).begin(), data.state(i).end()); }, ds,
          norm.state_mean, norm.state_std);
  moments(
      [&](std::size_t i) {
        return formulation == Formulation::kDelta
                   ? sub(data.next_state(i), data.state(i))
                   : Vector(data.next_state(i).begin(), data.next_state(i).end());
      },
      ds, norm.target_mean, norm.target_std);
  norm.action_lo.assign(da, 0.0);
  norm.action_hi.assign(da, 0.0);
  for (std::size_t d = 0; d < da; ++d) {
    double lo = data.action(0)[d];
    double hi = lo;
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, data.action(i)[d]);
      hi = std::max(hi, data.action(i)[d]);
    }
    norm.action_lo[d] = lo;
    norm.action_hi[d] = hi;
  }
  return norm;
}

Mlp::Mlp(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw std::invalid_argument("mlp needs input and output widths");
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    if (widths_[l] == 0 || widths_[l + 1] == 0) throw std::invalid_argument("zero mlp width");
    offsets_.push_back(offset);
    offset += widths_[l] * widths_[l + 1] + widths_[l + 1];
  }
  params_.assign(offset, 0.0);
}

Mlp Mlp::initialized(std::vector<std::size_t> widths, Rng& rng) {
  Mlp net(std::move(widths));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double fan_in = static_cast<double>(net.widths_[l]);
    const double fan_out = static_cast<double>(net.widths_[l + 1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : net.weights(l)) w = rng.uniform(-limit, limit);
  }
  return net;
}

std::span<double> Mlp::weights(std::size_t l) {
  return {params_.data() + weight_offset(l), widths_[l] * widths_[l + 1]};
}
std::span<const double> Mlp::weights(std::size_t l) const {
  return {params_.data() + weight_offset(l), widths_[l] * widths_[l + 1]};
}
std::span<double> Mlp::biases(std::size_t l) {
  return {params_.data() + weight_offset(l) + widths_[l] * widths_[l + 1], widths_[l + 1]};
}
std::span<const double> Mlp::biases(std::size_t l) const {
  return {params_.data() + weight_offset(l) + widths_[l] * widths_[l + 1], widths_[l + 1]};
}

Vector Mlp::forward(std::span<const double> input) const {
  check_width(input, input_dim(), "mlp input");
  Matrix in(1, input.size(), Vector(input.begin(), input.end()));
  return forward_batch(in).data();
}

Matrix Mlp::forward_batch(const Matrix& input, Cache* cache) const {
  if (input.cols() != input_dim()) throw ShapeError("mlp batch input width mismatch");
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(input);
  }
  Matrix current = input;
  const std::size_t batch = input.rows();
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t n_in = widths_[l];
    const std::size_t n_out = widths_[l + 1];
    const double* w = weights(l).data();
    const auto bias = biases(l);
    Matrix next(batch, n_out);
    for (std::size_t b = 0; b < batch; ++b) {
      double* out = next.row(b).data();
      std::copy(bias.begin(), bias.end(), out);
      const double* in = current.row(b).data();
      for (std::size_t i = 0; i < n_in; ++i) {
        const double x = in[i];
        if (x == 0.0) continue;
        const double* wrow = w + i * n_out;
        for (std::size_t o = 0; o < n_out; ++o) out[o] += x * wrow[o];
      }
      if (l + 1 < num_layers()) {
        for (std::size_t o = 0; o < n_out; ++o) out[o] = out[o] > 0.0 ? out[o] : 0.0;
      }
    }
    current = std::move(next);
    if (cache) cache->activations.push_back(current);
  }
  return current;
}

void Mlp::backward(const Cache& cache, const Matrix& grad_output, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer size mismatch");
  if (cache.activations.size() != num_layers() + 1) throw ShapeError("stale forward cache");
  std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t batch = grad_output.rows();
  Matrix delta = grad_output;
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t n_in = widths_[l];
    const std::size_t n_out = widths_[l + 1];
    if (l + 1 < num_layers()) {
      const Matrix& post = cache.activations[l + 1];
      for (std::size_t k = 0; k < delta.size(); ++k) {
        if (!(post.data()[k] > 0.0)) delta.data()[k] = 0.0;
      }
    }
    const Matrix& in = cache.activations[l];
    double* gw = grad.data() + weight_offset(l);
    double* gb = gw + n_in * n_out;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* d = delta.row(b).data();
      const double* x = in.row(b).data();
      for (std::size_t o = 0; o < n_out; ++o) gb[o] += d[o];
      for (std::size_t i = 0; i < n_in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        double* grow = gw + i * n_out;
        for (std::size_t o = 0; o < n_out; ++o) grow[o] += xi * d[o];
      }
    }
    if (l == 0) break;
    const double* w = weights(l).data();
    Matrix prev(batch, n_in);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* d = delta.row(b).data();
      double* p = prev.row(b).data();
      for (std::size_t i = 0; i < n_in; ++i) p[i] = fast_dot(w + i * n_out, d, n_out);
    }
    delta = std::move(prev);
  }
}

double bound_log_var(double raw) {
  const double upper = kMaxLogVar - softplus(kMaxLogVar - raw);
  // softplus(x) > x, so the smooth form can overshoot the top by ~3e-7.
  return std::clamp(kMinLogVar + softplus(upper - kMinLogVar), kMinLogVar, kMaxLogVar);
}

double bound_log_var_derivative(double raw) {
  const double upper = kMaxLogVar - softplus(kMaxLogVar - raw);
  return sigmoid(kMaxLogVar - raw) * sigmoid(upper - kMinLogVar);
}

double mse_loss_and_grad(const Mlp& net, const Matrix& inputs, const Matrix& targets,
                         std::span<double> grad) {
  Mlp::Cache cache;
  const Matrix out = net.forward_batch(inputs, &cache);
  if (targets.rows() != out.rows() || targets.cols() != out.cols()) {
    throw ShapeError("mse: target shape mismatch");
  }
  const double inv_batch = 1.0 / static_cast<double>(out.rows());
  Matrix grad_out(out.rows(), out.cols());
  double loss = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double r = out.data()[k] - targets.data()[k];
    loss += r * r;
    grad_out.data()[k] = 2.0 * r * inv_batch;
  }
  net.backward(cache, grad_out, grad);
  return loss * inv_batch;
}

double mse_loss(const Mlp& net, const Matrix& inputs, const Matrix& targets) {
  const Matrix out = net.forward_batch(inputs);
  double loss = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double r = out.data()[k] - targets.data()[k];
    loss += r * r;
  }
  return loss / static_cast<double>(out.rows());
}

double gaussian_nll_and_grad(const Mlp& net, const Matrix& inputs, const Matrix& targets,
                             std::span<double> grad) {
  Mlp::Cache cache;
  const Matrix out = net.forward_batch(inputs, &cache);
  const std::size_t ds = targets.cols();
  if (out.cols() != 2 * ds || out.rows() != targets.rows()) {
    throw ShapeError("nll: network output must be [mean, log_var] of the target width");
  }
  const double inv_batch = 1.0 / static_cast<double>(out.rows());
  Matrix grad_out(out.rows(), out.cols());
  double loss = 0.0;
  for (std::size_t b = 0; b < out.rows(); ++b) {
    for (std::size_t d = 0; d < ds; ++d) {
      const double raw = out(b, ds + d);
      const double lv = bound_log_var(raw);
      const double inv_var = std::exp(-lv);
      const double r = out(b, d) - targets(b, d);
      loss += r * r * inv_var + lv;
      grad_out(b, d) = 2.0 * r * inv_var * inv_batch;
      grad_out(b, ds + d) = (1.0 - r * r * inv_var) * bound_log_var_derivative(raw) * inv_batch;
    }
  }
  net.backward(cache, grad_out, grad);
  return loss * inv_batch;
}

double gaussian_nll(const Mlp& net, const Matrix& inputs, const Matrix& targets) {
  const Matrix out = net.forward_batch(inputs);
  const std::size_t ds = targets.cols();
  double loss = 0.0;
  for (std::size_t b = 0; b < out.rows(); ++b) {
    for (std::size_t d = 0; d < ds; ++d) {
      const double lv = bound_log_var(out(b, ds + d));
      const double r = out(b, d) - targets(b, d);
      loss += r * r * std::exp(-lv) + lv;
    }
  }
  return loss / static_cast<double>(out.rows());
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double learning_rate) {
  if (params.size() != grads.size()) throw ShapeError("adam: gradient size mismatch");
  if (state.first_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam: state size mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

TrainConfig TrainConfig::deterministic() { return {}; }

TrainConfig TrainConfig::probabilistic() {
  TrainConfig cfg;
  cfg.learning_rate = 2.5e-5;
  cfg.batch_size = 64;
  return cfg;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (ensemble_size == 0) throw std::invalid_argument("ensemble size must be >= 1");
}

std::string model_name(const DynamicsModel& model) {
  auto suffix = [](Formulation f) { return f == Formulation::kTrueState ? "-S" : ""; };
  return std::visit(
      Overloaded{
          [](const ZeroModel& z) -> std::string { return z.persistence ? "PERSIST" : "ZERO"; },
          [](const LinearModel&) -> std::string { return "LIN"; },
          [&](const NetworkModel& m) -> std::string {
            return std::string(m.probabilistic ? "P" : "D") + suffix(m.formulation);
          },
          [&](const EnsembleModel& e) -> std::string {
            if (e.members.empty()) return "E";
            const auto& m = e.members.front();
            return std::string(m.probabilistic ? "PE" : "DE") + suffix(m.formulation);
          }},
      model);
}

std::size_t model_state_dim(const DynamicsModel& model) {
  return std::visit(Overloaded{[](const ZeroModel& z) { return z.state_dim; },
                               [](const LinearModel& l) { return l.a_hat.rows(); },
                               [](const NetworkModel& m) { return m.state_dim(); },
                               [](const EnsembleModel& e) {
                                 return e.members.empty() ? std::size_t{0}
                                                          : e.members.front().state_dim();
                               }},
                    model);
}

NetworkModel train_deterministic(const Dataset& data, const TrainConfig& cfg) {
  return train_network(data, cfg, false);
}

NetworkModel train_probabilistic(const Dataset& data, const TrainConfig& cfg) {
  return train_network(data, cfg, true);
}

EnsembleModel train_ensemble(const Dataset& data, const TrainConfig& cfg, bool probabilistic) {
  cfg.validate();
  EnsembleModel ensemble;
  for (std::size_t k = 0; k < cfg.ensemble_size; ++k) {
    TrainConfig member = cfg;
    member.seed = derive_seed(cfg.seed, k);
    ensemble.members.push_back(train_network(data, member, probabilistic));
  }
  return ensemble;
}

LinearModel fit_linear_model(const Dataset& data) {
  const std::size_t n = data.size();
  const std::size_t ds = data.state_dim;
  const std::size_t da = data.action_dim;
  if (n < ds + da) {
    throw std::invalid_argument("linear model needs at least " + std::to_string(ds + da) +
                                " transitions, got " + std::to_string(n));
  }
  Matrix x(n, ds + da);
  Matrix b(n, ds);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    std::ranges::copy(data.state(i), row.begin());
    std::ranges::copy(data.action(i), row.begin() + static_cast<std::ptrdiff_t>(ds));
    const Vector delta = sub(data.next_state(i), data.state(i));
    std::ranges::copy(delta, b.row(i).begin());
  }
  const Matrix w = solve_least_squares(x, b);  // (ds + da) x ds
  LinearModel model{Matrix(ds, ds), Matrix(ds, da)};
  for (std::size_t r = 0; r < ds; ++r) {
    for (std::size_t c = 0; c < ds; ++c) model.a_hat(r, c) = w(c, r);
    for (std::size_t c = 0; c < da; ++c) model.b_hat(r, c) = w(ds + c, r);
  }
  return model;
}

Vector predict_network(const NetworkModel& m, std::span<const double> s,
                       std::span<const double> a) {
  const Vector out = m.net.forward(network_input(m, s, a));
  const std::size_t ds = m.state_dim();
  Vector next = m.normalizer.denormalize_target(std::span<const double>(out.data(), ds));
  if (m.formulation == Formulation::kDelta) {
    for (std::size_t i = 0; i < ds; ++i) next[i] += s[i];
  }
  return next;
}

GaussianPrediction predict_gaussian(const NetworkModel& m, std::span<const double> s,
                                    std::span<const double> a) {
  if (!m.probabilistic) throw std::invalid_argument("model has no variance head");
  const Vector out = m.net.forward(network_input(m, s, a));
  const std::size_t ds = m.state_dim();
  GaussianPrediction g;
  g.mean = predict_network(m, s, a);
  g.log_var.resize(ds);
  for (std::size_t i = 0; i < ds; ++i) {
    g.log_var[i] = bound_log_var(out[ds + i]) + 2.0 * std::log(m.normalizer.target_std[i]);
  }
  return g;
}

std::optional<Vector> predict(const DynamicsModel& model, std::span<const double> s,
                              std::span<const double> a) {
  if (!all_finite(s) || !all_finite(a)) return std::nullopt;
  Vector next = std::visit(
      Overloaded{[&](const ZeroModel& z) -> Vector {
                   check_width(s, z.state_dim, "zero model state");
                   return z.persistence ? Vector(s.begin(), s.end()) : Vector(z.state_dim, 0.0);
                 },
                 [&](const LinearModel& l) -> Vector {
                   Vector out(s.begin(), s.end());
                   matvec_add(l.a_hat, s, out);
                   matvec_add(l.b_hat, a, out);
                   return out;
                 },
                 [&](const NetworkModel& m) -> Vector { return predict_network(m, s, a); },
                 [&](const EnsembleModel& e) -> Vector {
                   if (e.members.empty()) throw std::invalid_argument("empty ensemble");
                   Vector mean(e.members.front().state_dim(), 0.0);
                   for (const auto& member : e.members) {
                     const Vector p = predict_network(member, s, a);
                     for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p[i];
                   }
                   for (double& v : mean) v /= static_cast<double>(e.members.size());
                   return mean;
                 }},
      model);
  if (!all_finite(next)) return std::nullopt;
  return next;
}

Vector expand_angles(std::span<const double> s, std::span<const std::size_t> angle_indices) {
  if (!std::ranges::is_sorted(angle_indices) ||
      std::adjacent_find(angle_indices.begin(), angle_indices.end()) != angle_indices.end()) {
    throw std::invalid_argument("angle indices must be sorted and unique");
  }
  Vector out;
  out.reserve(s.size() + angle_indices.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (next < angle_indices.size() && angle_indices[next] == i) {
      out.push_back(std::cos(s[i]));
      out.push_back(std::sin(s[i]));
      ++next;
    } else {
      out.push_back(s[i]);
    }
  }
  if (next != angle_indices.size()) throw std::out_of_range("angle index beyond state width");
  return out;
}

Vector collapse_angles(std::span<const double> expanded,
                       std::span<const std::size_t> angle_indices) {
  if (!std::ranges::is_sorted(angle_indices) ||
      std::adjacent_find(angle_indices.begin(), angle_indices.end()) != angle_indices.end()) {
    throw std::invalid_argument("angle indices must be sorted and unique");
  }
  if (expanded.size() < 2 * angle_indices.size()) throw ShapeError("expanded state too short");
  const std::size_t width = expanded.size() - angle_indices.size();
  Vector out;
  out.reserve(width);
  std::size_t pos = 0;
  std::size_t next = 0;
  for (std::size_t i = 0; i < width; ++i) {
    if (next < angle_indices.size() && angle_indices[next] == i) {
      const double c = expanded[pos];
      const double s = expanded[pos + 1];
      if (std::hypot(c, s) < 1e-6) {
        throw NumericalError("collapse: (cos, sin) pair too small to define an angle");
      }
      double theta = std::atan2(s, c);
      if (theta < 0.0) theta += 2.0 * std::numbers::pi;
      if (theta >= 2.0 * std::numbers::pi) theta = 0.0;
      out.push_back(theta);
      pos += 2;
      ++next;
    } else {
      out.push_back(expanded[pos++]);
    }
  }
  if (next != angle_indices.size()) throw std::out_of_range("angle index beyond state width");
  return out;
}

Trajectory expand_trajectory(const Trajectory& traj, std::span<const std::size_t> angle_indices) {
  Trajectory out = traj;
  for (auto& s : out.states) s = expand_angles(s, angle_indices);
  out.policy.reset();
  return out;
}

namespace {

constexpr const char* kModelMagic = "dynrollout-model";

void write_vector(std::ostream& os, const char* key, std::span<const double> v) {
  os << key << ' ' << v.size();
  for (double x : v) os << ' ' << format_double(x);
  os << '\n';
}

void write_network(std::ostream& os, const NetworkModel& m) {
  os << "kind network\n";
  os << "probabilistic " << (m.probabilistic ? 1 : 0) << '\n';
  os << "formulation " << to_string(m.formulation) << '\n';
  os << "widths " << m.net.widths().size();
  for (std::size_t w : m.net.widths()) os << ' ' << w;
  os << '\n';
  write_vector(os, "state_mean", m.normalizer.state_mean);
  write_vector(os, "state_std", m.normalizer.state_std);
  write_vector(os, "target_mean", m.normalizer.target_mean);
  write_vector(os, "target_std", m.normalizer.target_std);
  write_vector(os, "action_lo", m.normalizer.action_lo);
  write_vector(os, "action_hi", m.normalizer.action_hi);
  write_vector(os, "params", m.net.params());
}

void write_matrix(std::ostream& os, const char* key, const Matrix& m) {
  os << key << ' ' << m.rows() << ' ' << m.cols();
  for (double x : m.data()) os << ' ' << format_double(x);
  os << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::string token() {
    std::string t;
    if (!(is_ >> t)) throw std::runtime_error("model file truncated");
    return t;
  }
  void expect(const std::string& key) {
    const std::string t = token();
    if (t != key) throw std::runtime_error("model file: expected '" + key + "', got '" + t + "'");
  }
  std::size_t count() { return std::stoul(token()); }
  double number() { return std::stod(token()); }
  Vector vector(const std::string& key) {
    expect(key);
    Vector v(count());
    for (double& x : v) x = number();
    return v;
  }
  Matrix matrix(const std::string& key) {
    expect(key);
    const std::size_t r = count();
    const std::size_t c = count();
    Matrix m(r, c);
    for (double& x : m.data()) x = number();
    return m;
  }

  NetworkModel network() {
    NetworkModel m;
    expect("probabilistic");
    m.probabilistic = count() != 0;
    expect("formulation");
    m.formulation = parse_formulation(token());
    expect("widths");
    std::vector<std::size_t> widths(count());
    for (auto& w : widths) w = count();
    m.normalizer.state_mean = vector("state_mean");
    m.normalizer.state_std = vector("state_std");
    m.normalizer.target_mean = vector("target_mean");
    m.normalizer.target_std = vector("target_std");
    m.normalizer.action_lo = vector("action_lo");
    m.normalizer.action_hi = vector("action_hi");
    m.net = Mlp(widths);
    Vector params = vector("params");
    if (params.size() != m.net.num_params()) {
      throw std::runtime_error("model file: parameter count does not match widths");
    }
    m.net.params() = std::move(params);
    return m;
  }

 private:
  std::istream& is_;
};

}  // namespace

void save_model(std::ostream& os, const DynamicsModel& model) {
  os << kModelMagic << " 1\n";
  std::visit(Overloaded{[&](const ZeroModel& z) {
                          os << "kind zero\nstate_dim " << z.state_dim << "\npersistence "
                             << (z.persistence ? 1 : 0) << '\n';
                        },
                        [&](const LinearModel& l) {
                          os << "kind linear\n";
                          write_matrix(os, "a_hat", l.a_hat);
                          write_matrix(os, "b_hat", l.b_hat);
                        },
                        [&](const NetworkModel& m) { write_network(os, m); },
                        [&](const EnsembleModel& e) {
                          os << "kind ensemble\nmembers " << e.members.size() << '\n';
                          for (const auto& m : e.members) write_network(os, m);
                        }},
             model);
}

DynamicsModel load_model(std::istream& is) {
  Reader in(is);
  in.expect(kModelMagic);
  if (in.count() != 1) throw std::runtime_error("unsupported model file version");
  in.expect("kind");
  const std::string kind = in.token();
  if (kind == "zero") {
    ZeroModel z;
    in.expect("state_dim");
    z.state_dim = in.count();
    in.expect("persistence");
    z.persistence = in.count() != 0;
    return z;
  }
  if (kind == "linear") {
    LinearModel l;
    l.a_hat = in.matrix("a_hat");
    l.b_hat = in.matrix("b_hat");
    return l;
  }
  if (kind == "network") return in.network();
  if (kind == "ensemble") {
    EnsembleModel e;
    in.expect("members");
    const std::size_t n = in.count();
    for (std::size_t k = 0; k < n; ++k) {
      in.expect("kind");
      in.expect("network");
      e.members.push_back(in.network());
    }
    return e;
  }
  throw std::runtime_error("model file: unknown kind '" + kind + "'");
}

}  // namespace dynrollout
