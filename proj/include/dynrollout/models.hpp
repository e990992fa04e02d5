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

// One-step dynamics models behind a single prediction interface:
//
//   ZERO   always predicts the zero vector (or the input state, when the
//          persistence reading is requested)
//   LIN    least-squares fit of the state delta, s' = s + A s + B a
//   D/D-S  feedforward network trained on squared error, delta or
//          true-state targets
//   PE/PE-S ensembles of networks with a Gaussian head trained on the
//          negative log-likelihood; rollouts average the member means
//
// Networks see normalized data: states and targets are standardized per
// coordinate and actions are mapped to [-1, 1] using the training ranges.

#ifndef DYNROLLOUT_MODELS_HPP_
#define DYNROLLOUT_MODELS_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dynrollout/numerics.hpp"
#include "dynrollout/systems.hpp"

namespace dynrollout {

enum class Formulation { kDelta, kTrueState };

std::string to_string(Formulation f);
Formulation parse_formulation(const std::string& s);

// Flattened (s, a, s') transitions, row-major.
struct Dataset {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> states;
  std::vector<double> actions;
  std::vector<double> next_states;

  std::size_t size() const { return state_dim == 0 ? 0 : states.size() / state_dim; }
  std::span<const double> state(std::size_t i) const {
    return {states.data() + i * state_dim, state_dim};
  }
  std::span<const double> action(std::size_t i) const {
    return {actions.data() + i * action_dim, action_dim};
  }
  std::span<const double> next_state(std::size_t i) const {
    return {next_states.data() + i * state_dim, state_dim};
  }
  void append(std::span<const double> s, std::span<const double> a,
              std::span<const double> next);
};

Dataset make_dataset(std::span<const Trajectory> trajectories);

inline constexpr double kStdFloor = 1e-8;

struct Normalizer {
  Vector state_mean;
  Vector state_std;
  Vector target_mean;
  Vector target_std;
  Vector action_lo;
  Vector action_hi;

  static Normalizer identity(std::size_t state_dim, std::size_t action_dim);

  Vector normalize_state(std::span<const double> s) const;
  Vector denormalize_state(std::span<const double> z) const;
  Vector normalize_target(std::span<const double> y) const;
  Vector denormalize_target(std::span<const double> z) const;
  Vector normalize_action(std::span<const double> a) const;
  Vector denormalize_action(std::span<const double> z) const;
};

// Population mean/std per coordinate (std floored at 1e-8); action bounds
// from the data minimum and maximum.
Normalizer fit_normalizer(const Dataset& data, Formulation formulation);

// Fully connected ReLU network. All weights and biases live in one flat
// vector; layer l has a row-major (in x out) weight block followed by its
// bias.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> widths);
  // Glorot-uniform weights, zero biases.
  static Mlp initialized(std::vector<std::size_t> widths, Rng& rng);

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  std::size_t num_layers() const { return widths_.size() - 1; }
  std::size_t num_params() const { return params_.size(); }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> biases(std::size_t layer);
  std::span<const double> biases(std::size_t layer) const;

  Vector forward(std::span<const double> input) const;

  // Per-layer inputs kept for the backward pass.
  struct Cache {
    std::vector<Matrix> activations;
  };
  // Rows of `input` are samples.
  Matrix forward_batch(const Matrix& input, Cache* cache = nullptr) const;
  // Writes dLoss/dparams (same layout as params()) given dLoss/doutput.
  void backward(const Cache& cache, const Matrix& grad_output, std::span<double> grad) const;

  bool operator==(const Mlp&) const = default;

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }

  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// Log-variance bounds of the Gaussian head.
inline constexpr double kMinLogVar = -10.0;
inline constexpr double kMaxLogVar = 5.0;

// Smoothly bounds a raw head output to [kMinLogVar, kMaxLogVar].
double bound_log_var(double raw);
double bound_log_var_derivative(double raw);

// Mean over the batch of the squared error summed over output coordinates.
double mse_loss_and_grad(const Mlp& net, const Matrix& inputs, const Matrix& targets,
                         std::span<double> grad);
// Network output is [mean, raw log-variance]; loss is the batch mean of
// sum_d (mu_d - y_d)^2 exp(-lv_d) + lv_d.
double gaussian_nll_and_grad(const Mlp& net, const Matrix& inputs, const Matrix& targets,
                             std::span<double> grad);
double mse_loss(const Mlp& net, const Matrix& inputs, const Matrix& targets);
double gaussian_nll(const Mlp& net, const Matrix& inputs, const Matrix& targets);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
};

// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double learning_rate);

struct TrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 3e-4;
  std::size_t batch_size = 32;
  std::size_t ensemble_size = 5;
  bool normalization_enabled = true;
  Formulation formulation = Formulation::kDelta;
  std::vector<std::size_t> hidden = {256, 256};
  std::uint64_t seed = 0;

  static TrainConfig deterministic();
  static TrainConfig probabilistic();
  void validate() const;
};

struct ZeroModel {
  std::size_t state_dim = 0;
  // Predict s' = s instead of the zero vector.
  bool persistence = false;
};

struct LinearModel {
  Matrix a_hat;  // delta dynamics, s' = s + a_hat s + b_hat a
  Matrix b_hat;
};

struct NetworkModel {
  Mlp net;
  bool probabilistic = false;
  Formulation formulation = Formulation::kDelta;
  Normalizer normalizer;
  std::vector<double> epoch_losses;  // not serialized

  std::size_t state_dim() const { return normalizer.state_mean.size(); }
  std::size_t action_dim() const { return normalizer.action_lo.size(); }
};

struct EnsembleModel {
  std::vector<NetworkModel> members;
};

struct GaussianPrediction {
  Vector mean;
  Vector log_var;
};

using DynamicsModel = std::variant<ZeroModel, LinearModel, NetworkModel, EnsembleModel>;

// Short name: ZERO, LIN, D, D-S, P, P-S, PE, PE-S, DE, DE-S.
std::string model_name(const DynamicsModel& model);
std::size_t model_state_dim(const DynamicsModel& model);

NetworkModel train_deterministic(const Dataset& data, const TrainConfig& cfg);
NetworkModel train_probabilistic(const Dataset& data, const TrainConfig& cfg);
// Member k is trained with seed derive_seed(cfg.seed, k).
EnsembleModel train_ensemble(const Dataset& data, const TrainConfig& cfg, bool probabilistic);
LinearModel fit_linear_model(const Dataset& data);

// Next-state prediction; nullopt signals divergence (non-finite input or
// output).
std::optional<Vector> predict(const DynamicsModel& model, std::span<const double> s,
                              std::span<const double> a);
Vector predict_network(const NetworkModel& model, std::span<const double> s,
                       std::span<const double> a);
// Mean and log-variance of the next state in physical units.
GaussianPrediction predict_gaussian(const NetworkModel& model, std::span<const double> s,
                                    std::span<const double> a);

// Replaces every listed coordinate theta by the pair (cos theta, sin theta).
Vector expand_angles(std::span<const double> s, std::span<const std::size_t> angle_indices);
// Inverse of expand_angles; angles land in [0, 2 pi).
Vector collapse_angles(std::span<const double> expanded,
                       std::span<const std::size_t> angle_indices);
Trajectory expand_trajectory(const Trajectory& traj, std::span<const std::size_t> angle_indices);

void save_model(std::ostream& os, const DynamicsModel& model);
DynamicsModel load_model(std::istream& is);

}  // namespace dynrollout

#endif  // DYNROLLOUT_MODELS_HPP_
