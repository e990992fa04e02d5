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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "dynrollout/models.hpp"

namespace dynrollout {
namespace {

Dataset linear_dataset(double pole, std::size_t dim, double noise, std::size_t n_traj,
                       std::size_t horizon, std::uint64_t seed, LinearSystem* out = nullptr) {
  Rng rng(seed);
  const LinearSystem sys = sample_state_space(pole, dim, noise, false, false, rng);
  if (out) *out = sys;
  const auto trajs = generate_dataset(sys, RandomUniformPolicy{}, n_traj, horizon, rng, false);
  return make_dataset(trajs);
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal(0.0, scale);
  return m;
}

// Central differences on a sample of coordinates; returns the norm-wise
// relative error between the analytic and numeric gradients.
template <class LossFn>
double gradient_error(Mlp net, const Matrix& x, const Matrix& y, LossFn loss_and_grad) {
  std::vector<double> grad(net.num_params());
  loss_and_grad(net, x, y, std::span<double>(grad));
  std::vector<double> scratch(net.num_params());
  double diff = 0.0;
  double scale = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < net.num_params(); ++i) {
    const double keep = net.params()[i];
    net.params()[i] = keep + h;
    const double up = loss_and_grad(net, x, y, std::span<double>(scratch));
    net.params()[i] = keep - h;
    const double down = loss_and_grad(net, x, y, std::span<double>(scratch));
    net.params()[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    diff += (numeric - grad[i]) * (numeric - grad[i]);
    scale += grad[i] * grad[i];
  }
  return std::sqrt(diff / scale);
}

TEST(Normalizer, StandardNormalDataGivesUnitMoments) {
  Rng rng(1);
  Dataset d;
  d.state_dim = 2;
  d.action_dim = 1;
  for (int i = 0; i < 20000; ++i) {
    const Vector s = {rng.normal(), rng.normal()};
    d.append(s, Vector{rng.uniform(-1.0, 1.0)}, add(s, Vector{rng.normal(), rng.normal()}));
  }
  const Normalizer n = fit_normalizer(d, Formulation::kDelta);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(n.state_mean[i], 0.0, 0.05);
    EXPECT_NEAR(n.state_std[i], 1.0, 0.05);
    EXPECT_NEAR(n.target_mean[i], 0.0, 0.05);
    EXPECT_NEAR(n.target_std[i], 1.0, 0.05);
  }
  EXPECT_GE(n.action_lo[0], -1.0);
  EXPECT_LT(n.action_hi[0], 1.0);
}

TEST(Normalizer, ConstantCoordinateIsFloored) {
  Dataset d;
  d.state_dim = 2;
  d.action_dim = 0;
  for (int i = 0; i < 10; ++i) d.append(Vector{3.0, double(i)}, Vector{}, Vector{3.0, i + 1.0});
  const Normalizer n = fit_normalizer(d, Formulation::kTrueState);
  EXPECT_EQ(n.state_std[0], kStdFloor);
  EXPECT_EQ(n.normalize_state(Vector{3.0, 0.0})[0], 0.0);
}

TEST(Normalizer, RoundTrip) {
  Rng rng(2);
  const Dataset d = linear_dataset(0.7, 4, 1.0, 5, 30, 3);
  const Normalizer n = fit_normalizer(d, Formulation::kDelta);
  for (int k = 0; k < 1000; ++k) {
    Vector z(4);
    for (double& v : z) v = rng.normal(0.0, 3.0);
    const Vector s = n.normalize_state(n.denormalize_state(z));
    const Vector t = n.normalize_target(n.denormalize_target(z));
    for (std::size_t i = 0; i < 4; ++i) {
      ASSERT_NEAR(s[i], z[i], 1e-12 * std::max(1.0, std::abs(z[i])));
      ASSERT_NEAR(t[i], z[i], 1e-12 * std::max(1.0, std::abs(z[i])));
    }
    const Vector a = {rng.uniform(-1.0, 1.0)};
    ASSERT_NEAR(n.normalize_action(n.denormalize_action(a))[0], a[0], 1e-12);
  }
}

TEST(Normalizer, ActionsMapToUnitInterval) {
  const Dataset d = linear_dataset(0.5, 3, 1.0, 10, 50, 4);
  const Normalizer n = fit_normalizer(d, Formulation::kDelta);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double z = n.normalize_action(d.action(i))[0];
    ASSERT_GE(z, -1.0 - 1e-12);
    ASSERT_LE(z, 1.0 + 1e-12);
  }
}

TEST(Normalizer, TooFewTransitionsRejected) {
  Dataset d;
  d.state_dim = 1;
  d.append(Vector{1.0}, Vector{}, Vector{2.0});
  EXPECT_THROW(fit_normalizer(d, Formulation::kDelta), std::invalid_argument);
}

TEST(Mlp, ZeroWeightsGiveFinalBias) {
  Mlp net({3, 5, 2});
  net.biases(1)[0] = 0.25;
  net.biases(1)[1] = -4.0;
  EXPECT_EQ(net.forward(Vector{1, 2, 3}), (Vector{0.25, -4.0}));
}

TEST(Mlp, SingleLayerIsAffine) {
  Rng rng(5);
  Mlp net = Mlp::initialized({3, 2}, rng);
  net.biases(0)[0] = 0.5;
  net.biases(0)[1] = -0.5;
  const Vector x = {0.3, -1.2, 2.0};
  const Vector y = net.forward(x);
  for (std::size_t o = 0; o < 2; ++o) {
    double expected = net.biases(0)[o];
    for (std::size_t i = 0; i < 3; ++i) expected += x[i] * net.weights(0)[i * 2 + o];
    EXPECT_NEAR(y[o], expected, 1e-15);
  }
}

TEST(Mlp, HiddenLayersApplyRelu) {
  Mlp net({1, 1, 1});
  net.weights(0)[0] = 1.0;
  net.weights(1)[0] = 1.0;
  EXPECT_EQ(net.forward(Vector{-2.0})[0], 0.0);
  EXPECT_EQ(net.forward(Vector{2.0})[0], 2.0);
}

TEST(Mlp, InitializationWithinGlorotBound) {
  Rng rng(6);
  const Mlp net = Mlp::initialized({4, 16, 3}, rng);
  const double b0 = std::sqrt(6.0 / 20.0);
  for (double w : net.weights(0)) {
    ASSERT_LE(std::abs(w), b0);
  }
  for (double b : net.biases(1)) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(net.num_params(), 4u * 16 + 16 + 16 * 3 + 3);
}

TEST(Mlp, BatchMatchesSingleForward) {
  Rng rng(7);
  const Mlp net = Mlp::initialized({3, 8, 8, 2}, rng);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix y = net.forward_batch(x);
  for (std::size_t r = 0; r < 5; ++r) {
    const auto row = x.row(r);
    const Vector single = net.forward(Vector(row.begin(), row.end()));
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(y(r, c), single[c], 1e-14);
  }
}

TEST(Gradients, MseMatchesFiniteDifferences) {
  Rng rng(8);
  for (int point = 0; point < 10; ++point) {
    Mlp net = Mlp::initialized({4, 8, 8, 3}, rng);
    for (double& b : net.params()) b += rng.normal(0.0, 0.05);
    const Matrix x = random_matrix(6, 4, rng);
    const Matrix y = random_matrix(6, 3, rng);
    EXPECT_LT(gradient_error(net, x, y, mse_loss_and_grad), 1e-5);
  }
}

TEST(Gradients, NllMatchesFiniteDifferences) {
  Rng rng(9);
  for (int point = 0; point < 10; ++point) {
    Mlp net = Mlp::initialized({4, 8, 8, 6}, rng);
    for (double& b : net.params()) b += rng.normal(0.0, 0.05);
    const Matrix x = random_matrix(6, 4, rng);
    const Matrix y = random_matrix(6, 3, rng);
    EXPECT_LT(gradient_error(net, x, y, gaussian_nll_and_grad), 1e-5);
  }
}

TEST(Gradients, LossValuesMatchGradientVariants) {
  Rng rng(10);
  const Mlp det = Mlp::initialized({2, 4, 2}, rng);
  const Mlp prob = Mlp::initialized({2, 4, 4}, rng);
  const Matrix x = random_matrix(3, 2, rng);
  const Matrix y = random_matrix(3, 2, rng);
  std::vector<double> g1(det.num_params());
  std::vector<double> g2(prob.num_params());
  EXPECT_DOUBLE_EQ(mse_loss(det, x, y), mse_loss_and_grad(det, x, y, g1));
  EXPECT_DOUBLE_EQ(gaussian_nll(prob, x, y), gaussian_nll_and_grad(prob, x, y, g2));
}

TEST(LogVarBound, StaysInRangeAndIsMonotone) {
  double prev = -INFINITY;
  for (double raw = -50.0; raw <= 50.0; raw += 0.25) {
    const double b = bound_log_var(raw);
    ASSERT_GE(b, kMinLogVar);
    ASSERT_LE(b, kMaxLogVar);
    ASSERT_GE(b, prev);
    prev = b;
    const double h = 1e-6;
    const double fd = (bound_log_var(raw + h) - bound_log_var(raw - h)) / (2 * h);
    ASSERT_NEAR(bound_log_var_derivative(raw), fd, 1e-6);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p = {1.0, -2.0};
  AdamState st;
  adam_step(p, std::vector<double>{0.0, 0.0}, st, 0.1);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p = {1.0, 1.0, 1.0};
  AdamState st;
  adam_step(p, std::vector<double>{0.5, -3.0, 1e3}, st, 1e-3);
  EXPECT_NEAR(p[0], 1.0 - 1e-3, 1e-10);
  EXPECT_NEAR(p[1], 1.0 + 1e-3, 1e-10);
  EXPECT_NEAR(p[2], 1.0 - 1e-3, 1e-10);
}

TEST(Adam, MatchesScalarReferenceOnQuadratic) {
  // f(x) = 0.5 c (x - t)^2 per coordinate.
  const std::vector<double> c = {1.0, 10.0, 0.1};
  const std::vector<double> target = {3.0, -1.0, 0.5};
  std::vector<double> p = {0.0, 0.0, 0.0};
  AdamState st;
  double ref[3] = {0.0, 0.0, 0.0};
  double m[3] = {0, 0, 0};
  double v[3] = {0, 0, 0};
  const double lr = 0.05;
  for (int t = 1; t <= 100; ++t) {
    std::vector<double> g(3);
    for (int i = 0; i < 3; ++i) g[i] = c[i] * (p[i] - target[i]);
    adam_step(p, g, st, lr);
    for (int i = 0; i < 3; ++i) {
      const double gi = c[i] * (ref[i] - target[i]);
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], ref[i], 1e-12);
}

TEST(TrainConfig, Defaults) {
  const TrainConfig d = TrainConfig::deterministic();
  EXPECT_EQ(d.epochs, 20u);
  EXPECT_EQ(d.learning_rate, 3e-4);
  EXPECT_EQ(d.batch_size, 32u);
  EXPECT_EQ(d.hidden, (std::vector<std::size_t>{256, 256}));
  const TrainConfig p = TrainConfig::probabilistic();
  EXPECT_EQ(p.learning_rate, 2.5e-5);
  EXPECT_EQ(p.batch_size, 64u);
  EXPECT_EQ(p.ensemble_size, 5u);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.hidden = {32, 32};
  cfg.epochs = 20;
  cfg.seed = seed;
  return cfg;
}

TEST(TrainDeterministic, LossDecreases) {
  const Dataset d = linear_dataset(0.5, 3, 1.0, 10, 50, 11);
  const NetworkModel m = train_deterministic(d, small_config(1));
  ASSERT_EQ(m.epoch_losses.size(), 20u);
  EXPECT_LT(m.epoch_losses.back(), m.epoch_losses.front());
  EXPECT_EQ(model_name(m), "D");
}

TEST(TrainDeterministic, EqualSeedsAreBitIdentical) {
  const Dataset d = linear_dataset(0.5, 3, 1.0, 5, 40, 12);
  const NetworkModel a = train_deterministic(d, small_config(7));
  const NetworkModel b = train_deterministic(d, small_config(7));
  EXPECT_EQ(a.net.params(), b.net.params());
  const NetworkModel c = train_deterministic(d, small_config(8));
  EXPECT_NE(a.net.params(), c.net.params());
}

TEST(TrainDeterministic, NoiseFreeOneStepErrorSmall) {
  const Dataset train = linear_dataset(0.5, 3, 0.0, 20, 100, 13);
  TrainConfig cfg = TrainConfig::deterministic();
  cfg.seed = 2;
  const NetworkModel m = train_deterministic(train, cfg);
  const Dataset test = linear_dataset(0.5, 3, 0.0, 5, 100, 13);
  double err = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Vector p = predict_network(m, test.state(i), test.action(i));
    const Vector zp = m.normalizer.normalize_target(sub(p, test.state(i)));
    const Vector zt = m.normalizer.normalize_target(sub(test.next_state(i), test.state(i)));
    for (std::size_t k = 0; k < 3; ++k) err += (zp[k] - zt[k]) * (zp[k] - zt[k]);
  }
  EXPECT_LT(err / double(test.size() * 3), 1e-3);
}

TEST(TrainDeterministic, NormalizationEquivariance) {
  // Build data whose states and delta targets already have population mean
  // 0 and std 1 per coordinate and whose actions span exactly [-1, 1].
  Rng rng(14);
  const std::size_t n = 400;
  Matrix s = random_matrix(n, 2, rng);
  Matrix t = random_matrix(n, 2, rng);
  for (Matrix* m : {&s, &t}) {
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < n; ++r) mean += (*m)(r, c);
      mean /= n;
      double var = 0.0;
      for (std::size_t r = 0; r < n; ++r) var += ((*m)(r, c) - mean) * ((*m)(r, c) - mean);
      const double sd = std::sqrt(var / n);
      for (std::size_t r = 0; r < n; ++r) (*m)(r, c) = ((*m)(r, c) - mean) / sd;
    }
  }
  Dataset d;
  d.state_dim = 2;
  d.action_dim = 1;
  for (std::size_t r = 0; r < n; ++r) {
    const double a = r == 0 ? -1.0 : r == 1 ? 1.0 : rng.uniform(-1.0, 1.0);
    const Vector sr = {s(r, 0), s(r, 1)};
    d.append(sr, Vector{a}, add(sr, Vector{t(r, 0), t(r, 1)}));
  }
  TrainConfig cfg = small_config(3);
  cfg.epochs = 5;
  const NetworkModel with = train_deterministic(d, cfg);
  cfg.normalization_enabled = false;
  const NetworkModel without = train_deterministic(d, cfg);
  ASSERT_EQ(with.epoch_losses.size(), without.epoch_losses.size());
  for (std::size_t e = 0; e < with.epoch_losses.size(); ++e) {
    EXPECT_NEAR(with.epoch_losses[e], without.epoch_losses[e], 1e-9);
  }
}

TEST(TrainDeterministic, EmptyDatasetRejected) {
  Dataset d;
  d.state_dim = 3;
  EXPECT_THROW(train_deterministic(d, small_config(1)), std::invalid_argument);
}

TEST(TrainProbabilistic, ExactTargetsDriveLogVarDown) {
  const Dataset d = linear_dataset(0.5, 3, 0.0, 10, 100, 15);
  TrainConfig cfg = TrainConfig::probabilistic();
  cfg.hidden = {32, 32};
  cfg.learning_rate = 1e-3;
  cfg.epochs = 40;
  cfg.seed = 4;
  const NetworkModel m = train_probabilistic(d, cfg);
  EXPECT_EQ(model_name(m), "P");
  double mean_lv = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vector out = m.net.forward(Vector{d.state(i)[0], d.state(i)[1], d.state(i)[2], 0.0});
    for (std::size_t k = 0; k < 3; ++k) mean_lv += bound_log_var(out[3 + k]);
  }
  mean_lv /= double(d.size() * 3);
  EXPECT_LT(mean_lv, -4.0);
  EXPECT_GE(mean_lv, kMinLogVar);
}

TEST(TrainProbabilistic, VarianceApproachesSquaredResidual) {
  // Target is the input plus a residual of fixed magnitude r and random sign;
  // the NLL optimum of the variance is r^2.
  Rng rng(16);
  const double r = 0.3;
  Dataset d;
  d.state_dim = 1;
  d.action_dim = 0;
  for (int i = 0; i < 4000; ++i) {
    const double s = rng.uniform(-1.0, 1.0);
    d.append(Vector{s}, Vector{}, Vector{s + (rng.uniform01() < 0.5 ? -r : r)});
  }
  TrainConfig cfg = TrainConfig::probabilistic();
  cfg.hidden = {16};
  cfg.learning_rate = 1e-3;
  cfg.epochs = 20;
  cfg.seed = 5;
  const NetworkModel m = train_probabilistic(d, cfg);
  for (double s : {-0.5, 0.0, 0.5}) {
    const GaussianPrediction g = predict_gaussian(m, Vector{s}, Vector{});
    EXPECT_NEAR(std::exp(g.log_var[0]), r * r, 0.2 * r * r);
  }
}

TEST(Ensemble, MemberKEqualsStandaloneDerivedSeed) {
  const Dataset d = linear_dataset(0.5, 3, 1.0, 4, 30, 17);
  TrainConfig cfg = small_config(99);
  cfg.epochs = 3;
  cfg.ensemble_size = 3;
  const EnsembleModel e = train_ensemble(d, cfg, false);
  ASSERT_EQ(e.members.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    TrainConfig single = cfg;
    single.seed = derive_seed(99, k);
    EXPECT_EQ(e.members[k].net.params(), train_deterministic(d, single).net.params());
  }
  EXPECT_EQ(model_name(e), "DE");
}

TEST(Ensemble, IdenticalMembersEqualSingleModel) {
  const Dataset d = linear_dataset(0.5, 3, 1.0, 4, 30, 18);
  TrainConfig cfg = small_config(1);
  cfg.epochs = 2;
  const NetworkModel m = train_deterministic(d, cfg);
  const DynamicsModel single = m;
  const DynamicsModel ens = EnsembleModel{{m, m, m, m}};
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(*predict(ens, d.state(i), d.action(i)), *predict(single, d.state(i), d.action(i)));
  }
}

TEST(Ensemble, MeanMatchesMemberLoop) {
  const Dataset d = linear_dataset(0.5, 3, 1.0, 4, 30, 19);
  TrainConfig cfg = small_config(2);
  cfg.epochs = 2;
  cfg.ensemble_size = 5;
  cfg.formulation = Formulation::kTrueState;
  const EnsembleModel e = train_ensemble(d, cfg, true);
  EXPECT_EQ(model_name(e), "PE-S");
  const DynamicsModel model = e;
  for (std::size_t i = 0; i < 20; ++i) {
    Vector expected(3, 0.0);
    for (const auto& m : e.members) expected = add(expected, predict_network(m, d.state(i), d.action(i)));
    for (double& v : expected) v /= 5.0;
    const Vector got = *predict(model, d.state(i), d.action(i));
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got[k], expected[k], 1e-12);
  }
}

TEST(Formulation, ZeroNetworkOutput) {
  const Dataset d = linear_dataset(0.5, 3, 1.0, 4, 30, 20);
  TrainConfig cfg = small_config(3);
  cfg.epochs = 1;
  NetworkModel delta = train_deterministic(d, cfg);
  cfg.formulation = Formulation::kTrueState;
  NetworkModel truth = train_deterministic(d, cfg);
  std::fill(delta.net.params().begin(), delta.net.params().end(), 0.0);
  std::fill(truth.net.params().begin(), truth.net.params().end(), 0.0);
  const Vector s = {0.3, -0.2, 0.1};
  const Vector a = {0.5};
  // Zero normalized delta output denormalizes to the target mean.
  const Vector pd = predict_network(delta, s, a);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(pd[k], s[k] + delta.normalizer.target_mean[k]);
  delta.normalizer.target_mean.assign(3, 0.0);
  EXPECT_EQ(predict_network(delta, s, a), s);
  EXPECT_EQ(predict_network(truth, s, a), truth.normalizer.target_mean);
  EXPECT_EQ(parse_formulation(to_string(Formulation::kTrueState)), Formulation::kTrueState);
}

TEST(ZeroModel, PredictsZeroVectorAtEveryWidth) {
  Rng rng(21);
  for (std::size_t dim : {3u, 9u, 81u}) {
    Vector s(dim);
    for (double& v : s) v = rng.normal();
    const DynamicsModel z = ZeroModel{dim};
    EXPECT_EQ(*predict(z, s, Vector{0.7}), Vector(dim, 0.0));
    const DynamicsModel p = ZeroModel{dim, true};
    EXPECT_EQ(*predict(p, s, Vector{0.7}), s);
  }
}

TEST(Predict, NonFiniteInputFlagsDivergence) {
  const DynamicsModel z = ZeroModel{2};
  EXPECT_FALSE(predict(z, Vector{INFINITY, 0.0}, Vector{}).has_value());
}

TEST(LinearModel, IdentityDynamicsGiveZeroCoefficients) {
  Rng rng(22);
  Dataset d;
  d.state_dim = 3;
  d.action_dim = 1;
  for (int i = 0; i < 50; ++i) {
    const Vector s = {rng.normal(), rng.normal(), rng.normal()};
    d.append(s, Vector{rng.uniform(-1.0, 1.0)}, s);
  }
  const LinearModel lin = fit_linear_model(d);
  for (double v : lin.a_hat.data()) EXPECT_NEAR(v, 0.0, 1e-12);
  for (double v : lin.b_hat.data()) EXPECT_NEAR(v, 0.0, 1e-12);
  const DynamicsModel m = lin;
  Vector s = {1.0, 2.0, 3.0};
  for (int k = 0; k < 10; ++k) s = *predict(m, s, Vector{0.4});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s[i], i + 1.0, 1e-10);
}

TEST(LinearModel, RecoversNoiseFreeSystem) {
  LinearSystem sys;
  const Dataset d = linear_dataset(0.8, 4, 0.0, 5, 50, 23, &sys);
  const LinearModel lin = fit_linear_model(d);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(lin.a_hat(r, c) + (r == c ? 1.0 : 0.0), sys.a(r, c), 1e-6);
    }
    EXPECT_NEAR(lin.b_hat(r, 0), sys.b(r, 0), 1e-6);
  }
}

TEST(LinearModel, PureNoiseCoefficientsShrink) {
  auto coef_norm = [](std::size_t n) {
    Rng rng(24);
    Dataset d;
    d.state_dim = 2;
    d.action_dim = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const Vector s = {rng.normal(), rng.normal()};
      d.append(s, Vector{rng.uniform(-1.0, 1.0)},
               add(s, Vector{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}));
    }
    const LinearModel lin = fit_linear_model(d);
    return norm2(lin.a_hat.data()) + norm2(lin.b_hat.data());
  };
  const double n100 = coef_norm(100);
  const double n10k = coef_norm(10000);
  EXPECT_LT(n10k, n100 / 3.0);
  EXPECT_LT(n10k, 0.05);
}

TEST(LinearModel, TooFewTransitionsRejected) {
  Dataset d;
  d.state_dim = 3;
  d.action_dim = 1;
  d.append(Vector{1, 2, 3}, Vector{0}, Vector{1, 2, 3});
  EXPECT_THROW(fit_linear_model(d), std::invalid_argument);
}

TEST(Angles, KnownValues) {
  const std::vector<std::size_t> idx = {0};
  const Vector e0 = expand_angles(Vector{0.0}, idx);
  EXPECT_EQ(e0, (Vector{1.0, 0.0}));
  const Vector e1 = expand_angles(Vector{std::numbers::pi / 2}, idx);
  EXPECT_NEAR(e1[0], 0.0, 1e-16);
  EXPECT_EQ(e1[1], 1.0);
}

TEST(Angles, RoundTripModTwoPi) {
  Rng rng(25);
  const std::vector<std::size_t> idx = {2};
  for (int k = 0; k < 10000; ++k) {
    const double theta = rng.uniform(-20.0, 20.0);
    const Vector s = {1.0, -1.0, theta, 0.5};
    const Vector e = expand_angles(s, idx);
    ASSERT_EQ(e.size(), 5u);
    const Vector back = collapse_angles(e, idx);
    ASSERT_EQ(back.size(), 4u);
    EXPECT_EQ(back[0], 1.0);
    EXPECT_EQ(back[3], 0.5);
    const double two_pi = 2.0 * std::numbers::pi;
    ASSERT_GE(back[2], 0.0);
    ASSERT_LT(back[2], two_pi);
    double d = std::fmod(back[2] - theta, two_pi);
    if (d > std::numbers::pi) d -= two_pi;
    if (d < -std::numbers::pi) d += two_pi;
    ASSERT_NEAR(d, 0.0, 1e-12);
  }
}

TEST(Angles, DegeneratePairAndBadIndices) {
  const std::vector<std::size_t> idx = {0};
  EXPECT_THROW(collapse_angles(Vector{1e-7, 1e-7}, idx), NumericalError);
  const std::vector<std::size_t> unsorted = {2, 0};
  EXPECT_THROW(expand_angles(Vector{0, 0, 0}, unsorted), std::invalid_argument);
  const std::vector<std::size_t> beyond = {5};
  EXPECT_THROW(expand_angles(Vector{0, 0, 0}, beyond), std::out_of_range);
}

TEST(Serialization, RoundTripIsBitExact) {
  const Dataset d = linear_dataset(0.5, 3, 1.0, 4, 30, 26);
  TrainConfig cfg = small_config(4);
  cfg.epochs = 2;
  cfg.ensemble_size = 2;
  std::vector<DynamicsModel> models = {ZeroModel{3},
                                       ZeroModel{3, true},
                                       fit_linear_model(d),
                                       train_deterministic(d, cfg),
                                       train_probabilistic(d, cfg),
                                       train_ensemble(d, cfg, true)};
  for (const auto& m : models) {
    std::stringstream ss;
    save_model(ss, m);
    const DynamicsModel back = load_model(ss);
    EXPECT_EQ(model_name(back), model_name(m));
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(*predict(back, d.state(i), d.action(i)), *predict(m, d.state(i), d.action(i)));
    }
  }
}

TEST(Serialization, CorruptFileRejected) {
  std::stringstream ss("not a model");
  EXPECT_THROW(load_model(ss), std::runtime_error);
}

}  // namespace
}  // namespace dynrollout
