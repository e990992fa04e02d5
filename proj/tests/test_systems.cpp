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
#include <complex>
#include <sstream>

#include "dynrollout/systems.hpp"

namespace dynrollout {
namespace {

LinearSystem hand_system() {
  LinearSystem sys;
  sys.a = Matrix{{0.5, 1, 0}, {0, 0.5, 0}, {0, 0, 0.5}};
  sys.b = Matrix{{0}, {0}, {1}};
  sys.pole = 0.5;
  sys.noise_scale = 0.0;
  sys.dim = 3;
  return sys;
}

LinearSystem scalar_system(double pole) {
  LinearSystem sys;
  sys.a = Matrix{{pole}};
  sys.b = Matrix{{0.0}};
  sys.pole = pole;
  sys.noise_scale = 0.0;
  sys.dim = 1;
  return sys;
}

TEST(StateSpace, DiagonalEqualsPole) {
  Rng rng(1);
  const LinearSystem sys = sample_state_space(0.5, 3, 1.0, false, false, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(sys.a(i, i), 0.5);
    for (std::size_t j = 0; j < i; ++j) EXPECT_EQ(sys.a(i, j), 0.0);
  }
}

TEST(StateSpace, EntriesInUnitBoxAndDim3NormBound) {
  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    const LinearSystem sys = sample_state_space(0.9, 3, 1.0, false, false, rng);
    EXPECT_LE(infinity_norm(sys.a), 3.0);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = i + 1; j < 3; ++j) {
        EXPECT_GE(sys.a(i, j), -1.0);
        EXPECT_LT(sys.a(i, j), 1.0);
      }
      EXPECT_GE(sys.b(i, 0), -1.0);
      EXPECT_LT(sys.b(i, 0), 1.0);
    }
  }
}

TEST(StateSpace, RegularizationBoundsNormAndKeepsPoles) {
  Rng rng(3);
  for (std::size_t dim : {3u, 9u, 27u, 81u}) {
    const int count = dim == 81 ? 1000 : 200;
    for (int k = 0; k < count; ++k) {
      const LinearSystem sys = sample_state_space(0.75, dim, 1.0, true, false, rng);
      ASSERT_LE(infinity_norm(sys.a), 3.0 + 1e-12);
      for (std::size_t i = 0; i < dim; ++i) ASSERT_EQ(sys.a(i, i), 0.75);
    }
  }
}

TEST(StateSpace, ZeroInputsZeroB) {
  Rng rng(4);
  const LinearSystem sys = sample_state_space(0.5, 9, 1.0, false, true, rng);
  for (double v : sys.b.data()) EXPECT_EQ(v, 0.0);
}

TEST(StateSpace, ZeroDimRejected) {
  Rng rng(5);
  EXPECT_THROW(sample_state_space(0.5, 0, 1.0, false, false, rng), std::invalid_argument);
}

TEST(Step, HandExample) {
  Rng rng(6);
  const Vector s = step(hand_system(), Vector{1, 0, 0}, Vector{0.3}, rng);
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.0);
  EXPECT_DOUBLE_EQ(s[2], 0.3);
}

TEST(Step, ZeroFixedPoint) {
  Rng rng(7);
  EXPECT_EQ(step(hand_system(), Vector{0, 0, 0}, Vector{0}, rng), (Vector{0, 0, 0}));
}

TEST(Step, NoiseWithinHalfWidth) {
  Rng rng(8);
  LinearSystem sys = hand_system();
  sys.noise_scale = 10.0;
  for (int k = 0; k < 1000; ++k) {
    const Vector s = step(sys, Vector{0, 0, 0}, Vector{0}, rng);
    for (double v : s) {
      ASSERT_GE(v, -0.1);
      ASSERT_LT(v, 0.1);
    }
  }
}

TEST(Step, NonFiniteStateRejected) {
  Rng rng(9);
  EXPECT_THROW(step(hand_system(), Vector{NAN, 0, 0}, Vector{0}, rng), NumericalError);
}

TEST(ClosedForm, EmptySumAndTransientOnly) {
  Rng rng(10);
  const LinearSystem sys = sample_state_space(0.8, 4, 0.0, false, false, rng);
  const Vector s0 = {1, -1, 0.5, 2};
  const std::vector<Vector> zeros(12, Vector{0.0});
  EXPECT_EQ(closed_form_state(sys, s0, zeros, 0), s0);
  const Vector a = closed_form_state(sys, s0, zeros, 12);
  const Vector b = matrix_power_apply(sys.a, s0, 12);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(ClosedForm, MatchesIteratedSteps) {
  Rng rng(11);
  for (int k = 0; k < 100; ++k) {
    const LinearSystem sys = sample_state_space(rng.uniform(0.1, 0.95), 3 + rng.index(25), 0.0,
                                                false, false, rng);
    Vector s(sys.state_dim());
    for (double& v : s) v = rng.normal();
    const Vector s0 = s;
    std::vector<Vector> actions;
    for (int t = 0; t < 30; ++t) {
      actions.push_back({rng.uniform(-1.0, 1.0)});
      s = step(sys, s, actions.back(), rng);
    }
    const Vector c = closed_form_state(sys, s0, actions, 30);
    ASSERT_LT(norm2(sub(c, s)), 1e-10 * norm2(c));
  }
}

TEST(ClosedForm, HorizonBeyondActionsRejected) {
  const std::vector<Vector> actions(3, Vector{0.0});
  EXPECT_THROW(closed_form_state(hand_system(), Vector{1, 1, 1}, actions, 4), std::out_of_range);
}

TEST(TransientDecay, ScalarHalf) {
  EXPECT_EQ(transient_decay_steps(scalar_system(0.5), Vector{1.0}), 14u);
}

TEST(TransientDecay, StrictInequalityBoundary) {
  EXPECT_EQ(transient_decay_steps(scalar_system(0.1), Vector{1.0}), 5u);
}

TEST(TransientDecay, NonDecayingHitsCap) {
  EXPECT_FALSE(transient_decay_steps(scalar_system(1.0), Vector{1.0}, 1e-4, 1000).has_value());
}

TEST(TransientDecay, SampledMeanNearTableValue) {
  Rng rng(12);
  double total = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const LinearSystem sys = sample_state_space(0.5, 3, 1.0, false, true, rng);
    Vector s0(3);
    for (double& v : s0) v = rng.normal();
    total += static_cast<double>(*transient_decay_steps(sys, s0));
  }
  EXPECT_NEAR(total / 1000.0, 21.8, 0.3 * 21.8);
}

TEST(Lorenz, OriginIsEquilibrium) {
  EXPECT_EQ(lorenz_step(Vector{0, 0, 0}, LorenzParams{}), (Vector{0, 0, 0}));
}

TEST(Lorenz, NontrivialEquilibrium) {
  const LorenzParams p;
  const double c = std::sqrt(p.beta * (p.eta - 1.0));
  const Vector s = {c, c, p.eta - 1.0};
  EXPECT_LT(norm2(sub(lorenz_step(s, p), s)), 1e-9);
}

TEST(Lorenz, FourthOrderAgainstFineStepReference) {
  auto integrate = [](double dt) {
    LorenzParams p;
    p.dt = dt;
    Vector s = {1.0, 1.0, 1.0};
    const int steps = static_cast<int>(std::lround(1.0 / dt));
    for (int i = 0; i < steps; ++i) s = lorenz_step(s, p);
    return s;
  };
  const Vector ref = integrate(0.0001);
  auto err = [&](double dt) {
    const Vector s = integrate(dt);
    double e = 0.0;
    for (std::size_t d = 0; d < 3; ++d) e = std::max(e, std::abs(s[d] - ref[d]));
    return e;
  };
  const double e1 = err(0.0025);
  const double e2 = err(0.00125);
  EXPECT_LT(err(0.01), 1e-3);
  EXPECT_NEAR(std::log2(e1 / e2), 4.0, 0.3);
}

TEST(Lorenz, StaysInAttractorBox) {
  Rng rng(13);
  const auto trajs = generate_lorenz_dataset(5.0, 10.0, 3, 10000, LorenzParams{}, rng);
  for (const auto& t : trajs) {
    EXPECT_EQ(t.states.size(), 10001u);
    for (const auto& s : t.states) {
      ASSERT_LT(std::abs(s[0]), 50.0);
      ASSERT_LT(std::abs(s[1]), 50.0);
      ASSERT_GT(s[2], 0.0);
      ASSERT_LT(s[2], 60.0);
    }
  }
}

TEST(Lorenz, DatasetShapesAndDegenerateInterval) {
  Rng rng(14);
  const auto train = generate_lorenz_dataset(5.0, 10.0, 100, 500, LorenzParams{}, rng);
  ASSERT_EQ(train.size(), 100u);
  EXPECT_EQ(train[0].states.size(), 501u);
  EXPECT_EQ(train[0].action_dim(), 0u);
  const double eps = 1e-6;
  const auto tight = generate_lorenz_dataset(5.0 - eps, 5.0, 20, 1, LorenzParams{}, rng);
  for (const auto& a : tight) {
    for (const auto& b : tight) {
      EXPECT_LT(norm2(sub(a.states[0], b.states[0])), eps * std::sqrt(3.0));
    }
  }
  EXPECT_THROW(generate_lorenz_dataset(1.0, 1.0, 1, 1, LorenzParams{}, rng),
               std::invalid_argument);
}

TEST(DoubleIntegrator, ConstantVelocity) {
  Rng rng(15);
  const DoubleIntegrator di{1.0, 0.0};
  const auto traj = double_integrator_trajectory(di, 0.0, 3, rng, Vector{0.0, 1.0});
  for (std::size_t k = 0; k <= 3; ++k) EXPECT_DOUBLE_EQ(traj.states[k][0], double(k));
}

TEST(DoubleIntegrator, QuadraticSolution) {
  Rng rng(16);
  const auto traj = double_integrator_trajectory(DoubleIntegrator{1.0, 0.0}, 1.0, 10, rng);
  for (std::size_t k = 0; k <= 10; ++k) {
    EXPECT_DOUBLE_EQ(traj.states[k][0], 0.5 * double(k * k));
    EXPECT_EQ(traj.observations[k], traj.states[k]);
  }
}

TEST(DoubleIntegrator, ObservationMeanMonteCarlo) {
  Rng rng(17);
  const DoubleIntegrator di{0.5, 0.3};
  const int n = 100000;
  double sum = 0.0;
  double truth = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto traj = double_integrator_trajectory(di, 1.0, 4, rng);
    sum += traj.observations[4][0];
    truth = traj.states[4][0];
  }
  EXPECT_NEAR(sum / n, truth, 4.0 * 0.3 / std::sqrt(double(n)));
}

TEST(Snr, ZeroNoiseIsOne) {
  Rng rng(18);
  const auto traj = double_integrator_trajectory(DoubleIntegrator{0.5, 0.0}, 1.0, 10, rng);
  EXPECT_DOUBLE_EQ(snr_estimate(traj.states, traj.observations), 1.0);
}

TEST(Snr, ZeroSignalGivesZero) {
  Rng rng(19);
  const auto traj = double_integrator_trajectory(DoubleIntegrator{0.5, 1.0}, 0.0, 10, rng);
  EXPECT_EQ(snr_estimate(traj.states, traj.observations), 0.0);
}

TEST(Snr, IncreasesWithSampleTime) {
  double prev = 0.0;
  for (double dt : {0.25, 0.5, 0.75}) {
    Rng rng(20);
    double total = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const auto traj = double_integrator_trajectory(DoubleIntegrator{dt, 1.0}, 1.0, 5, rng);
      total += snr_estimate(traj.states, traj.observations);
    }
    EXPECT_GT(total / 1000.0, prev);
    prev = total / 1000.0;
  }
}

TEST(Snr, AllZeroChangesRejected) {
  const std::vector<Vector> same(3, Vector{1.0, 1.0});
  EXPECT_THROW(snr_estimate(same, same), NumericalError);
}

TEST(Cartpole, UprightEquilibrium) {
  Rng rng(21);
  EXPECT_EQ(cartpole_step(Cartpole{}, Vector{0, 0, 0, 0}, 0.0, rng, false), (Vector{0, 0, 0, 0}));
}

TEST(Cartpole, PoleFallsAway) {
  const Vector d = cartpole_derivative(Cartpole{}, Vector{0, 0, 0.05, 0}, 0.0);
  EXPECT_GT(d[3], 0.0);
}

TEST(Cartpole, EulerIsFirstOrder) {
  auto simulate = [](double dt) {
    Cartpole cp;
    cp.dt = dt;
    Rng rng(0);
    Vector s = {0, 0, 0.1, 0};
    const int steps = static_cast<int>(std::lround(0.4 / dt));
    for (int i = 0; i < steps; ++i) s = cartpole_step(cp, s, 0.5, rng, false);
    return s;
  };
  const Vector a = simulate(0.004);
  const Vector b = simulate(0.002);
  const Vector c = simulate(0.001);
  const double ratio = norm2(sub(a, b)) / norm2(sub(b, c));
  EXPECT_NEAR(ratio, 2.0, 0.2);
}

TEST(Cartpole, NoiseHalfWidth) {
  Rng rng(22);
  for (int k = 0; k < 1000; ++k) {
    const Vector s = cartpole_step(Cartpole{}, Vector{0, 0, 0, 0}, 0.0, rng, true);
    for (double v : s) {
      ASSERT_GE(v, -0.1);
      ASSERT_LT(v, 0.1);
    }
  }
}

// Roots of the characteristic polynomial of a 4x4 matrix via
// Faddeev-LeVerrier coefficients and Durand-Kerner iteration.
std::vector<std::complex<double>> eigenvalues4(const Matrix& m) {
  const std::size_t n = 4;
  std::vector<double> c(n + 1);
  c[n] = 1.0;
  Matrix mk(n, n);
  for (std::size_t k = 1; k <= n; ++k) {
    Matrix prod = m * mk;
    for (std::size_t i = 0; i < n; ++i) prod(i, i) += c[n - k + 1];
    mk = prod;
    const Matrix am = m * mk;
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) tr += am(i, i);
    c[n - k] = -tr / static_cast<double>(k);
  }
  std::vector<std::complex<double>> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = std::pow(std::complex<double>(0.4, 0.9), double(i));
  for (int it = 0; it < 500; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      std::complex<double> p = 1.0;
      for (std::size_t k = n; k-- > 0;) p = p * z[i] + c[k];
      std::complex<double> q = 1.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) q *= z[i] - z[j];
      z[i] -= p / q;
    }
  }
  return z;
}

TEST(Lqr, ClosedLoopIsStable) {
  const Cartpole cp;
  const LinearizedDynamics lin = cartpole_linearization(cp);
  for (double q : {0.5, 1.0, 2.0}) {
    for (double r : {0.5, 1.0, 2.0}) {
      const Matrix k = lqr_gains(cp, q, r);
      const Matrix closed = lin.a - lin.b * k;
      for (const auto& e : eigenvalues4(closed)) EXPECT_LT(std::abs(e), 1.0);
    }
  }
}

TEST(Lqr, GainShrinksAsControlCostGrows) {
  const Cartpole cp;
  double prev = INFINITY;
  for (double r : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
    const Matrix k = lqr_gains(cp, 1.0, r);
    const double norm = norm2(k.data());
    EXPECT_LT(norm, prev);
    prev = norm;
  }
}

TEST(Lqr, RiccatiResidual) {
  const Cartpole cp;
  const LinearizedDynamics lin = cartpole_linearization(cp);
  const LqrSolution sol = solve_lqr(cp, 1.0, 1.0);
  const Matrix& p = sol.riccati;
  const Matrix at = lin.a.transpose();
  const Matrix bt = lin.b.transpose();
  const Matrix r_plus = Matrix{{1.0}} + bt * p * lin.b;
  const Matrix gain = (1.0 / r_plus(0, 0)) * (bt * p * lin.a);
  const Matrix rhs = Matrix::identity(4) + at * p * lin.a - at * p * lin.b * gain;
  double scale = 1.0;
  for (double v : p.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_LT(std::abs(rhs.data()[i] - p.data()[i]) / scale, 1e-8);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(gain(0, i), sol.gain(0, i), 1e-8 * scale);
}

TEST(Lqr, NonPositiveScalesRejected) {
  EXPECT_THROW(lqr_gains(Cartpole{}, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(lqr_gains(Cartpole{}, 1.0, -1.0), std::invalid_argument);
}

TEST(Policy, RandomUniformAndFeedback) {
  Rng rng(23);
  const Policy uniform = RandomUniformPolicy{-2.0, 3.0, 2};
  for (int k = 0; k < 1000; ++k) {
    const Vector a = act(uniform, Vector{0, 0}, rng);
    ASSERT_EQ(a.size(), 2u);
    for (double v : a) {
      ASSERT_GE(v, -2.0);
      ASSERT_LT(v, 3.0);
    }
  }
  const Policy fb = LinearFeedbackPolicy{Matrix{{1.0, 2.0}}};
  EXPECT_EQ(act(fb, Vector{1.0, 1.0}, rng), (Vector{-3.0}));
  EXPECT_EQ(action_dim(fb), 1u);
  const Policy c = ConstantPolicy{{0.25}};
  EXPECT_EQ(act(c, Vector{9.0, 9.0}, rng), (Vector{0.25}));
}

TEST(Dataset, ShapeContract) {
  Rng rng(24);
  const LinearSystem proto = sample_state_space(0.5, 3, 1.0, false, false, rng);
  const auto trajs = generate_dataset(proto, RandomUniformPolicy{}, 100, 100, rng, true);
  ASSERT_EQ(trajs.size(), 100u);
  for (const auto& t : trajs) {
    EXPECT_EQ(t.states.size(), 101u);
    EXPECT_EQ(t.actions.size(), 100u);
    EXPECT_FALSE(t.diverged);
  }
  EXPECT_NE(trajs[0].system_seed, trajs[1].system_seed);
}

TEST(Dataset, ResampledSystemsKeepThePole) {
  Rng rng(25);
  const LinearSystem proto = sample_state_space(0.9, 5, 1.0, false, false, rng);
  const auto trajs = generate_dataset(proto, RandomUniformPolicy{}, 10, 5, rng, true);
  for (const auto& t : trajs) {
    const LinearSystem sys = sample_state_space(0.9, 5, 1.0, false, false, t.system_seed);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(sys.a(i, i), 0.9);
  }
}

TEST(Dataset, NilpotentSystemReachesZero) {
  // Pole 0 makes A strictly upper triangular; without inputs or noise every
  // state from step dim onwards is exactly zero.
  Rng rng(26);
  const LinearSystem proto = sample_state_space(0.0, 3, 0.0, false, true, rng);
  const auto trajs = generate_dataset(proto, RandomUniformPolicy{}, 5, 10, rng, true);
  for (const auto& t : trajs) {
    for (std::size_t k = 3; k < t.states.size(); ++k) EXPECT_EQ(t.states[k], (Vector{0, 0, 0}));
  }
}

TEST(Dataset, SeededReproducibility) {
  Rng a(27);
  Rng b(27);
  const LinearSystem pa = sample_state_space(0.5, 4, 1.0, false, false, a);
  const LinearSystem pb = sample_state_space(0.5, 4, 1.0, false, false, b);
  const auto ta = generate_dataset(pa, RandomUniformPolicy{}, 5, 20, a, true);
  const auto tb = generate_dataset(pb, RandomUniformPolicy{}, 5, 20, b, true);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(ta[i].states, tb[i].states);
    EXPECT_EQ(ta[i].actions, tb[i].actions);
  }
}

TEST(Dataset, DivergenceTruncatesAndFlags) {
  Rng rng(28);
  const LinearSystem proto = sample_state_space(1.5, 3, 1.0, false, false, rng);
  const auto trajs = generate_dataset(proto, RandomUniformPolicy{}, 3, 500, rng, true);
  for (const auto& t : trajs) {
    EXPECT_TRUE(t.diverged);
    EXPECT_LT(t.states.size(), 501u);
    EXPECT_EQ(t.states.size(), t.actions.size() + 1);
    for (const auto& s : t.states)
      for (double v : s) EXPECT_LE(std::abs(v), kDivergenceBound);
  }
}

TEST(Dataset, LabelStatisticsNearTable) {
  Rng rng(29);
  const LinearSystem proto = sample_state_space(0.5, 3, 1.0, false, true, rng);
  const auto trajs = generate_dataset(proto, RandomUniformPolicy{}, 100, 200, rng, true);
  double delta = 0.0;
  double state = 0.0;
  std::size_t n = 0;
  for (const auto& t : trajs) {
    for (std::size_t k = 0; k + 1 < t.states.size(); ++k) {
      delta += norm2(sub(t.states[k + 1], t.states[k]));
      state += norm2(t.states[k + 1]);
      ++n;
    }
  }
  EXPECT_NEAR(delta / double(n), 0.020, 0.5 * 0.020);
  EXPECT_NEAR(state / double(n), 0.033, 0.5 * 0.033);
}

TEST(Dataset, CartpoleTrajectoriesCarryPolicy) {
  Rng rng(30);
  const auto trajs = generate_cartpole_dataset(Cartpole{}, 5, 50, rng);
  for (const auto& t : trajs) {
    ASSERT_TRUE(t.policy.has_value());
    EXPECT_EQ(t.states.size(), 51u);
    EXPECT_EQ(t.action_dim(), 1u);
    EXPECT_FALSE(t.diverged);
  }
}

TEST(TrajectoryCsv, RoundTripIsExact) {
  Rng rng(31);
  const LinearSystem proto = sample_state_space(0.7, 3, 1.0, false, false, rng);
  const auto trajs = generate_dataset(proto, RandomUniformPolicy{}, 4, 7, rng, true);
  std::stringstream ss;
  write_trajectories_csv(ss, trajs);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  EXPECT_EQ(header, "traj_id,t,s_0,s_1,s_2,a_0");
  const auto back = read_trajectories_csv(ss);
  ASSERT_EQ(back.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back[i].states, trajs[i].states);
    EXPECT_EQ(back[i].actions, trajs[i].actions);
  }
}

TEST(TrajectoryCsv, ActionlessRoundTrip) {
  Rng rng(32);
  const auto trajs = generate_lorenz_dataset(5, 10, 2, 5, LorenzParams{}, rng);
  std::stringstream ss;
  write_trajectories_csv(ss, trajs);
  const auto back = read_trajectories_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].states, trajs[1].states);
  EXPECT_EQ(back[1].actions.size(), 5u);
  EXPECT_EQ(back[1].action_dim(), 0u);
}

}  // namespace
}  // namespace dynrollout
