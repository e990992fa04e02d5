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

// Multi-step prediction by feeding a one-step model its own output, and the
// range-normalized per-step error statistics used to compare models.

#ifndef DYNROLLOUT_ROLLOUT_HPP_
#define DYNROLLOUT_ROLLOUT_HPP_

#include <iosfwd>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "dynrollout/models.hpp"
#include "dynrollout/numerics.hpp"
#include "dynrollout/systems.hpp"

namespace dynrollout {

// Reported error for steps at or after a divergence; also the cap on any
// single normalized error.
inline constexpr double kErrorSentinel = 1e6;

struct RolloutResult {
  std::vector<Vector> predicted_states;  // index 0 is the initial state
  std::optional<std::size_t> diverged_at;
};

// Replays the logged actions a_0..a_(H-1).
RolloutResult rollout_logged(const DynamicsModel& model, std::span<const double> s0,
                             std::span<const Vector> actions, std::size_t horizon);
// a_t = policy(predicted s_t).
RolloutResult rollout_recomputed(const DynamicsModel& model, const Policy& policy,
                                 std::span<const double> s0, std::size_t horizon, Rng& rng);

struct StateRanges {
  Vector lo;
  Vector hi;
};

// Per-coordinate min/max over every state of every trajectory.
StateRanges compute_ranges(std::span<const Trajectory> trajectories);

// Error at steps 1..H: mean over non-degenerate coordinates of
// ((predicted - true) / range)^2, capped at kErrorSentinel.
Vector per_step_mse(const RolloutResult& predicted, const Trajectory& truth,
                    const StateRanges& ranges);

struct ErrorProfile {
  std::vector<PercentileSummary> per_step;
  std::vector<std::size_t> counts;  // trajectories contributing at each step
  std::size_t n_trajectories = 0;
  StateRanges ranges;

  std::size_t horizon() const { return per_step.size(); }
  Vector medians() const;
};

struct LoggedActions {};
// Without an explicit policy each trajectory's own recorded policy is used.
struct RecomputedActions {
  std::optional<Policy> policy;
  std::uint64_t seed = 0;
};
using RolloutMode = std::variant<LoggedActions, RecomputedActions>;

// Errors of single predictions s_t -> s_(t+1) at every time index.
ErrorProfile one_step_error_profile(const DynamicsModel& model,
                                    std::span<const Trajectory> trajectories);
ErrorProfile one_step_error_profile(const DynamicsModel& model,
                                    std::span<const Trajectory> trajectories,
                                    const StateRanges& ranges);

// Rolls out from each trajectory's initial state over its full horizon;
// ranges come from the evaluation set itself.
ErrorProfile evaluate(const DynamicsModel& model, std::span<const Trajectory> test,
                      const RolloutMode& mode = LoggedActions{});

// Mean of the median curve over the last `window` steps.
double converged_median(const ErrorProfile& profile, std::size_t window = 20);
// Least-squares slope of the median curve over the last `window` steps, per
// step.
double tail_slope(const ErrorProfile& profile, std::size_t window = 20);

// CSV with header step,p50,p65,p95,n; steps start at 1.
void write_profile_csv(std::ostream& os, const ErrorProfile& profile);

}  // namespace dynrollout

#endif  // DYNROLLOUT_ROLLOUT_HPP_
