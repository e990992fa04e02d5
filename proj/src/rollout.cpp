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

#include "dynrollout/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace dynrollout {

namespace {

bool diverged_state(std::span<const double> s) {
  return std::any_of(s.begin(), s.end(), [](double v) {
    return !std::isfinite(v) || std::abs(v) > kDivergenceBound;
  });
}

template <class ActionFn>
RolloutResult rollout_impl(const DynamicsModel& model, std::span<const double> s0,
                           std::size_t horizon, ActionFn&& next_action) {
  RolloutResult result;
  result.predicted_states.reserve(horizon + 1);
  result.predicted_states.emplace_back(s0.begin(), s0.end());
  for (std::size_t t = 0; t < horizon; ++t) {
    const Vector& current = result.predicted_states.back();
    const Vector a = next_action(t, current);
    std::optional<Vector> next = predict(model, current, a);
    if (!next || diverged_state(*next)) {
      result.diverged_at = t + 1;
      break;
    }
    result.predicted_states.push_back(std::move(*next));
  }
  return result;
}

std::vector<bool> usable_dims(const StateRanges& ranges) {
  std::vector<bool> use(ranges.lo.size());
  bool any = false;
  for (std::size_t d = 0; d < use.size(); ++d) {
    use[d] = ranges.hi[d] > ranges.lo[d];
    any = any || use[d];
  }
  if (!any) throw std::invalid_argument("per-step error: every state dimension is degenerate");
  return use;
}

double normalized_error(std::span<const double> predicted, std::span<const double> truth,
                        const StateRanges& ranges, const std::vector<bool>& use) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t d = 0; d < use.size(); ++d) {
    if (!use[d]) continue;
    const double e = (predicted[d] - truth[d]) / (ranges.hi[d] - ranges.lo[d]);
    total += e * e;
    ++n;
  }
  const double mse = total / static_cast<double>(n);
  return std::isfinite(mse) ? std::min(mse, kErrorSentinel) : kErrorSentinel;
}

ErrorProfile summarize(const std::vector<Vector>& errors, std::size_t n_traj,
                       StateRanges ranges) {
  std::size_t horizon = 0;
  for (const auto& e : errors) horizon = std::max(horizon, e.size());
  ErrorProfile profile;
  profile.n_trajectories = n_traj;
  profile.ranges = std::move(ranges);
  Vector column;
  for (std::size_t t = 0; t < horizon; ++t) {
    column.clear();
    for (const auto& e : errors) {
      if (t < e.size()) column.push_back(e[t]);
    }
    profile.per_step.push_back(percentiles(column));
    profile.counts.push_back(column.size());
  }
  return profile;
}

}  // namespace

RolloutResult rollout_logged(const DynamicsModel& model, std::span<const double> s0,
                             std::span<const Vector> actions, std::size_t horizon) {
  if (horizon > actions.size()) {
    throw std::invalid_argument("rollout: horizon exceeds the logged action sequence");
  }
  return rollout_impl(model, s0, horizon,
                      [&](std::size_t t, const Vector&) { return actions[t]; });
}

RolloutResult rollout_recomputed(const DynamicsModel& model, const Policy& policy,
                                 std::span<const double> s0, std::size_t horizon, Rng& rng) {
  return rollout_impl(model, s0, horizon,
                      [&](std::size_t, const Vector& s) { return act(policy, s, rng); });
}

StateRanges compute_ranges(std::span<const Trajectory> trajectories) {
  StateRanges r;
  for (const auto& traj : trajectories) {
    for (const auto& s : traj.states) {
      if (r.lo.empty()) {
        r.lo = s;
        r.hi = s;
        continue;
      }
      if (s.size() != r.lo.size()) throw ShapeError("ranges: trajectories differ in width");
      for (std::size_t d = 0; d < s.size(); ++d) {
        r.lo[d] = std::min(r.lo[d], s[d]);
        r.hi[d] = std::max(r.hi[d], s[d]);
      }
    }
  }
  if (r.lo.empty()) throw std::invalid_argument("ranges: no states");
  return r;
}

Vector per_step_mse(const RolloutResult& predicted, const Trajectory& truth,
                    const StateRanges& ranges) {
  const std::vector<bool> use = usable_dims(ranges);
  const std::size_t horizon = truth.states.size() - 1;
  if (predicted.predicted_states.empty()) throw std::invalid_argument("empty rollout");
  if (predicted.predicted_states.size() > truth.states.size()) {
    throw ShapeError("rollout is longer than the reference trajectory");
  }
  if (!predicted.diverged_at && predicted.predicted_states.size() != truth.states.size()) {
    throw ShapeError("rollout length does not match the reference trajectory");
  }
  Vector errors(horizon, kErrorSentinel);
  for (std::size_t t = 1; t <= horizon; ++t) {
    if (predicted.diverged_at && t >= *predicted.diverged_at) break;
    errors[t - 1] = normalized_error(predicted.predicted_states[t], truth.states[t], ranges, use);
  }
  return errors;
}

Vector ErrorProfile::medians() const {
  Vector m;
  m.reserve(per_step.size());
  for (const auto& p : per_step) m.push_back(p.p50);
  return m;
}

ErrorProfile one_step_error_profile(const DynamicsModel& model,
                                    std::span<const Trajectory> trajectories) {
  return one_step_error_profile(model, trajectories, compute_ranges(trajectories));
}

ErrorProfile one_step_error_profile(const DynamicsModel& model,
                                    std::span<const Trajectory> trajectories,
                                    const StateRanges& ranges) {
  const std::vector<bool> use = usable_dims(ranges);
  std::vector<Vector> errors;
  errors.reserve(trajectories.size());
  for (const auto& traj : trajectories) {
    Vector e(traj.horizon());
    for (std::size_t t = 0; t < traj.horizon(); ++t) {
      const std::optional<Vector> next = predict(model, traj.states[t], traj.actions[t]);
      e[t] = next ? normalized_error(*next, traj.states[t + 1], ranges, use) : kErrorSentinel;
    }
    errors.push_back(std::move(e));
  }
  return summarize(errors, trajectories.size(), ranges);
}

ErrorProfile evaluate(const DynamicsModel& model, std::span<const Trajectory> test,
                      const RolloutMode& mode) {
  if (test.empty()) throw std::invalid_argument("evaluate: no test trajectories");
  StateRanges ranges = compute_ranges(test);
  std::vector<Vector> errors;
  errors.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Trajectory& traj = test[i];
    RolloutResult r;
    if (const auto* rec = std::get_if<RecomputedActions>(&mode)) {
      const Policy* policy = rec->policy ? &*rec->policy
                                         : (traj.policy ? &*traj.policy : nullptr);
      if (!policy) {
        throw std::invalid_argument("recomputed rollout: trajectory has no recorded policy");
      }
      Rng rng(derive_seed(rec->seed, i));
      r = rollout_recomputed(model, *policy, traj.states.front(), traj.horizon(), rng);
    } else {
      r = rollout_logged(model, traj.states.front(), traj.actions, traj.horizon());
    }
    errors.push_back(per_step_mse(r, traj, ranges));
  }
  return summarize(errors, test.size(), std::move(ranges));
}

double converged_median(const ErrorProfile& profile, std::size_t window) {
  if (profile.per_step.empty()) throw std::invalid_argument("empty profile");
  const std::size_t n = std::min(window, profile.per_step.size());
  double total = 0.0;
  for (std::size_t t = profile.per_step.size() - n; t < profile.per_step.size(); ++t) {
    total += profile.per_step[t].p50;
  }
  return total / static_cast<double>(n);
}

double tail_slope(const ErrorProfile& profile, std::size_t window) {
  const std::size_t n = std::min(window, profile.per_step.size());
  if (n < 2) throw std::invalid_argument("tail slope needs at least two steps");
  const std::size_t start = profile.per_step.size() - n;
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_x += static_cast<double>(i);
    mean_y += profile.per_step[start + i].p50;
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - mean_x;
    sxy += dx * (profile.per_step[start + i].p50 - mean_y);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

void write_profile_csv(std::ostream& os, const ErrorProfile& profile) {
  os << "step,p50,p65,p95,n\n";
  for (std::size_t t = 0; t < profile.per_step.size(); ++t) {
    const auto& p = profile.per_step[t];
    os << t + 1 << ',' << format_double(p.p50) << ',' << format_double(p.p65) << ','
       << format_double(p.p95) << ',' << profile.counts[t] << '\n';
  }
}

}  // namespace dynrollout
