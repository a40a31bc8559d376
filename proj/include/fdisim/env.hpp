#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fdisim/errors.hpp"
#include "fdisim/grid.hpp"
#include "fdisim/rng.hpp"

namespace fdisim {

// =============================================================================
// Episodic droop-tampering environment
// =============================================================================
//
// One episode plays a fixed number of Euler steps from a frozen initial
// condition. At every step the agent picks a single bus and a replacement
// droop coefficient for that bus; all other buses keep their designed
// coefficients, so the effective droop vector differs from the designed one
// in at most one entry. The reward compares the post-step frequency
// deviations against a precomputed no-attack baseline from the same initial
// condition.

/// One tampering action: replace the droop coefficient of `target` with
/// `coefficient` for a single step.
struct AttackAction {
  std::size_t target = 0;
  double coefficient = 0.0;
};

/// How the per-bus reward contribution compares attacked vs baseline states.
enum class RewardMode {
  kAbsDeviationDiff,  ///< |omega_i| - |omega_i^base|
  kSignedDiff,        ///< omega_i - omega_i^base
};

struct EpisodeConfig {
  std::size_t steps = 500;
  double dt = 0.01;
  double ic_noise_half_width = 0.03;
  std::uint64_t seed = 0;
  std::vector<double> kappa = {-1.0, 0.0, 1.0};  ///< allowed replacement coefficients
  RewardMode reward_mode = RewardMode::kAbsDeviationDiff;

  void validate() const {
    if (steps < 1) {
      throw ConfigError("episode.steps: must be >= 1");
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) {
      throw ConfigError("episode.dt: must be finite and > 0");
    }
    if (ic_noise_half_width < 0.0 || !std::isfinite(ic_noise_half_width)) {
      throw ConfigError("episode.ic_noise_half_width: must be finite and >= 0");
    }
    if (kappa.empty()) {
      throw ConfigError("episode.kappa: must not be empty");
    }
    for (std::size_t i = 0; i < kappa.size(); ++i) {
      if (!std::isfinite(kappa[i])) {
        throw ConfigError("episode.kappa[" + std::to_string(i) + "]: must be finite");
      }
    }
  }
};

/// Flat observation vector, laid out as [omega_0..omega_{n-1}, theta_0..theta_{n-1}].
struct Observation {
  std::vector<double> values;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  std::vector<double> per_bus_delta;
};

class Env {
 public:
  /// Freezes the episode: solves the equilibrium, applies uniform initial
  /// noise (Rng(seed, stream 0): n theta draws then n omega draws), and
  /// precomputes the no-attack baseline trajectory with the designed droop.
  /// The map from action sequences to rewards is deterministic afterwards.
  Env(GridParams params, EpisodeConfig episode)
      : params_(std::move(params)), cfg_(std::move(episode)) {
    params_.validate();
    cfg_.validate();

    initial_ = solve_equilibrium(params_);
    Rng rng(cfg_.seed, /*stream=*/0);
    const double hw = cfg_.ic_noise_half_width;
    for (std::size_t i = 0; i < params_.n; ++i) {
      initial_.theta[i] += rng.uniform(-hw, hw);
    }
    for (std::size_t i = 0; i < params_.n; ++i) {
      initial_.omega[i] += rng.uniform(-hw, hw);
    }

    baseline_ = simulate(params_, initial_, cfg_.steps, cfg_.dt);
    k_effective_.resize(params_.n);
    reset();
  }

  const GridParams& params() const { return params_; }
  const EpisodeConfig& episode_config() const { return cfg_; }
  std::size_t n() const { return params_.n; }
  const std::vector<double>& kappa() const { return cfg_.kappa; }

  const GridState& initial_state() const { return initial_; }
  const Trajectory& baseline() const { return baseline_; }
  const GridState& current_state() const { return state_; }
  std::size_t steps_taken() const { return step_count_; }
  bool done() const { return done_; }

  /// Observation dimension, 2n.
  std::size_t observation_size() const { return 2 * params_.n; }

  /// Restore the frozen initial condition and zero the step counter.
  Observation reset() {
    state_ = initial_;
    step_count_ = 0;
    done_ = false;
    cumulative_ = 0.0;
    return observe();
  }

  /// Apply one action, advance one Euler step, and score the post-step state
  /// against the baseline at the same index.
  ///
  /// Numeric overflow ends the episode early: done is reported true and the
  /// reward is computed from the last finite state reached.
  StepResult step(const AttackAction& action) {
    if (done_) {
      throw UsageError("Env::step called on a finished episode");
    }
    validate_action(action);

    for (std::size_t i = 0; i < params_.n; ++i) {
      k_effective_[i] = params_.droop[i];
    }
    k_effective_[action.target] = action.coefficient;

    bool overflowed = false;
    GridState next;
    try {
      next = euler_step(params_, state_, k_effective_, cfg_.dt);
      if (overflow_component(next)) {
        overflowed = true;
      }
    } catch (const NumericOverflowError&) {
      overflowed = true;
      next = {};  // non-finite derivative: no usable post-step state
    }

    const std::size_t compare_index = step_count_ + 1;
    if (!next.theta.empty()) {
      bool finite = true;
      for (std::size_t i = 0; i < params_.n && finite; ++i) {
        finite = std::isfinite(next.theta[i]) && std::isfinite(next.omega[i]);
      }
      if (finite) {
        state_ = std::move(next);
      }
    }
    step_count_ = compare_index;

    StepResult result;
    result.per_bus_delta.resize(params_.n);
    const GridState& base = baseline_.states[compare_index];
    for (std::size_t i = 0; i < params_.n; ++i) {
      if (cfg_.reward_mode == RewardMode::kAbsDeviationDiff) {
        result.per_bus_delta[i] = std::abs(state_.omega[i]) - std::abs(base.omega[i]);
      } else {
        result.per_bus_delta[i] = state_.omega[i] - base.omega[i];
      }
      result.reward += result.per_bus_delta[i];
    }
    cumulative_ += result.reward;

    done_ = overflowed || step_count_ == cfg_.steps;
    result.done = done_;
    result.observation = observe();
    return result;
  }

  /// Sum of all step rewards of the finished episode.
  double cumulative_reward() const {
    if (!done_) {
      throw UsageError("Env::cumulative_reward called mid-episode");
    }
    return cumulative_;
  }

 private:
  Observation observe() const {
    Observation obs;
    obs.values.resize(2 * params_.n);
    for (std::size_t i = 0; i < params_.n; ++i) {
      obs.values[i] = state_.omega[i];
      obs.values[params_.n + i] = state_.theta[i];
    }
    return obs;
  }

  void validate_action(const AttackAction& action) const {
    if (action.target >= params_.n) {
      throw UsageError("action.target " + std::to_string(action.target) +
                       " out of range for n=" + std::to_string(params_.n));
    }
    for (double allowed : cfg_.kappa) {
      if (action.coefficient == allowed) {
        return;
      }
    }
    throw UsageError("action.coefficient " + std::to_string(action.coefficient) +
                     " is not in the allowed set");
  }

  GridParams params_;
  EpisodeConfig cfg_;
  GridState initial_;
  Trajectory baseline_;
  GridState state_;
  std::vector<double> k_effective_;
  std::size_t step_count_ = 0;
  bool done_ = false;
  double cumulative_ = 0.0;
};

}  // namespace fdisim
