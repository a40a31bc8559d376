#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdisim/env.hpp"
#include "fdisim/errors.hpp"
#include "fdisim/nn.hpp"
#include "fdisim/policy.hpp"
#include "fdisim/rng.hpp"

namespace fdisim {

// =============================================================================
// Clipped-surrogate policy optimisation
// =============================================================================
//
// Per update: collect an on-policy rollout, estimate advantages with GAE,
// normalise them across the buffer, then run several epochs of shuffled
// minibatch ascent on
//
//     min(y_t A_t, clip(y_t, 1-eps, 1+eps) A_t) - c_V L_V + c_H H
//
// with y_t the probability ratio against the rollout policy, L_V the mean
// squared value error and H the summed factor entropies.

struct PPOConfig {
  double clip_epsilon = 0.2;
  double value_loss_coef = 0.5;   ///< c_V
  double entropy_coef = 0.001;    ///< c_H
  double learning_rate = 3e-4;
  double gamma = 0.95;
  double gae_lambda = 0.95;
  std::size_t rollout_steps = 2000;
  std::size_t minibatch_size = 64;
  std::size_t update_epochs = 10;
  std::size_t total_env_steps = 400000;
  std::uint64_t seed = 0;
  /// Updates between interval checkpoints; 0 keeps only the final one.
  std::size_t checkpoint_interval = 0;
  /// Joint gradient L2 cap per minibatch; 0 disables clipping.
  double max_grad_norm = 0.5;

  void validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
      throw ConfigError("ppo.clip_epsilon: must lie in (0, 1)");
    }
    if (!(gamma > 0.0 && gamma <= 1.0)) {
      throw ConfigError("ppo.gamma: must lie in (0, 1]");
    }
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
      throw ConfigError("ppo.gae_lambda: must lie in [0, 1]");
    }
    if (rollout_steps == 0) {
      throw ConfigError("ppo.rollout_steps: must be >= 1");
    }
    if (minibatch_size == 0 || minibatch_size > rollout_steps) {
      throw ConfigError("ppo.minibatch_size: must lie in [1, rollout_steps]");
    }
    if (update_epochs == 0) {
      throw ConfigError("ppo.update_epochs: must be >= 1");
    }
    if (total_env_steps == 0) {
      throw ConfigError("ppo.total_env_steps: must be >= 1");
    }
    if (!(learning_rate > 0.0)) {
      throw ConfigError("ppo.learning_rate: must be > 0");
    }
    if (!(value_loss_coef >= 0.0) || !(entropy_coef >= 0.0) || !(max_grad_norm >= 0.0)) {
      throw ConfigError("ppo coefficients must be >= 0");
    }
  }
};

/// On-policy experience of one rollout.
struct RolloutBuffer {
  std::size_t steps = 0;
  std::size_t obs_dim = 0;
  std::vector<double> observations;  ///< steps x obs_dim, row-major
  std::vector<std::size_t> targets;
  std::vector<std::size_t> coef_indices;
  std::vector<double> log_probs_old;
  std::vector<double> values_old;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  /// Critic value of the state after the final step; 0 when that step ended
  /// an episode (fixed-length episodes are hard terminals).
  double bootstrap_value = 0.0;
  std::vector<double> advantages;
  std::vector<double> returns;
  /// Cumulative rewards of episodes that finished inside this rollout.
  std::vector<double> episode_returns;
};

/// Play `steps` sampled actions, resetting the environment whenever an
/// episode ends. Action sampling consumes the given generator only.
inline RolloutBuffer collect_rollout(Env& env, Policy& policy, std::size_t steps, Rng& rng) {
  if (policy.n() != env.n() || policy.kappa_size() != env.kappa().size()) {
    throw UsageError("collect_rollout: policy and environment shapes do not match");
  }
  RolloutBuffer buf;
  buf.steps = steps;
  buf.obs_dim = env.observation_size();
  buf.observations.resize(steps * buf.obs_dim);
  buf.targets.resize(steps);
  buf.coef_indices.resize(steps);
  buf.log_probs_old.resize(steps);
  buf.values_old.resize(steps);
  buf.rewards.resize(steps);
  buf.dones.resize(steps);

  Observation obs = env.done() || env.steps_taken() == 0 ? env.reset() : Observation{};
  if (obs.values.empty()) {
    // mid-episode continuation from a previous rollout
    obs.values.resize(buf.obs_dim);
    const GridState& s = env.current_state();
    for (std::size_t i = 0; i < env.n(); ++i) {
      obs.values[i] = s.omega[i];
      obs.values[env.n() + i] = s.theta[i];
    }
  }

  double episode_return = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy(obs.values.begin(), obs.values.end(), buf.observations.begin() + t * buf.obs_dim);
    ActResult act = policy.act(obs.values, env.kappa(), ActionMode::kSample, &rng);
    StepResult step;
    try {
      step = env.step(act.action);
    } catch (Error& err) {
      throw UsageError("collect_rollout: env failed at rollout step " + std::to_string(t) +
                       ": " + err.what());
    }
    buf.targets[t] = act.target_index;
    buf.coef_indices[t] = act.coef_index;
    buf.log_probs_old[t] = act.log_prob;
    buf.values_old[t] = act.value;
    buf.rewards[t] = step.reward;
    buf.dones[t] = step.done ? 1 : 0;
    episode_return += step.reward;
    if (step.done) {
      buf.episode_returns.push_back(episode_return);
      episode_return = 0.0;
      obs = env.reset();
    } else {
      obs = std::move(step.observation);
    }
  }
  buf.bootstrap_value = buf.dones[steps - 1] ? 0.0 : policy.value(obs.values);
  return buf;
}

/// Backward GAE recursion: delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t),
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}; returns_t = A_t + V(s_t).
inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  const std::size_t steps = buf.steps;
  buf.advantages.assign(steps, 0.0);
  buf.returns.assign(steps, 0.0);
  double next_value = buf.bootstrap_value;
  double carried = 0.0;
  for (std::size_t t = steps; t-- > 0;) {
    const double nonterminal = buf.dones[t] ? 0.0 : 1.0;
    const double delta = buf.rewards[t] + gamma * next_value * nonterminal - buf.values_old[t];
    carried = delta + gamma * lambda * nonterminal * carried;
    buf.advantages[t] = carried;
    buf.returns[t] = carried + buf.values_old[t];
    next_value = buf.values_old[t];
  }
}

/// In-place standardisation to mean 0, std 1 (epsilon-guarded denominator).
inline void normalize_advantages(std::span<double> advantages) {
  if (advantages.empty()) {
    return;
  }
  const double count = static_cast<double>(advantages.size());
  double mean = 0.0;
  for (double a : advantages) {
    mean += a;
  }
  mean /= count;
  double var = 0.0;
  for (double a : advantages) {
    var += (a - mean) * (a - mean);
  }
  const double std_dev = std::sqrt(var / count);
  for (double& a : advantages) {
    a = (a - mean) / (std_dev + 1e-8);
  }
}

struct LossTerms {
  double policy_loss = 0.0;  ///< -mean(min(y A, clip(y) A))
  double value_loss = 0.0;   ///< mean squared value error
  double entropy = 0.0;      ///< mean summed factor entropy
  double total = 0.0;        ///< policy_loss + c_V value_loss - c_H entropy
};

/// Loss of one minibatch, selected by `indices` into the buffer. With
/// `with_grad` the exact parameter gradients are accumulated into the
/// policy's gradient buffers (zero them first).
inline LossTerms ppo_loss(Policy& policy, const RolloutBuffer& buf,
                          std::span<const std::size_t> indices, const PPOConfig& cfg,
                          bool with_grad) {
  const std::size_t batch = indices.size();
  const std::size_t n = policy.n();
  const std::size_t kappa_size = policy.kappa_size();
  const std::size_t obs_dim = policy.observation_size();

  std::vector<double> obs(batch * obs_dim);
  std::vector<std::size_t> targets(batch);
  std::vector<std::size_t> coefs(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t src = indices[b];
    std::copy_n(buf.observations.begin() + src * obs_dim, obs_dim, obs.begin() + b * obs_dim);
    targets[b] = buf.targets[src];
    coefs[b] = buf.coef_indices[src];
  }

  EvalBatch eval = policy.evaluate_actions(obs, targets, coefs);

  LossTerms terms;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  std::vector<double> grad_logp(with_grad ? batch : 0);
  std::vector<double> dvalues(with_grad ? batch : 0);

  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t src = indices[b];
    const double adv = buf.advantages[src];
    const double ratio = std::exp(eval.log_probs[b] - buf.log_probs_old[src]);
    const double unclipped = ratio * adv;
    const double clipped =
        std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv;
    terms.policy_loss -= std::min(unclipped, clipped) * inv_batch;

    const double value_err = eval.values[b] - buf.returns[src];
    terms.value_loss += value_err * value_err * inv_batch;
    terms.entropy += eval.entropies[b] * inv_batch;

    if (with_grad) {
      grad_logp[b] = unclipped <= clipped ? -adv * ratio * inv_batch : 0.0;
      dvalues[b] = cfg.value_loss_coef * 2.0 * value_err * inv_batch;
    }
  }
  terms.total =
      terms.policy_loss + cfg.value_loss_coef * terms.value_loss - cfg.entropy_coef * terms.entropy;

  if (!std::isfinite(terms.total)) {
    throw NumericOverflowError(
        "non-finite PPO loss (policy=" + std::to_string(terms.policy_loss) +
            ", value=" + std::to_string(terms.value_loss) +
            ", entropy=" + std::to_string(terms.entropy) + ")",
        0);
  }

  if (with_grad) {
    const std::size_t heads = n + kappa_size;
    std::vector<double> dlogits(batch * heads, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const double g = grad_logp[b];
      double* dz_t = dlogits.data() + b * heads;
      double* dz_c = dz_t + n;
      const double* pt = eval.probs_target.data() + b * n;
      const double* lt = eval.logp_target.data() + b * n;
      const double* pc = eval.probs_coef.data() + b * kappa_size;
      const double* lc = eval.logp_coef.data() + b * kappa_size;
      // d log pi / d z_j = [j == chosen] - p_j;
      // d H / d z_j = -p_j (log p_j + H) enters with weight -c_H.
      for (std::size_t j = 0; j < n; ++j) {
        dz_t[j] = g * ((j == targets[b] ? 1.0 : 0.0) - pt[j]) +
                  cfg.entropy_coef * inv_batch * pt[j] * (lt[j] + eval.entropy_target[b]);
      }
      for (std::size_t j = 0; j < kappa_size; ++j) {
        dz_c[j] = g * ((j == coefs[b] ? 1.0 : 0.0) - pc[j]) +
                  cfg.entropy_coef * inv_batch * pc[j] * (lc[j] + eval.entropy_coef[b]);
      }
    }
    policy.backward_heads(dlogits, dvalues);
  }
  return terms;
}

/// Sample-weighted means of the loss terms seen during one update.
struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

/// One PPO update over a completed buffer: normalise advantages across the
/// buffer, then update_epochs passes of shuffled minibatches.
inline UpdateStats ppo_update(Policy& policy, Adam& adam, RolloutBuffer& buf,
                              const PPOConfig& cfg, Rng& shuffle_rng) {
  if (buf.advantages.size() != buf.steps || buf.returns.size() != buf.steps) {
    throw UsageError("ppo_update: advantages not computed; run compute_gae first");
  }
  normalize_advantages(buf.advantages);

  std::vector<ParamRef> refs = policy.parameter_refs();
  std::vector<std::size_t> order(buf.steps);
  std::iota(order.begin(), order.end(), 0);

  UpdateStats stats;
  double samples_seen = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < buf.steps; start += cfg.minibatch_size) {
      const std::size_t count = std::min(cfg.minibatch_size, buf.steps - start);
      std::span<const std::size_t> indices(order.data() + start, count);
      policy.zero_grad();
      LossTerms terms = ppo_loss(policy, buf, indices, cfg, /*with_grad=*/true);
      if (cfg.max_grad_norm > 0.0) {
        Adam::clip_grad_norm(refs, cfg.max_grad_norm);
      }
      adam.step(refs);
      const double w = static_cast<double>(count);
      stats.policy_loss += terms.policy_loss * w;
      stats.value_loss += terms.value_loss * w;
      stats.entropy += terms.entropy * w;
      samples_seen += w;
    }
  }
  stats.policy_loss /= samples_seen;
  stats.value_loss /= samples_seen;
  stats.entropy /= samples_seen;
  return stats;
}

// =============================================================================
// Training driver
// =============================================================================

struct TrainingMetricsRow {
  std::size_t global_step = 0;
  double mean_episode_reward = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

struct EvaluationResult {
  std::vector<AttackAction> schedule;
  Trajectory trajectory;
  double cumulative_reward = 0.0;
};

/// Greedy rollout of a policy through one episode: the per-step schedule,
/// the full system response, and the cumulative reward. Deterministic.
inline EvaluationResult evaluate_policy(Policy& policy, Env& env) {
  if (policy.n() != env.n() || policy.kappa_size() != env.kappa().size()) {
    throw UsageError("evaluate_policy: policy and environment shapes do not match");
  }
  EvaluationResult result;
  Observation obs = env.reset();
  result.trajectory.dt = env.episode_config().dt;
  result.trajectory.states.push_back(env.current_state());
  while (!env.done()) {
    ActResult act = policy.act(obs.values, env.kappa(), ActionMode::kGreedy, nullptr);
    StepResult step = env.step(act.action);
    result.schedule.push_back(act.action);
    result.trajectory.states.push_back(env.current_state());
    obs = std::move(step.observation);
  }
  result.cumulative_reward = env.cumulative_reward();
  return result;
}

/// Why a checkpoint callback fired.
enum class CheckpointReason { kInterval, kFinal };

struct TrainCallbacks {
  /// Invoked for interval checkpoints and once after the last update.
  std::function<void(CheckpointReason, std::size_t update_index, Policy&, Adam&)> on_checkpoint;
  /// Invoked after every update with the freshly appended metrics row.
  std::function<void(const TrainingMetricsRow&)> on_metrics;
};

struct TrainResult {
  Policy policy;                           ///< parameters after the last update
  std::vector<TrainingMetricsRow> metrics;
  Policy best_policy;                      ///< highest greedy-return snapshot
  double best_greedy_reward = 0.0;
  std::size_t best_update = 0;             ///< 1-based update index of the snapshot
};

/// Full training run: repeat collect / GAE / update until total_env_steps
/// environment steps have been simulated (full rollouts, so the step count
/// rounds up to a multiple of rollout_steps). After every update the policy
/// is scored by a greedy episode on a separate identically-frozen
/// environment and the best snapshot is retained.
///
/// Randomness: policy init uses Rng(seed, 1), action sampling Rng(seed, 2),
/// minibatch shuffling Rng(seed, 3). Two runs with identical inputs produce
/// identical metrics, checkpoints, and snapshots.
inline TrainResult train(const GridParams& params, const EpisodeConfig& episode,
                         const PPOConfig& cfg, const TrainCallbacks& callbacks = {}) {
  cfg.validate();
  Env env(params, episode);
  Env eval_env(params, episode);
  Policy policy = Policy::init(cfg.seed, params.n, episode.kappa.size());
  Adam adam(policy.parameter_refs(), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  Rng rollout_rng(cfg.seed, /*stream=*/2);
  Rng shuffle_rng(cfg.seed, /*stream=*/3);

  TrainResult result{policy, {}, policy, 0.0, 0};
  bool have_best = false;
  double last_mean_episode = 0.0;

  std::size_t steps_done = 0;
  std::size_t update_index = 0;
  while (steps_done < cfg.total_env_steps) {
    RolloutBuffer buf = collect_rollout(env, policy, cfg.rollout_steps, rollout_rng);
    steps_done += cfg.rollout_steps;
    ++update_index;
    compute_gae(buf, cfg.gamma, cfg.gae_lambda);
    UpdateStats stats = ppo_update(policy, adam, buf, cfg, shuffle_rng);

    if (!buf.episode_returns.empty()) {
      last_mean_episode =
          std::accumulate(buf.episode_returns.begin(), buf.episode_returns.end(), 0.0) /
          static_cast<double>(buf.episode_returns.size());
    }
    TrainingMetricsRow row{steps_done, last_mean_episode, stats.policy_loss, stats.value_loss,
                           stats.entropy};
    result.metrics.push_back(row);
    if (callbacks.on_metrics) {
      callbacks.on_metrics(row);
    }

    EvaluationResult greedy = evaluate_policy(policy, eval_env);
    if (!have_best || greedy.cumulative_reward > result.best_greedy_reward) {
      have_best = true;
      result.best_policy = policy;
      result.best_greedy_reward = greedy.cumulative_reward;
      result.best_update = update_index;
    }

    if (callbacks.on_checkpoint && cfg.checkpoint_interval > 0 &&
        update_index % cfg.checkpoint_interval == 0) {
      callbacks.on_checkpoint(CheckpointReason::kInterval, update_index, policy, adam);
    }
  }
  if (callbacks.on_checkpoint) {
    callbacks.on_checkpoint(CheckpointReason::kFinal, update_index, policy, adam);
  }
  result.policy = policy;
  return result;
}

}  // namespace fdisim
