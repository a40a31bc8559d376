#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fdisim/env.hpp"
#include "fdisim/errors.hpp"
#include "fdisim/nn.hpp"
#include "fdisim/rng.hpp"

namespace fdisim {

// =============================================================================
// Actor-critic with a factored categorical head
// =============================================================================
//
// The actor maps an observation to n + |kappa| logits: the first n form the
// target-bus factor, the rest the coefficient factor. The two categoricals
// are sampled independently, so log pi(a|s) = log p_target(i) + log p_coef(c).
// The critic is a separate network with a scalar head.

namespace detail {

/// Log-sum-exp stabilised softmax; fills probabilities and log-probabilities.
inline void softmax_logprobs(std::span<const double> logits, std::span<double> probs,
                             std::span<double> logps) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) {
      throw NumericOverflowError("non-finite logit in action head", 0);
    }
    max_logit = std::max(max_logit, z);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  const double log_sum = std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] /= sum;
    logps[i] = logits[i] - max_logit - log_sum;
  }
}

inline double entropy_of(std::span<const double> probs, std::span<const double> logps) {
  double h = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    h -= probs[i] * logps[i];
  }
  return h;
}

inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) {
      best = i;
    }
  }
  return best;
}

}  // namespace detail

/// The two independent factors of the action distribution at one state.
struct MultiCategoricalDist {
  std::vector<double> probs_target;
  std::vector<double> probs_coef;
  std::vector<double> logp_target;
  std::vector<double> logp_coef;

  [[nodiscard]] double log_prob(std::size_t target, std::size_t coef_index) const {
    return logp_target[target] + logp_coef[coef_index];
  }

  [[nodiscard]] double entropy() const {
    return detail::entropy_of(probs_target, logp_target) +
           detail::entropy_of(probs_coef, logp_coef);
  }

  /// Two categorical draws: target first, then coefficient.
  [[nodiscard]] std::pair<std::size_t, std::size_t> sample(Rng& rng) const {
    return {rng.categorical(probs_target), rng.categorical(probs_coef)};
  }

  /// Deterministic per-factor argmax; the lowest index wins ties.
  [[nodiscard]] std::pair<std::size_t, std::size_t> greedy() const {
    return {detail::argmax(probs_target), detail::argmax(probs_coef)};
  }
};

enum class ActionMode { kSample, kGreedy };

struct ActResult {
  AttackAction action;
  std::size_t target_index = 0;
  std::size_t coef_index = 0;
  double log_prob = 0.0;
  double value = 0.0;
};

/// Batched forward pass over recorded (observation, action) pairs, with
/// everything the PPO loss and its gradient need.
struct EvalBatch {
  std::vector<double> log_probs;
  std::vector<double> entropies;
  std::vector<double> values;
  // Per-sample factor tables, row-major over the batch.
  std::vector<double> probs_target;
  std::vector<double> logp_target;
  std::vector<double> probs_coef;
  std::vector<double> logp_coef;
  std::vector<double> entropy_target;
  std::vector<double> entropy_coef;
};

class Policy {
 public:
  Policy(std::size_t n, std::size_t kappa_size)
      : n_(n),
        kappa_size_(kappa_size),
        actor_(2 * n, kHidden, n + kappa_size),
        critic_(2 * n, kHidden, 1) {}

  /// Deterministic seeded initialisation (Rng stream 1). Output layers use a
  /// small gain so the initial action distribution is near uniform.
  static Policy init(std::uint64_t seed, std::size_t n, std::size_t kappa_size) {
    Policy policy(n, kappa_size);
    Rng rng(seed, /*stream=*/1);
    policy.actor_.init_weights(rng, kOutputGain);
    policy.critic_.init_weights(rng, kOutputGain);
    return policy;
  }

  std::size_t n() const { return n_; }
  std::size_t kappa_size() const { return kappa_size_; }
  std::size_t observation_size() const { return 2 * n_; }

  /// Action distribution at a single observation.
  MultiCategoricalDist distribution(std::span<const double> obs) {
    check_obs(obs.size());
    std::vector<double> x(obs.begin(), obs.end());
    std::vector<double> logits;
    actor_.forward(x, 1, logits);
    MultiCategoricalDist dist;
    dist.probs_target.resize(n_);
    dist.logp_target.resize(n_);
    dist.probs_coef.resize(kappa_size_);
    dist.logp_coef.resize(kappa_size_);
    detail::softmax_logprobs(std::span(logits).subspan(0, n_), dist.probs_target,
                             dist.logp_target);
    detail::softmax_logprobs(std::span(logits).subspan(n_, kappa_size_), dist.probs_coef,
                             dist.logp_coef);
    return dist;
  }

  /// Critic estimate at a single observation.
  double value(std::span<const double> obs) {
    check_obs(obs.size());
    std::vector<double> x(obs.begin(), obs.end());
    std::vector<double> v;
    critic_.forward(x, 1, v);
    return v[0];
  }

  /// Select an action. kGreedy takes the per-factor argmax and never touches
  /// the generator; kSample draws target then coefficient.
  ActResult act(std::span<const double> obs, std::span<const double> kappa, ActionMode mode,
                Rng* rng) {
    if (kappa.size() != kappa_size_) {
      throw UsageError("Policy::act: kappa size mismatch");
    }
    MultiCategoricalDist dist = distribution(obs);
    std::size_t ti = 0;
    std::size_t ci = 0;
    if (mode == ActionMode::kSample) {
      if (rng == nullptr) {
        throw UsageError("Policy::act: sampling requires an Rng");
      }
      std::tie(ti, ci) = dist.sample(*rng);
    } else {
      std::tie(ti, ci) = dist.greedy();
    }
    ActResult result;
    result.action = AttackAction{ti, kappa[ci]};
    result.target_index = ti;
    result.coef_index = ci;
    result.log_prob = dist.log_prob(ti, ci);
    result.value = value(obs);
    return result;
  }

  /// Forward a batch of observations and score the recorded action indices.
  /// Caches activations; backward_heads must be called before the next
  /// forward if gradients are wanted.
  EvalBatch evaluate_actions(const std::vector<double>& obs_batch,
                             std::span<const std::size_t> targets,
                             std::span<const std::size_t> coef_indices) {
    const std::size_t batch = targets.size();
    if (obs_batch.size() != batch * observation_size() || coef_indices.size() != batch) {
      throw UsageError("Policy::evaluate_actions: inconsistent batch shapes");
    }
    batch_ = batch;
    const std::size_t heads = n_ + kappa_size_;
    actor_.forward(obs_batch, batch, logits_);
    critic_.forward(obs_batch, batch, values_);

    EvalBatch eval;
    eval.log_probs.resize(batch);
    eval.entropies.resize(batch);
    eval.values.resize(batch);
    eval.probs_target.resize(batch * n_);
    eval.logp_target.resize(batch * n_);
    eval.probs_coef.resize(batch * kappa_size_);
    eval.logp_coef.resize(batch * kappa_size_);
    eval.entropy_target.resize(batch);
    eval.entropy_coef.resize(batch);

    for (std::size_t b = 0; b < batch; ++b) {
      if (targets[b] >= n_ || coef_indices[b] >= kappa_size_) {
        throw UsageError("Policy::evaluate_actions: action index out of range at sample " +
                         std::to_string(b));
      }
      std::span<const double> logit_row(logits_.data() + b * heads, heads);
      std::span<double> pt(eval.probs_target.data() + b * n_, n_);
      std::span<double> lt(eval.logp_target.data() + b * n_, n_);
      std::span<double> pc(eval.probs_coef.data() + b * kappa_size_, kappa_size_);
      std::span<double> lc(eval.logp_coef.data() + b * kappa_size_, kappa_size_);
      detail::softmax_logprobs(logit_row.subspan(0, n_), pt, lt);
      detail::softmax_logprobs(logit_row.subspan(n_, kappa_size_), pc, lc);
      eval.entropy_target[b] = detail::entropy_of(pt, lt);
      eval.entropy_coef[b] = detail::entropy_of(pc, lc);
      eval.log_probs[b] = lt[targets[b]] + lc[coef_indices[b]];
      eval.entropies[b] = eval.entropy_target[b] + eval.entropy_coef[b];
      eval.values[b] = values_[b];
    }
    return eval;
  }

  /// Backpropagate loss gradients at the heads of the last evaluate_actions
  /// batch: dlogits is batch x (n + |kappa|), dvalues is batch x 1.
  /// Gradients accumulate into the parameter buffers.
  void backward_heads(const std::vector<double>& dlogits, const std::vector<double>& dvalues) {
    if (dlogits.size() != batch_ * (n_ + kappa_size_) || dvalues.size() != batch_) {
      throw UsageError("Policy::backward_heads: gradient shapes do not match last batch");
    }
    actor_.backward(dlogits);
    critic_.backward(dvalues);
  }

  void zero_grad() {
    actor_.zero_grad();
    critic_.zero_grad();
  }

  /// Stable name -> tensor listing: actor.fc1..fc3 then critic.fc1..fc3,
  /// weight before bias.
  std::vector<ParamRef> parameter_refs() {
    std::vector<ParamRef> refs;
    actor_.collect_params("actor", refs);
    critic_.collect_params("critic", refs);
    return refs;
  }

  std::size_t parameter_count() {
    std::size_t total = 0;
    for (const auto& ref : parameter_refs()) {
      total += ref.value->size();
    }
    return total;
  }

  static constexpr std::size_t kHidden = 64;
  static constexpr double kOutputGain = 0.01;

 private:
  void check_obs(std::size_t got) const {
    if (got != observation_size()) {
      throw UsageError("Policy: observation has length " + std::to_string(got) + ", expected " +
                       std::to_string(observation_size()));
    }
  }

  std::size_t n_;
  std::size_t kappa_size_;
  Mlp actor_;
  Mlp critic_;
  std::size_t batch_ = 0;
  std::vector<double> logits_;
  std::vector<double> values_;
};

}  // namespace fdisim
