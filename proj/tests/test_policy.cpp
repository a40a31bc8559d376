#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "fdisim/nn.hpp"
#include "fdisim/policy.hpp"

#include "fd_check.hpp"

using namespace fdisim;
using Catch::Matchers::WithinAbs;

namespace {

constexpr std::size_t kN = 10;
constexpr std::size_t kKappa = 3;
const std::vector<double> kKappaValues = {-1.0, 0.0, 1.0};

std::vector<double> random_obs(Rng& rng, std::size_t n = kN) {
  std::vector<double> obs(2 * n);
  for (auto& x : obs) {
    x = rng.uniform(-0.3, 0.3);
  }
  return obs;
}

/// Force exactly uniform factors by zeroing the actor's output layer.
void zero_output_layer(Policy& policy) {
  for (auto& ref : policy.parameter_refs()) {
    if (ref.name == "actor.fc3.weight" || ref.name == "actor.fc3.bias") {
      std::fill(ref.value->begin(), ref.value->end(), 0.0);
    }
  }
}

}  // namespace

TEST_CASE("seeded initialisation is reproducible") {
  Policy a = Policy::init(7, kN, kKappa);
  Policy b = Policy::init(7, kN, kKappa);
  auto ra = a.parameter_refs();
  auto rb = b.parameter_refs();
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    REQUIRE(*ra[i].value == *rb[i].value);
  }
  Policy c = Policy::init(8, kN, kKappa);
  bool any_diff = false;
  auto rc = c.parameter_refs();
  for (std::size_t i = 0; i < ra.size(); ++i) {
    any_diff = any_diff || (*ra[i].value != *rc[i].value);
  }
  CHECK(any_diff);
}

TEST_CASE("initial action distribution is near uniform") {
  Policy policy = Policy::init(0, kN, kKappa);
  Rng rng(3);
  const double max_entropy = std::log(static_cast<double>(kN * kKappa));
  for (int trial = 0; trial < 20; ++trial) {
    auto obs = random_obs(rng);
    const double entropy = policy.distribution(obs).entropy();
    CHECK(entropy > 0.95 * max_entropy);
    CHECK(entropy <= max_entropy + 1e-12);
  }
}

TEST_CASE("zero output layer gives exactly uniform factors") {
  Policy policy = Policy::init(0, kN, kKappa);
  zero_output_layer(policy);
  Rng rng(4);
  auto obs = random_obs(rng);
  MultiCategoricalDist dist = policy.distribution(obs);
  for (double p : dist.probs_target) {
    CHECK_THAT(p, WithinAbs(1.0 / kN, 1e-15));
  }
  for (double p : dist.probs_coef) {
    CHECK_THAT(p, WithinAbs(1.0 / kKappa, 1e-15));
  }
  CHECK_THAT(dist.log_prob(3, 1), WithinAbs(-std::log(30.0), 1e-12));

  // greedy tie-break: lowest index wins
  ActResult greedy = policy.act(obs, kKappaValues, ActionMode::kGreedy, nullptr);
  CHECK(greedy.target_index == 0);
  CHECK(greedy.coef_index == 0);
  CHECK(greedy.action.coefficient == kKappaValues[0]);
}

TEST_CASE("factor distributions are valid simplexes for wild logits") {
  Policy policy = Policy::init(1, kN, kKappa);
  // inflate output weights to push logits around +-40
  for (auto& ref : policy.parameter_refs()) {
    if (ref.name == "actor.fc3.weight") {
      for (auto& w : *ref.value) {
        w *= 4.0e4;
      }
    }
  }
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto obs = random_obs(rng);
    MultiCategoricalDist dist = policy.distribution(obs);
    double sum_t = std::accumulate(dist.probs_target.begin(), dist.probs_target.end(), 0.0);
    double sum_c = std::accumulate(dist.probs_coef.begin(), dist.probs_coef.end(), 0.0);
    CHECK_THAT(sum_t, WithinAbs(1.0, 1e-12));
    CHECK_THAT(sum_c, WithinAbs(1.0, 1e-12));
    const double entropy = dist.entropy();
    CHECK(entropy >= 0.0);
    CHECK(entropy <= std::log(30.0) + 1e-12);
  }
}

TEST_CASE("greedy choice is invariant to constant logit shifts") {
  Policy policy = Policy::init(2, kN, kKappa);
  Rng rng(6);
  auto obs = random_obs(rng);
  ActResult before = policy.act(obs, kKappaValues, ActionMode::kGreedy, nullptr);
  for (auto& ref : policy.parameter_refs()) {
    if (ref.name == "actor.fc3.bias") {
      for (std::size_t i = 0; i < kN; ++i) {
        (*ref.value)[i] += 5.0;  // shift the whole target factor
      }
      for (std::size_t i = kN; i < kN + kKappa; ++i) {
        (*ref.value)[i] -= 3.0;  // and the whole coefficient factor
      }
    }
  }
  ActResult after = policy.act(obs, kKappaValues, ActionMode::kGreedy, nullptr);
  CHECK(before.target_index == after.target_index);
  CHECK(before.coef_index == after.coef_index);
}

TEST_CASE("log probability factorises over the two heads") {
  Policy policy = Policy::init(3, kN, kKappa);
  Rng rng(7);
  auto obs = random_obs(rng);
  MultiCategoricalDist dist = policy.distribution(obs);
  Rng sampler(8);
  ActResult act = policy.act(obs, kKappaValues, ActionMode::kSample, &sampler);
  CHECK(act.log_prob ==
        dist.logp_target[act.target_index] + dist.logp_coef[act.coef_index]);
}

TEST_CASE("sampling frequencies match the distribution") {
  Policy policy = Policy::init(4, kN, kKappa);
  Rng rng(9);
  auto obs = random_obs(rng);
  MultiCategoricalDist dist = policy.distribution(obs);

  const std::size_t draws = 100000;
  std::vector<double> count_t(kN, 0.0);
  std::vector<double> count_c(kKappa, 0.0);
  Rng sampler(10);
  for (std::size_t d = 0; d < draws; ++d) {
    auto [ti, ci] = dist.sample(sampler);
    count_t[ti] += 1.0;
    count_c[ci] += 1.0;
  }
  for (std::size_t i = 0; i < kN; ++i) {
    const double p = dist.probs_target[i];
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(draws));
    CHECK_THAT(count_t[i] / draws, WithinAbs(p, 3.0 * se + 1e-9));
  }
  for (std::size_t i = 0; i < kKappa; ++i) {
    const double p = dist.probs_coef[i];
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(draws));
    CHECK_THAT(count_c[i] / draws, WithinAbs(p, 3.0 * se + 1e-9));
  }
}

TEST_CASE("evaluate_actions agrees with act and handles sharp factors") {
  Policy policy = Policy::init(5, kN, kKappa);
  Rng rng(11);

  SECTION("consistency with act") {
    const std::size_t batch = 16;
    std::vector<double> obs_batch;
    std::vector<std::size_t> targets;
    std::vector<std::size_t> coefs;
    std::vector<double> expected_logp;
    std::vector<double> expected_value;
    Rng sampler(12);
    for (std::size_t b = 0; b < batch; ++b) {
      auto obs = random_obs(rng);
      ActResult act = policy.act(obs, kKappaValues, ActionMode::kSample, &sampler);
      obs_batch.insert(obs_batch.end(), obs.begin(), obs.end());
      targets.push_back(act.target_index);
      coefs.push_back(act.coef_index);
      expected_logp.push_back(act.log_prob);
      expected_value.push_back(act.value);
    }
    EvalBatch eval = policy.evaluate_actions(obs_batch, targets, coefs);
    for (std::size_t b = 0; b < batch; ++b) {
      REQUIRE(eval.log_probs[b] == expected_logp[b]);
      REQUIRE(eval.values[b] == expected_value[b]);
    }
  }

  SECTION("uniform factors have log(30) entropy") {
    zero_output_layer(policy);
    auto obs = random_obs(rng);
    EvalBatch eval = policy.evaluate_actions(obs, std::vector<std::size_t>{0},
                                             std::vector<std::size_t>{0});
    CHECK_THAT(eval.entropies[0], WithinAbs(std::log(30.0), 1e-12));
  }

  SECTION("one-hot factors drive entropy below 1e-6") {
    // bias +-20 logits: one spike per factor
    for (auto& ref : policy.parameter_refs()) {
      if (ref.name == "actor.fc3.weight") {
        std::fill(ref.value->begin(), ref.value->end(), 0.0);
      }
      if (ref.name == "actor.fc3.bias") {
        std::fill(ref.value->begin(), ref.value->end(), -20.0);
        (*ref.value)[2] = 20.0;
        (*ref.value)[kN + 1] = 20.0;
      }
    }
    auto obs = random_obs(rng);
    EvalBatch eval = policy.evaluate_actions(obs, std::vector<std::size_t>{2},
                                             std::vector<std::size_t>{1});
    CHECK(eval.entropies[0] < 1e-6);
    CHECK(eval.entropies[0] >= 0.0);
  }

  SECTION("out-of-range action indices are rejected") {
    auto obs = random_obs(rng);
    CHECK_THROWS_AS(policy.evaluate_actions(obs, std::vector<std::size_t>{kN},
                                            std::vector<std::size_t>{0}),
                    UsageError);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Policy policy = Policy::init(6, kN, kKappa);
  RolloutBuffer buf = test_helpers::synthetic_buffer(policy, 16, 13);
  PPOConfig cfg;
  std::vector<std::size_t> indices(buf.steps);
  std::iota(indices.begin(), indices.end(), 0);

  // subsampled sweep across every tensor
  auto report = test_helpers::finite_difference_check(policy, buf, cfg, indices, 1e-5, 37);
  INFO("checked " << report.parameters_checked << " parameters");
  CHECK(report.worst_rel_err < 1e-4);
}

TEST_CASE("loss gradients scale linearly and vanish for constant losses") {
  Policy policy = Policy::init(7, kN, kKappa);
  RolloutBuffer buf = test_helpers::synthetic_buffer(policy, 8, 14);
  std::vector<std::size_t> indices(buf.steps);
  std::iota(indices.begin(), indices.end(), 0);

  SECTION("zero advantages and zero coefficients give zero gradients") {
    std::fill(buf.advantages.begin(), buf.advantages.end(), 0.0);
    PPOConfig cfg;
    cfg.value_loss_coef = 0.0;
    cfg.entropy_coef = 0.0;
    policy.zero_grad();
    ppo_loss(policy, buf, indices, cfg, true);
    for (const auto& ref : policy.parameter_refs()) {
      for (double g : *ref.grad) {
        REQUIRE(g == 0.0);
      }
    }
  }

  SECTION("doubling the value coefficient doubles the critic gradient") {
    PPOConfig cfg;
    cfg.entropy_coef = 0.0;
    policy.zero_grad();
    ppo_loss(policy, buf, indices, cfg, true);
    std::vector<double> critic_grad;
    for (const auto& ref : policy.parameter_refs()) {
      if (ref.name == "critic.fc1.weight") {
        critic_grad = *ref.grad;
      }
    }
    cfg.value_loss_coef *= 2.0;
    policy.zero_grad();
    ppo_loss(policy, buf, indices, cfg, true);
    for (const auto& ref : policy.parameter_refs()) {
      if (ref.name == "critic.fc1.weight") {
        for (std::size_t i = 0; i < critic_grad.size(); ++i) {
          REQUIRE_THAT((*ref.grad)[i], WithinAbs(2.0 * critic_grad[i], 1e-15));
        }
      }
    }
  }
}

TEST_CASE("adam updates follow the bias-corrected rule") {
  SECTION("zero gradients leave parameters unchanged") {
    Policy policy = Policy::init(8, kN, kKappa);
    auto refs = policy.parameter_refs();
    std::vector<std::vector<double>> before;
    for (const auto& ref : refs) {
      before.push_back(*ref.value);
    }
    Adam adam(refs);
    policy.zero_grad();
    adam.step(refs);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      REQUIRE(*refs[i].value == before[i]);
    }
  }

  SECTION("first step with unit gradient moves by the learning rate") {
    std::vector<double> value = {1.0};
    std::vector<double> grad = {1.0};
    std::vector<ParamRef> refs = {{"w", {1}, &value, &grad}};
    AdamConfig cfg;
    Adam adam(refs, cfg);
    adam.step(refs);
    // bias-corrected m_hat = 1, v_hat = 1: step = lr / (1 + eps)
    CHECK_THAT(value[0], WithinAbs(1.0 - cfg.learning_rate, 1e-11));
  }

  SECTION("non-finite gradients reject the update") {
    std::vector<double> value = {1.0};
    std::vector<double> grad = {std::nan("")};
    std::vector<ParamRef> refs = {{"w", {1}, &value, &grad}};
    Adam adam(refs);
    CHECK_THROWS_AS(adam.step(refs), NumericOverflowError);
    CHECK(value[0] == 1.0);
  }

  SECTION("identical seeds give identical optimisation trajectories") {
    auto run = [&]() {
      Policy policy = Policy::init(9, kN, kKappa);
      RolloutBuffer buf = test_helpers::synthetic_buffer(policy, 8, 15);
      std::vector<std::size_t> indices(buf.steps);
      std::iota(indices.begin(), indices.end(), 0);
      Adam adam(policy.parameter_refs());
      PPOConfig cfg;
      for (int step = 0; step < 5; ++step) {
        policy.zero_grad();
        ppo_loss(policy, buf, indices, cfg, true);
        auto refs = policy.parameter_refs();
        adam.step(refs);
      }
      std::vector<double> flat;
      for (const auto& ref : policy.parameter_refs()) {
        flat.insert(flat.end(), ref.value->begin(), ref.value->end());
      }
      return flat;
    };
    REQUIRE(run() == run());
  }
}
