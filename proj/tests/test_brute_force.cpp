#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "fdisim/brute_force.hpp"
#include "fdisim/text.hpp"

#include "helpers.hpp"

using namespace fdisim;

namespace {

EpisodeConfig default_episode() {
  EpisodeConfig cfg;
  cfg.steps = 500;
  cfg.seed = 0;
  return cfg;
}

}  // namespace

TEST_CASE("enumerator covers the full constant-action grid") {
  GridParams p = default_10bus();
  EpisodeConfig cfg = default_episode();
  auto results = enumerate_constant_attacks(p, cfg);
  REQUIRE(results.size() == 30);

  std::set<std::size_t> ranks;
  std::set<std::pair<std::size_t, std::size_t>> actions;
  for (const auto& row : results) {
    ranks.insert(row.rank);
    actions.insert({row.action.target, row.coefficient_index});
  }
  CHECK(ranks.size() == 30);
  CHECK(*ranks.begin() == 1);
  CHECK(*ranks.rbegin() == 30);
  CHECK(actions.size() == 30);

  for (std::size_t i = 0; i + 1 < results.size(); ++i) {
    CHECK(results[i].cumulative_reward >= results[i + 1].cumulative_reward);
  }
}

TEST_CASE("enumerator rewards equal independent environment rollouts") {
  GridParams p = default_10bus();
  EpisodeConfig cfg = default_episode();
  cfg.steps = 200;
  auto results = enumerate_constant_attacks(p, cfg);
  for (const auto& row : results) {
    Env env(p, cfg);
    env.reset();
    while (!env.done()) {
      env.step(row.action);
    }
    REQUIRE(env.cumulative_reward() == row.cumulative_reward);
  }
}

TEST_CASE("negative coefficients dominate on the shipped system") {
  GridParams p = default_10bus();
  auto results = enumerate_constant_attacks(p, default_episode());

  CHECK(results.front().action.coefficient == -1.0);

  auto best_with = [&](double coefficient) {
    double best = -1e300;
    for (const auto& row : results) {
      if (row.action.coefficient == coefficient) {
        best = std::max(best, row.cumulative_reward);
      }
    }
    return best;
  };
  const double best_neg = best_with(-1.0);
  const double best_zero = best_with(0.0);
  const double best_pos = best_with(1.0);
  CHECK(best_neg > best_zero);
  CHECK(best_neg > best_pos);

  // the null-equivalent action (bus 4, designed droop exactly 1.0) scores 0
  bool found_null = false;
  for (const auto& row : results) {
    if (row.action.target == 4 && row.action.coefficient == 1.0) {
      found_null = true;
      CHECK(row.cumulative_reward == 0.0);
    }
  }
  CHECK(found_null);
}

TEST_CASE("ranking export is deterministic and parses back exactly") {
  GridParams p = default_10bus();
  EpisodeConfig cfg = default_episode();
  cfg.steps = 100;
  auto results = enumerate_constant_attacks(p, cfg);

  test_helpers::TempDir dir("ranking");
  const auto path = dir.path() / "ranking.csv";
  export_ranking_csv(results, path);

  auto lines = test_helpers::read_lines(path);
  REQUIRE(lines.size() == 31);
  CHECK(lines[0] == "rank,target_bus,coefficient,cumulative_reward");
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto fields = test_helpers::split_csv_line(lines[i + 1]);
    REQUIRE(fields.size() == 4);
    CHECK(std::stoul(fields[0]) == results[i].rank);
    CHECK(std::stoul(fields[1]) == results[i].action.target);
    CHECK(parse_double(fields[2]) == results[i].action.coefficient);
    CHECK(parse_double(fields[3]) == results[i].cumulative_reward);
  }

  const auto copy = dir.path() / "ranking2.csv";
  export_ranking_csv(results, copy);
  CHECK(test_helpers::read_file(path) == test_helpers::read_file(copy));
}

TEST_CASE("ranking json mirrors the csv fields") {
  GridParams p = default_10bus();
  EpisodeConfig cfg = default_episode();
  cfg.steps = 50;
  auto results = enumerate_constant_attacks(p, cfg);

  test_helpers::TempDir dir("ranking_json");
  const auto path = dir.path() / "ranking.json";
  export_ranking_json(results, path);

  std::ifstream in(path);
  nlohmann::json doc = nlohmann::json::parse(in);
  REQUIRE(doc.at("results").size() == results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& row = doc.at("results")[i];
    CHECK(row.at("rank").get<std::size_t>() == results[i].rank);
    CHECK(row.at("target_bus").get<std::size_t>() == results[i].action.target);
    CHECK(row.at("coefficient").get<double>() == results[i].action.coefficient);
    CHECK(row.at("cumulative_reward").get<double>() == results[i].cumulative_reward);
  }
}

TEST_CASE("export of an empty result list is a usage error") {
  test_helpers::TempDir dir("ranking_empty");
  std::vector<ConstantAttackResult> empty;
  CHECK_THROWS_AS(export_ranking_csv(empty, dir.path() / "x.csv"), UsageError);
}

TEST_CASE("environment failures are tagged with the offending action") {
  GridParams p;
  p.n = 2;
  p.inertia = {1.0, 1.0};
  p.damping = {0.1, 0.1};
  p.injection = {2.0, -2.0};  // beyond line capacity: no equilibrium
  p.droop = {1.0, 1.0};
  p.susceptance = {0.0, 1.0, 1.0, 0.0};
  CHECK_THROWS_WITH(enumerate_constant_attacks(p, default_episode()),
                    Catch::Matchers::ContainsSubstring("constant attack (target=0"));
}
