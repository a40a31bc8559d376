// Command-line front end: five subcommands sharing one JSON configuration.
//
//   fdisim simulate    --config run.json [--seed S] [--out DIR]
//   fdisim equilibrium --config run.json [--out DIR]
//   fdisim bruteforce  --config run.json [--seed S] [--out DIR]
//   fdisim train       --config run.json [--seed S] [--out DIR] [--total-steps N]
//   fdisim evaluate    --config run.json --checkpoint FILE [--seed S] [--out DIR]

#include <cstdint>
#include <filesystem>
#include <string>

#include "fdisim/run.hpp"
#include "fdisim/version.hpp"

#include "CLI11.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Droop-tampering attack discovery on a swing-equation grid simulator"};
  app.set_version_flag("--version", std::string("fdisim ") + fdisim::kVersion);
  app.require_subcommand(1);

  struct {
    std::string config;
    std::string out;
    std::string checkpoint;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::uint64_t total_steps = 0;
    bool total_steps_set = false;
  } opts;

  auto add_common = [&](CLI::App* sub, bool with_total, bool with_checkpoint) {
    sub->add_option("--config", opts.config, "Run configuration file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out, "Output directory (overrides config output_dir)");
    auto* seed_opt = sub->add_option("--seed", opts.seed, "Override episode and ppo seeds");
    sub->callback([&, seed_opt]() { opts.seed_set = seed_opt->count() > 0; });
    if (with_total) {
      auto* ts = sub->add_option("--total-steps", opts.total_steps,
                                 "Override ppo.total_env_steps");
      sub->callback([&, seed_opt, ts]() {
        opts.seed_set = seed_opt->count() > 0;
        opts.total_steps_set = ts->count() > 0;
      });
    }
    if (with_checkpoint) {
      sub->add_option("--checkpoint", opts.checkpoint, "Checkpoint file to evaluate")
          ->required()
          ->check(CLI::ExistingFile);
    }
  };

  CLI::App* simulate = app.add_subcommand("simulate", "No-attack trajectory from the frozen IC");
  CLI::App* equilibrium = app.add_subcommand("equilibrium", "Solve and export the steady state");
  CLI::App* bruteforce =
      app.add_subcommand("bruteforce", "Enumerate and rank all constant attacks");
  CLI::App* train = app.add_subcommand("train", "Train an attack policy with PPO");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Greedy rollout of a checkpointed policy");
  add_common(simulate, false, false);
  add_common(equilibrium, false, false);
  add_common(bruteforce, false, false);
  add_common(train, true, false);
  add_common(evaluate, false, true);

  CLI11_PARSE(app, argc, argv);

  fdisim::RunOverrides overrides;
  if (opts.seed_set) {
    overrides.seed = opts.seed;
  }
  if (opts.total_steps_set) {
    overrides.total_steps = opts.total_steps;
  }
  if (!opts.out.empty()) {
    overrides.output_dir = opts.out;
  }
  if (!opts.checkpoint.empty()) {
    overrides.checkpoint = opts.checkpoint;
  }

  fdisim::Command cmd = fdisim::Command::kSimulate;
  if (app.got_subcommand(equilibrium)) {
    cmd = fdisim::Command::kEquilibrium;
  } else if (app.got_subcommand(bruteforce)) {
    cmd = fdisim::Command::kBruteForce;
  } else if (app.got_subcommand(train)) {
    cmd = fdisim::Command::kTrain;
  } else if (app.got_subcommand(evaluate)) {
    cmd = fdisim::Command::kEvaluate;
  }

  return fdisim::run_cli_command(cmd, opts.config, overrides);
}
