#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rankgame/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Ranking-game imitation learning on tabular MDPs"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> compare_configs;
  std::string out;
  std::int64_t seed_offset = 0;
  bool exact = false, empirical = false;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config) cmd->add_option("--config", config, "Experiment config (YAML)")->required();
    cmd->add_option("--seed-offset", seed_offset, "Added to every run seed");
    cmd->add_option("--out", out, "Output directory (file for export-env)");
    auto* e = cmd->add_flag("--exact", exact, "Use exact visitations");
    auto* m = cmd->add_flag("--empirical", empirical, "Use sampled visitations");
    e->excludes(m);
  };

  auto* run = app.add_subcommand("run", "Run the configured game for every seed");
  add_common(run, true);
  auto* check = app.add_subcommand("check-theorem", "Certificate sweep and per-round bound check");
  add_common(check, true);
  auto* compare = app.add_subcommand("compare", "Steps-to-threshold across variants on shared seeds");
  add_common(compare, false);
  compare->add_option("--config,configs", compare_configs, "Two or more experiment configs");
  auto* export_env = app.add_subcommand("export-env", "Write the scenario MDP as JSON");
  add_common(export_env, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  rankgame::CliOverrides overrides;
  overrides.seed_offset = seed_offset;
  if (!out.empty()) overrides.out = out;
  if (exact) overrides.empirical = false;
  if (empirical) overrides.empirical = true;

  if (*run) return rankgame::cmd_run(config, overrides, std::cout, std::cerr);
  if (*check) return rankgame::cmd_check_theorem(config, overrides, std::cout, std::cerr);
  if (*export_env) return rankgame::cmd_export_env(config, overrides, std::cout, std::cerr);
  std::vector<std::filesystem::path> paths(compare_configs.begin(), compare_configs.end());
  return rankgame::cmd_compare(paths, overrides, std::cout, std::cerr);
}
