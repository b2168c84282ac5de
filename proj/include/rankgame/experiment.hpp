#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rankgame/diagnostics.hpp"
#include "rankgame/envs.hpp"
#include "rankgame/stackelberg.hpp"

namespace rankgame {

// Invalid configuration: names the offending field and, when known, the line.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, int line, const std::string& message);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

struct EmitOptions {
  bool csv = true;
  bool json_summary = true;
  bool plot_data = true;
};

struct SweepOptions {
  int instances = 100;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ScenarioSpec scenario;
  GameConfig game;
  std::string offline_preferences_file;  // optional, overrides generated preferences
  std::filesystem::path output_dir = "out";
  int repeats = 1;
  EmitOptions emit;
  SweepOptions sweep;
  double threshold = 0.9;

  void validate() const;
};

// YAML text with sections `scenario`, `game`, `emit`, `check_theorem`.
// Unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string serialize_experiment_config(const ExperimentConfig& config);
std::string serialize_scenario(const ScenarioSpec& scenario);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<GameReport> reports;
};

// Builds the scenario and plays every round for one seed, applying the
// scenario mutation at its trigger round.
SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed);
// Seeds game.seed + seed_offset + r for r < repeats, in parallel up to `threads`.
std::vector<SeedRun> run_seeds(const ExperimentConfig& config, std::int64_t seed_offset, int threads);

// env_steps of the first report reaching the threshold.
std::optional<std::int64_t> steps_to_threshold(const std::vector<GameReport>& reports,
                                               double threshold);
// Env steps spent from `round` (inclusive) until the threshold is reached again.
std::optional<std::int64_t> recovery_steps(const std::vector<GameReport>& reports, int round,
                                           double threshold);

struct SweepResult {
  int passed = 0;
  int failed = 0;
  double worst_margin = 0.0;  // max of f_divergence - bound_rhs
};

// Certificate on random (MDP, policy, reward, expert) instances with
// n_states <= 20, n_actions <= 4 and gamma in {0.9, 0.99}.
SweepResult certificate_sweep(int instances, std::uint64_t seed);

// RANKGAME_THREADS if set, else the hardware concurrency.
int thread_budget();

std::string summary_json(const ExperimentConfig& config, const std::vector<SeedRun>& runs);
std::string plot_data_json(const ExperimentConfig& config, const std::vector<SeedRun>& runs);

struct CliOverrides {
  std::int64_t seed_offset = 0;
  std::optional<std::filesystem::path> out;
  std::optional<bool> empirical;
};

int cmd_run(const std::filesystem::path& config_path, const CliOverrides& overrides,
            std::ostream& out, std::ostream& err);
int cmd_check_theorem(const std::filesystem::path& config_path, const CliOverrides& overrides,
                      std::ostream& out, std::ostream& err);
int cmd_compare(const std::vector<std::filesystem::path>& config_paths, const CliOverrides& overrides,
                std::ostream& out, std::ostream& err);
int cmd_export_env(const std::filesystem::path& config_path, const CliOverrides& overrides,
                   std::ostream& out, std::ostream& err);

}  // namespace rankgame
