#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rankgame/mdp.hpp"
#include "rankgame/ranking.hpp"
#include "rankgame/stackelberg.hpp"

namespace rankgame {

enum class EnvKind { kGridworld, kChain, kRandom, kBandit };
enum class ExpertSource { kOptimal, kProvided };
enum class ExpertMode { kSampled, kExact };
enum class MutationKind { kIntentChange, kDynamicsChange };

struct Mutation {
  MutationKind kind = MutationKind::kIntentChange;
  int round = 1;
  // Intent change: new gridworld goal; defaults to the goal mirrored left-right.
  std::optional<int> goal_x;
  std::optional<int> goal_y;
  // Dynamics change: P' = (1 - slip) P + slip * mean_a P, then actions are
  // relabelled a -> (a + action_shift) mod n_actions.
  double slip = 0.0;
  int action_shift = 0;
};

struct ScenarioSpec {
  EnvKind env = EnvKind::kGridworld;
  // gridworld
  int width = 5;
  int height = 5;
  std::optional<int> goal_x;  // defaults to width - 1
  std::optional<int> goal_y;  // defaults to height - 1
  double slip = 0.0;
  // chain
  int chain_length = 10;
  bool chain_reset = false;  // moving left returns to the start
  // random
  int n_states = 10;
  int n_actions = 3;
  std::uint64_t env_seed = 0;
  // bandit
  int n_arms = 2;
  std::vector<double> arm_rewards;

  double gamma = 0.9;
  std::optional<int> horizon;  // defaults per environment
  double r_max = 1.0;

  ExpertSource expert_source = ExpertSource::kOptimal;
  std::optional<Eigen::MatrixXd> provided_policy;
  ExpertMode expert_mode = ExpertMode::kSampled;
  int n_expert_trajectories = 1;
  bool lfo = false;

  std::optional<Mutation> mutation;
  int offline_levels = 0;  // 0 disables offline preferences
  double offline_max_temperature = 1.0;
  double offline_min_temperature = 0.01;

  void validate() const;
};

struct BuiltEnv {
  TabularMdp mdp;
  ExpertData expert;
  Policy expert_policy;
};

TabularMdp make_gridworld(int width, int height, int goal_x, int goal_y, double slip, double gamma,
                          int horizon, double r_max);
TabularMdp make_chain(int n, bool reset, double slip, double gamma, int horizon, double r_max);
TabularMdp make_random_mdp(int n_states, int n_actions, std::uint64_t seed, double gamma,
                           int horizon, double r_max);
TabularMdp make_bandit(const std::vector<double>& arm_rewards, double gamma, int horizon,
                       double r_max);

TabularMdp build_mdp(const ScenarioSpec& spec);
// Expert occupancies for a fixed policy; `seed` drives demonstration sampling.
ExpertData make_expert_data(const TabularMdp& mdp, const Policy& policy, const ScenarioSpec& spec,
                            std::uint64_t seed);
BuiltEnv build_env(const ScenarioSpec& spec, std::uint64_t seed);

struct MutationResult {
  TabularMdp mdp;
  std::optional<ExpertData> expert;
  bool applied = false;
  bool demo_changed = false;  // false: keep the old demonstration, refresh reference and policy
};

// Applies spec.mutation when `round` equals its trigger round; otherwise
// returns the MDP unchanged. The expert is re-solved under the new MDP. An
// intent change also brings new demonstrations; a dynamics change does not.
MutationResult apply_mutation(const TabularMdp& mdp, const ScenarioSpec& spec, int round,
                              std::uint64_t seed);

TabularMdp perturb_dynamics(const TabularMdp& mdp, double slip, int action_shift);

struct OfflinePreferenceOptions {
  double max_temperature = 1.0;
  double min_temperature = 0.01;
  bool state_only = false;
  bool grounded = true;
  ShapingFamily shaping{};
};

// Policies of graded quality from soft value iteration at descending
// temperatures (first level uniform, last level the hard optimum), one sampled
// trajectory each, ordered by true return, with shaped targets ending at r_max.
RankingChain make_offline_preferences(const TabularMdp& mdp, const Eigen::MatrixXd& true_reward,
                                      int n_levels, std::uint64_t seed,
                                      const OfflinePreferenceOptions& options = {});

// Infinity first, then geometric from max to min, then 0 (the expert level)
// when grounded.
std::vector<double> offline_temperatures(int n_levels, double max_temperature,
                                         double min_temperature, bool grounded = true);

}  // namespace rankgame
