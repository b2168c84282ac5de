#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rankgame/diagnostics.hpp"
#include "rankgame/mdp.hpp"
#include "rankgame/ranking.hpp"
#include "rankgame/reward.hpp"

namespace rankgame {

enum class Leader { kPolicy, kReward };
enum class GameLoss { kSupremum, kLk, kSlkAuto, kOffline };

struct GameConfig {
  Leader leader = Leader::kPolicy;
  GameLoss loss = GameLoss::kLk;
  std::optional<double> k;      // defaults to r_max
  std::optional<int> n_pol;     // defaults to the horizon
  std::optional<int> n_rew;     // PAL cap; defaults to ceil(H / batch_size)
  int batch_size = 1024;
  int ral_policy_scale = 10;    // RAL runs this many times more policy updates
  int p = 5;
  ShapingFamily shaping{};      // k_max is replaced by k at run time
  double lambda = 0.3;
  double temperature = 0.01;
  double policy_lr = 1.0;
  double policy_init_noise = 0.0;
  int rounds = 100;
  std::uint64_t seed = 0;
  bool use_empirical = false;
  // Empirical mode only: plan on the transition model estimated from the
  // agent's own rollouts instead of the true one.
  bool learned_model = true;
  double model_decay = 1.0;  // per-round discount on transition counts
  int episodes_per_round = 1;
  bool state_only = false;
  double reward_lr = 1e-3;
  double l2_weight = 1e-4;
  ClampRange clamp{-10.0, 10.0};
  double grad_tol = 1e-6;
  bool warm_start_reward = true;
  bool use_snippets = false;
  int snippet_length = 10;
  double snippet_weight = 1.0;
  std::optional<RankingChain> offline_chain;

  void validate() const;
};

// `demo` trains the reward; `reference` is the exact expert occupancy used by
// the certificate; `policy` gives the return normalizer.
struct ExpertData {
  Visitation demo;
  Visitation reference;
  std::optional<Policy> policy;
  std::vector<Trajectory> trajectories;

  static ExpertData exact(const Visitation& v) { return ExpertData{v, v, std::nullopt, {}}; }
};

struct GameState {
  Policy policy;
  RewardFn reward;
  Eigen::MatrixXd q;
  Eigen::MatrixXd transition_counts;  // (s * A + a, s'), empirical mode
  RankingDataset online_dataset;
  int round = 0;
  std::int64_t env_steps = 0;
  std::vector<GameReport> history;
};

struct Schedule {
  int n_pol = 0;
  int n_rew = 0;
  bool operator==(const Schedule&) const = default;
};

// Policy and reward update counts for one round. PAL is round-independent;
// RAL scales reward updates with the aggregated transition count.
Schedule two_timescale_schedule(const GameConfig& config, int horizon, int round,
                                std::int64_t dataset_transitions);

class Game {
 public:
  Game(TabularMdp mdp, ExpertData expert, GameConfig config);

  // Plays one round and returns its report.
  const GameReport& step();

  void replace_mdp(TabularMdp mdp);
  void replace_expert(ExpertData expert);

  const GameState& state() const { return state_; }
  const TabularMdp& mdp() const { return mdp_; }
  const ExpertData& expert() const { return expert_; }
  const GameConfig& config() const { return config_; }
  double k() const { return k_; }

 private:
  void improve_policy(int n_pol);
  TabularMdp planning_model() const;
  RankingDataset training_dataset() const;
  double true_return_ratio() const;

  TabularMdp mdp_;
  ExpertData expert_;
  GameConfig config_;
  double k_;
  GameState state_;
  std::int64_t dataset_transitions_ = 0;
  std::optional<double> expert_return_;
};

GameState run_pal(const TabularMdp& mdp, const ExpertData& expert, const GameConfig& config);
GameState run_pal(const TabularMdp& mdp, const Visitation& expert, const GameConfig& config);
GameState run_ral(const TabularMdp& mdp, const ExpertData& expert, const GameConfig& config);
GameState run_ral(const TabularMdp& mdp, const Visitation& expert, const GameConfig& config);

struct LeaderGradient {
  Eigen::MatrixXd direct;
  Eigen::MatrixXd indirect;
  Eigen::MatrixXd total;
};

// J(R*(pi); pi) for pi = softmax(logits), R* the unclamped closed-form best
// response at k.
double pal_leader_objective(const TabularMdp& mdp, const Eigen::MatrixXd& logits,
                            const Visitation& expert, double k);

// Total derivative of pal_leader_objective with respect to the logits log(pi),
// split into the term at fixed reward and the term through the best response.
LeaderGradient leader_gradient_pal_analytic(const TabularMdp& mdp, const Policy& pi,
                                            const Visitation& expert, double k);

// Central differences of pal_leader_objective.
Eigen::MatrixXd leader_gradient_finite_difference(const TabularMdp& mdp,
                                                  const Eigen::MatrixXd& logits,
                                                  const Visitation& expert, double k,
                                                  double h = 1e-5);

std::string to_string(Leader leader);
std::string to_string(GameLoss loss);
Leader leader_from_string(const std::string& name);
GameLoss game_loss_from_string(const std::string& name);

}  // namespace rankgame
