#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rankgame/reward.hpp"

namespace rankgame {

inline constexpr double kProbTol = 1e-9;

// Finite discounted MDP. Transitions are stored as an (S*A) x S matrix whose
// row s * n_actions + a is the next-state distribution of (s, a).
class TabularMdp {
 public:
  TabularMdp(int n_states, int n_actions, Eigen::MatrixXd transition, double gamma,
             Eigen::VectorXd rho0, int horizon, double r_max,
             std::optional<Eigen::MatrixXd> true_reward = std::nullopt);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  // Index of the reserved absorbing row in visitation and reward tables.
  int absorbing_state() const { return n_states_; }
  double gamma() const { return gamma_; }
  int horizon() const { return horizon_; }
  double r_max() const { return r_max_; }
  const Eigen::VectorXd& rho0() const { return rho0_; }
  const Eigen::MatrixXd& transition() const { return transition_; }
  double transition(int s, int a, int next) const {
    return transition_(s * n_actions_ + a, next);
  }
  auto next_distribution(int s, int a) const { return transition_.row(s * n_actions_ + a); }
  const std::optional<Eigen::MatrixXd>& true_reward() const { return true_reward_; }

  TabularMdp with_transition(Eigen::MatrixXd transition) const;
  TabularMdp with_true_reward(std::optional<Eigen::MatrixXd> true_reward) const;

 private:
  void validate() const;

  int n_states_;
  int n_actions_;
  Eigen::MatrixXd transition_;
  double gamma_;
  Eigen::VectorXd rho0_;
  int horizon_;
  double r_max_;
  std::optional<Eigen::MatrixXd> true_reward_;
};

// Stochastic policy pi(a|s), one row per state.
class Policy {
 public:
  explicit Policy(Eigen::MatrixXd probs);

  static Policy uniform(int n_states, int n_actions);
  static Policy deterministic(const std::vector<int>& actions, int n_actions);
  // Row-wise softmax of logits / temperature.
  static Policy softmax(const Eigen::MatrixXd& logits, double temperature = 1.0);

  const Eigen::MatrixXd& probs() const { return probs_; }
  double operator()(int s, int a) const { return probs_(s, a); }
  int n_states() const { return static_cast<int>(probs_.rows()); }
  int n_actions() const { return static_cast<int>(probs_.cols()); }

 private:
  Eigen::MatrixXd probs_;
};

enum class Support { kStateAction, kState };

// Normalized discounted occupancy table. Rows are states plus the absorbing
// row; columns are actions, or a single column once actions are marginalized.
// time_marginals[t] holds the undiscounted per-step distribution Pr(s_t, a_t).
struct Visitation {
  Eigen::MatrixXd rho;
  std::vector<Eigen::MatrixXd> time_marginals;
  Support support = Support::kStateAction;

  double total() const { return rho.sum(); }
  bool has_time_marginals() const { return !time_marginals.empty(); }
  Visitation state_marginal() const;
};

// Discount-weighted normalized aggregate of per-step marginals.
Eigen::MatrixXd aggregate_time_marginals(const std::vector<Eigen::MatrixXd>& marginals,
                                         double gamma);

struct Step {
  int state = 0;
  int action = 0;
  bool operator==(const Step&) const = default;
};

struct Trajectory {
  std::vector<Step> steps;
  bool terminated_early = false;
  bool operator==(const Trajectory&) const = default;
};

Visitation exact_visitation(const TabularMdp& mdp, const Policy& pi);

enum class CountWeighting { kDiscounted, kUniform };

Visitation empirical_visitation(std::span<const Trajectory> trajectories, const TabularMdp& mdp,
                                CountWeighting weighting = CountWeighting::kDiscounted);

// Appends absorbing steps to an early-terminated trajectory until it spans
// the horizon. Full-length trajectories are returned unchanged.
Trajectory pad_absorbing(const Trajectory& trajectory, const TabularMdp& mdp);

// J(pi; R) = 1/(1-gamma) * E_rho[R].
double policy_return(const TabularMdp& mdp, const Policy& pi, const RewardFn& reward);
double policy_return(const TabularMdp& mdp, const Policy& pi, const Eigen::MatrixXd& reward);

// One entropy-regularized Bellman backup of Q under an S x A reward table.
Eigen::MatrixXd soft_bellman_backup(const TabularMdp& mdp, const Eigen::MatrixXd& reward,
                                    const Eigen::MatrixXd& q, double temperature);

Policy soft_value_iteration(const TabularMdp& mdp, const RewardFn& reward, double temperature,
                            int n_iters);
Policy soft_value_iteration(const TabularMdp& mdp, const Eigen::MatrixXd& reward,
                            double temperature, int n_iters);

struct OptimalSolution {
  Policy policy;
  double optimal_return;
  Eigen::VectorXd values;
};

// Value iteration to a 1e-10 residual followed by exact policy-iteration
// polishing. Ties between actions go to the lowest index.
OptimalSolution hard_value_iteration(const TabularMdp& mdp, const RewardFn& reward);
OptimalSolution hard_value_iteration(const TabularMdp& mdp, const Eigen::MatrixXd& reward);

std::vector<Trajectory> sample_trajectories(const TabularMdp& mdp, const Policy& pi, int n,
                                            std::uint64_t seed);

}  // namespace rankgame
