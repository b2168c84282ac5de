#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rankgame/mdp.hpp"
#include "rankgame/reward.hpp"

namespace rankgame {

enum class PairSource { kOnlineAgentVsExpert, kAutoInterpolant, kOfflineAnnotated };

// lesser <= greater in expected reward.
struct RankingPair {
  Visitation lesser;
  Visitation greater;
  PairSource source = PairSource::kOnlineAgentVsExpert;
};

// Ordered visitations, weakest first, each regressed to its return level.
// `trajectories` is optional; when present it holds the rollouts behind each
// member and feeds snippet augmentation.
struct RankingChain {
  std::vector<Visitation> members;
  std::vector<double> targets;
  std::vector<std::vector<Trajectory>> trajectories;

  void validate() const;
};

struct RankingDataset {
  std::vector<RankingPair> pairs;
  std::vector<RankingChain> chains;
};

struct ShapingFamily {
  enum class Kind { kLinear, kExponential };
  Kind kind = Kind::kExponential;
  double beta = -1.0;
  double k_max = 1.0;
};

// E_v[R] with state-only rewards broadcast over the action columns of v.
double expectation(const Visitation& v, const Eigen::MatrixXd& values);

double loss_Lk(const RankingDataset& dataset, const RewardFn& reward, double k);
double loss_SLk(const RankingChain& chain, const RewardFn& reward);
double loss_offline_combined(const RankingDataset& online, const RankingChain& offline_chain,
                             const RewardFn& reward, double k, double lambda);

// Pointwise minimizer of the L_k loss for one pair: k * rho_E / (rho_E + rho_pi),
// and k / 2 wherever both visitations are empty. The absorbing row is left as
// computed here; closed_form_reward pins it to 0.
Eigen::MatrixXd closed_form_table(const Visitation& agent, const Visitation& expert, double k);
RewardFn closed_form_reward(const Visitation& agent, const Visitation& expert, double k);

// Gradient of E_E[R] - E_pi[R] with respect to the reward parameters.
Eigen::VectorXd loss_supremum_grad(const Visitation& agent, const Visitation& expert,
                                   const RewardFn& reward);

std::vector<double> interpolation_alphas(int p);
// p time-conditional interpolants from agent to expert; aggregate occupancy is
// the gamma-weighted normalized sum of the interpolated per-step marginals.
std::vector<Visitation> make_interpolants(const Visitation& agent, const Visitation& expert, int p,
                                          double gamma);
std::vector<double> shape_targets(const ShapingFamily& family, std::span<const double> alphas);
// Chain agent, interpolants..., expert with shaped targets k_0 = 0 ... k_{p+1} = k_max.
RankingChain make_auto_chain(const Visitation& agent, const Visitation& expert, int p,
                             const ShapingFamily& family, double gamma);

// One squared error (sum of R over the window - k_i * l)^2 per stride-1 window.
std::vector<double> augment_snippets(std::span<const Trajectory> trajectories,
                                     std::span<const double> targets, int l,
                                     const RewardFn& reward);

enum class LossKind { kSupremum, kLk, kSLk, kOfflineCombined };

struct FitConfig {
  double learning_rate = 1e-3;
  double l2_weight = 1e-4;
  ClampRange clamp{-10.0, 10.0};
  int max_steps = 1000;
  double grad_tol = 1e-6;
  double k = 1.0;
  double lambda = 0.3;
  bool use_snippets = false;
  int snippet_length = 10;
  double snippet_weight = 1.0;
};

struct FitResult {
  RewardFn reward;
  int steps = 0;
  double grad_norm = 0.0;
  bool converged = false;
  double loss = 0.0;
};

// Projected gradient descent on the selected ranking loss plus
// (l2_weight / 2) * ||params||^2. The supremum loss is handled as descent on
// the negated reward gap.
FitResult fit_reward_gd(const RankingDataset& dataset, const RewardFn& init, LossKind kind,
                        const FitConfig& config);

// Training objective value for the given reward (no regularizer).
double ranking_objective(const RankingDataset& dataset, const RewardFn& reward, LossKind kind,
                         const FitConfig& config);

std::string to_string(LossKind kind);
std::string to_string(PairSource source);
PairSource pair_source_from_string(const std::string& name);

}  // namespace rankgame
