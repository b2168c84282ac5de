#pragma once

#include <cstdint>
#include <limits>

#include "rankgame/mdp.hpp"
#include "rankgame/ranking.hpp"
#include "rankgame/reward.hpp"

namespace rankgame {

inline constexpr double kBoundSlack = 1e-9;

struct GameReport {
  int round = 0;
  double ranking_loss = 0.0;  // raw L_k at the online pair
  double eps_r = 0.0;
  double eps_pi = 0.0;
  double f_divergence = 0.0;
  double bound_rhs = 0.0;
  bool bound_satisfied = false;
  double true_return_ratio = std::numeric_limits<double>::quiet_NaN();
  std::int64_t env_steps = 0;

  bool operator==(const GameReport&) const = default;
};

// D_f(p || q) = sum q (q - p) / (q + p). Terms with q + p = 0 vanish. Inputs
// with different supports are compared on their state marginals.
double f_divergence(const Visitation& p, const Visitation& q);

// J*(R) - J(pi; R).
double measure_eps_pi(const TabularMdp& mdp, const Policy& pi, const RewardFn& reward);

struct EpsR {
  double eps_r = 0.0;
  double raw_loss = 0.0;
};

// sup |R - R_cf| over the support of (agent, expert), R_cf the closed-form
// minimizer at k.
double reward_deviation(const Visitation& agent, const Visitation& expert, const RewardFn& reward,
                        double k);
// Uses the first online agent-vs-expert pair in the dataset.
EpsR measure_eps_r(const RankingDataset& dataset, const RewardFn& reward, double k);

double bound_rhs(double gamma, double eps_pi, double eps_r, double k);

struct Certificate {
  double f_divergence = 0.0;
  double eps_pi = 0.0;
  double eps_r = 0.0;
  double bound_rhs = 0.0;
  bool satisfied = false;
};

// Measures everything on the exact agent visitation. For a state-only reward
// both visitations are reduced to states.
Certificate theorem1_certificate(const TabularMdp& mdp, const Policy& pi, const RewardFn& reward,
                                 const Visitation& expert, double k);

}  // namespace rankgame
