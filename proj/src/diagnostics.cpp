#include "rankgame/diagnostics.hpp"

#include <algorithm>
#include <cmath>

namespace rankgame {
namespace {

constexpr double kNormTol = 1e-8;

void check_normalized(const Visitation& v, const char* name) {
  if ((v.rho.array() < 0.0).any() || std::abs(v.total() - 1.0) > kNormTol)
    throw Error(std::string("f_divergence: ") + name + " is not a normalized distribution");
}

}  // namespace

double f_divergence(const Visitation& p_in, const Visitation& q_in) {
  const bool reduce = p_in.support != q_in.support;
  const Visitation p = reduce ? p_in.state_marginal() : p_in;
  const Visitation q = reduce ? q_in.state_marginal() : q_in;
  check_normalized(p, "rho_p");
  check_normalized(q, "rho_q");
  if (p.rho.rows() != q.rho.rows() || p.rho.cols() != q.rho.cols())
    throw Error("f_divergence: visitation shapes differ");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rho.size(); ++i) {
    const double a = p.rho(i), b = q.rho(i);
    if (a + b > 0.0) total += b * (b - a) / (b + a);
  }
  // Each term is at most b, so only rounding in sum(q) can push this past 1.
  return std::min(total, 1.0);
}

double measure_eps_pi(const TabularMdp& mdp, const Policy& pi, const RewardFn& reward) {
  const Eigen::MatrixXd table = reward.state_action_table();
  return hard_value_iteration(mdp, table).optimal_return - policy_return(mdp, pi, table);
}

double reward_deviation(const Visitation& agent_in, const Visitation& expert_in,
                        const RewardFn& reward, double k) {
  const bool reduce = reward.kind() == RewardKind::kStateOnly || agent_in.support != expert_in.support;
  const Visitation agent = reduce ? agent_in.state_marginal() : agent_in;
  const Visitation expert = reduce ? expert_in.state_marginal() : expert_in;
  const Eigen::MatrixXd target = closed_form_table(agent, expert, k);
  const Eigen::MatrixXd values = reward.values();
  if (values.rows() != target.rows() || values.cols() != target.cols())
    throw Error("reward table does not match the visitation shape");
  double sup = 0.0;
  for (Eigen::Index i = 0; i < target.size(); ++i)
    if (agent.rho(i) + expert.rho(i) > 0.0) sup = std::max(sup, std::abs(values(i) - target(i)));
  return sup;
}

EpsR measure_eps_r(const RankingDataset& dataset, const RewardFn& reward, double k) {
  const auto it = std::find_if(dataset.pairs.begin(), dataset.pairs.end(), [](const RankingPair& p) {
    return p.source == PairSource::kOnlineAgentVsExpert;
  });
  if (it == dataset.pairs.end()) throw Error("measure_eps_r: dataset has no online agent-vs-expert pair");
  RankingDataset single;
  single.pairs.push_back(*it);
  return EpsR{reward_deviation(it->lesser, it->greater, reward, k), loss_Lk(single, reward, k)};
}

double bound_rhs(double gamma, double eps_pi, double eps_r, double k) {
  return ((1.0 - gamma) * eps_pi + 2.0 * eps_r) / k;
}

Certificate theorem1_certificate(const TabularMdp& mdp, const Policy& pi, const RewardFn& reward,
                                 const Visitation& expert, double k) {
  Visitation agent = exact_visitation(mdp, pi);
  Visitation ref = expert;
  if (reward.kind() == RewardKind::kStateOnly || ref.support == Support::kState) {
    agent = agent.state_marginal();
    ref = ref.state_marginal();
  }
  Certificate c;
  c.f_divergence = f_divergence(agent, ref);
  c.eps_pi = measure_eps_pi(mdp, pi, reward);
  c.eps_r = reward_deviation(agent, ref, reward, k);
  c.bound_rhs = bound_rhs(mdp.gamma(), c.eps_pi, c.eps_r, k);
  c.satisfied = c.f_divergence <= c.bound_rhs + kBoundSlack;
  return c;
}

}  // namespace rankgame
