#include "rankgame/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rankgame/rng.hpp"

namespace rankgame {
namespace {

// P_pi(s, s') = sum_a pi(a|s) P(s, a, s').
Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const Policy& pi) {
  const int S = mdp.n_states(), A = mdp.n_actions();
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      if (pi(s, a) != 0.0) p_pi.row(s) += pi(s, a) * mdp.next_distribution(s, a);
  return p_pi;
}

void check_compatible(const TabularMdp& mdp, const Policy& pi) {
  if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions())
    throw Error("policy dimensions do not match the MDP");
}

Eigen::MatrixXd check_reward_table(const TabularMdp& mdp, const Eigen::MatrixXd& reward) {
  if (reward.rows() != mdp.n_states() || reward.cols() != mdp.n_actions())
    throw Error("reward table must be n_states x n_actions");
  return reward;
}

// E_{s' ~ P(.|s,a)} V(s') for every (s, a), as an S x A table.
Eigen::MatrixXd expected_next(const TabularMdp& mdp, const Eigen::VectorXd& v) {
  const Eigen::VectorXd flat = mdp.transition() * v;
  Eigen::MatrixXd out(mdp.n_states(), mdp.n_actions());
  for (int s = 0; s < mdp.n_states(); ++s)
    for (int a = 0; a < mdp.n_actions(); ++a) out(s, a) = flat[s * mdp.n_actions() + a];
  return out;
}

Eigen::VectorXd soft_max_values(const Eigen::MatrixXd& q, double temperature) {
  Eigen::VectorXd v(q.rows());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    const double m = q.row(s).maxCoeff();
    v[s] = m + temperature * std::log(((q.row(s).array() - m) / temperature).exp().sum());
  }
  return v;
}

// Solves V = R_pi + gamma P_pi V.
Eigen::VectorXd evaluate(const TabularMdp& mdp, const Policy& pi, const Eigen::MatrixXd& reward) {
  const int S = mdp.n_states();
  const Eigen::MatrixXd p_pi = policy_transition(mdp, pi);
  const Eigen::VectorXd r_pi = (pi.probs().cwiseProduct(reward)).rowwise().sum();
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - mdp.gamma() * p_pi;
  return system.partialPivLu().solve(r_pi);
}

std::vector<int> greedy_actions(const Eigen::MatrixXd& q) {
  std::vector<int> actions(q.rows());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    int best = 0;
    for (Eigen::Index a = 1; a < q.cols(); ++a)
      if (q(s, a) > q(s, best)) best = static_cast<int>(a);
    actions[s] = best;
  }
  return actions;
}

}  // namespace

TabularMdp::TabularMdp(int n_states, int n_actions, Eigen::MatrixXd transition, double gamma,
                       Eigen::VectorXd rho0, int horizon, double r_max,
                       std::optional<Eigen::MatrixXd> true_reward)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      gamma_(gamma),
      rho0_(std::move(rho0)),
      horizon_(horizon),
      r_max_(r_max),
      true_reward_(std::move(true_reward)) {
  validate();
}

void TabularMdp::validate() const {
  if (n_states_ < 1 || n_actions_ < 1) throw Error("TabularMdp: n_states and n_actions must be >= 1");
  if (transition_.rows() != n_states_ * n_actions_ || transition_.cols() != n_states_)
    throw Error("TabularMdp: transition must be (n_states*n_actions) x n_states");
  if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw Error("TabularMdp: gamma must lie in [0, 1)");
  if (horizon_ < 1) throw Error("TabularMdp: horizon must be >= 1");
  if (!(r_max_ > 0.0)) throw Error("TabularMdp: r_max must be positive");
  if ((transition_.array() < 0.0).any()) throw Error("TabularMdp: negative transition probability");
  for (Eigen::Index row = 0; row < transition_.rows(); ++row)
    if (std::abs(transition_.row(row).sum() - 1.0) > kProbTol)
      throw Error("TabularMdp: transition row " + std::to_string(row) + " does not sum to 1");
  if (rho0_.size() != n_states_) throw Error("TabularMdp: rho0 has wrong length");
  if ((rho0_.array() < 0.0).any() || std::abs(rho0_.sum() - 1.0) > kProbTol)
    throw Error("TabularMdp: rho0 is not a distribution");
  if (true_reward_) {
    if (true_reward_->rows() != n_states_ || true_reward_->cols() != n_actions_)
      throw Error("TabularMdp: true_reward must be n_states x n_actions");
    if ((true_reward_->array() < 0.0).any() || (true_reward_->array() > r_max_).any())
      throw Error("TabularMdp: true_reward outside [0, r_max]");
  }
}

TabularMdp TabularMdp::with_transition(Eigen::MatrixXd transition) const {
  return TabularMdp(n_states_, n_actions_, std::move(transition), gamma_, rho0_, horizon_, r_max_,
                    true_reward_);
}

TabularMdp TabularMdp::with_true_reward(std::optional<Eigen::MatrixXd> true_reward) const {
  return TabularMdp(n_states_, n_actions_, transition_, gamma_, rho0_, horizon_, r_max_,
                    std::move(true_reward));
}

Policy::Policy(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
  if (probs_.rows() < 1 || probs_.cols() < 1) throw Error("Policy: empty table");
  if ((probs_.array() < 0.0).any()) throw Error("Policy: negative probability");
  for (Eigen::Index s = 0; s < probs_.rows(); ++s)
    if (std::abs(probs_.row(s).sum() - 1.0) > kProbTol)
      throw Error("Policy: row " + std::to_string(s) + " does not sum to 1");
}

Policy Policy::uniform(int n_states, int n_actions) {
  return Policy(Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions));
}

Policy Policy::deterministic(const std::vector<int>& actions, int n_actions) {
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  return Policy(std::move(probs));
}

Policy Policy::softmax(const Eigen::MatrixXd& logits, double temperature) {
  if (!(temperature > 0.0)) throw Error("Policy::softmax: temperature must be positive");
  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  for (Eigen::Index s = 0; s < logits.rows(); ++s) {
    const double m = logits.row(s).maxCoeff();
    probs.row(s) = ((logits.row(s).array() - m) / temperature).exp();
    probs.row(s) /= probs.row(s).sum();
  }
  return Policy(std::move(probs));
}

Visitation Visitation::state_marginal() const {
  if (support == Support::kState) return *this;
  Visitation out;
  out.support = Support::kState;
  out.rho = rho.rowwise().sum();
  out.time_marginals.reserve(time_marginals.size());
  for (const auto& m : time_marginals) out.time_marginals.push_back(m.rowwise().sum());
  return out;
}

Eigen::MatrixXd aggregate_time_marginals(const std::vector<Eigen::MatrixXd>& marginals,
                                         double gamma) {
  if (marginals.empty()) throw Error("aggregate_time_marginals: no marginals");
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(marginals[0].rows(), marginals[0].cols());
  double weight = 1.0, norm = 0.0;
  for (const auto& m : marginals) {
    total += weight * m;
    norm += weight;
    weight *= gamma;
  }
  return total / norm;
}

Visitation exact_visitation(const TabularMdp& mdp, const Policy& pi) {
  check_compatible(mdp, pi);
  const int S = mdp.n_states(), A = mdp.n_actions();
  const double gamma = mdp.gamma();
  const Eigen::MatrixXd p_pi = policy_transition(mdp, pi);

  // Flow equations: d = (1 - gamma) rho0 + gamma P_pi^T d.
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - gamma * p_pi.transpose();
  const Eigen::VectorXd d = system.partialPivLu().solve((1.0 - gamma) * mdp.rho0());
  const double residual = (system * d - (1.0 - gamma) * mdp.rho0()).cwiseAbs().maxCoeff();
  if (!(residual < 1e-8)) throw Error("exact_visitation: flow system is singular");

  Visitation v;
  v.rho = Eigen::MatrixXd::Zero(S + 1, A);
  for (int s = 0; s < S; ++s) v.rho.row(s) = std::max(d[s], 0.0) * pi.probs().row(s);
  v.rho /= v.rho.sum();

  Eigen::VectorXd mu = mdp.rho0();
  v.time_marginals.reserve(mdp.horizon());
  for (int t = 0; t < mdp.horizon(); ++t) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(S + 1, A);
    for (int s = 0; s < S; ++s) m.row(s) = mu[s] * pi.probs().row(s);
    v.time_marginals.push_back(std::move(m));
    mu = p_pi.transpose() * mu;
  }
  return v;
}

Trajectory pad_absorbing(const Trajectory& trajectory, const TabularMdp& mdp) {
  if (!trajectory.terminated_early) return trajectory;
  Trajectory out = trajectory;
  while (static_cast<int>(out.steps.size()) < mdp.horizon())
    out.steps.push_back(Step{mdp.absorbing_state(), 0});
  return out;
}

Visitation empirical_visitation(std::span<const Trajectory> trajectories, const TabularMdp& mdp,
                                CountWeighting weighting) {
  if (trajectories.empty()) throw Error("empirical_visitation: no trajectories");
  const int rows = mdp.n_states() + 1, A = mdp.n_actions();
  const double gamma = weighting == CountWeighting::kDiscounted ? mdp.gamma() : 1.0;

  Visitation v;
  v.rho = Eigen::MatrixXd::Zero(rows, A);
  std::vector<int> counts_at_t;
  double norm = 0.0;
  for (const Trajectory& raw : trajectories) {
    const Trajectory traj = pad_absorbing(raw, mdp);
    if (traj.steps.empty()) throw Error("empirical_visitation: empty trajectory");
    double w = 1.0;
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const Step& st = traj.steps[t];
      if (st.state < 0 || st.state >= rows || st.action < 0 || st.action >= A)
        throw Error("empirical_visitation: step index out of range");
      v.rho(st.state, st.action) += w;
      norm += w;
      w *= gamma;
      if (t >= v.time_marginals.size()) {
        v.time_marginals.push_back(Eigen::MatrixXd::Zero(rows, A));
        counts_at_t.push_back(0);
      }
      v.time_marginals[t](st.state, st.action) += 1.0;
      counts_at_t[t] += 1;
    }
  }
  v.rho /= norm;
  for (std::size_t t = 0; t < v.time_marginals.size(); ++t) v.time_marginals[t] /= counts_at_t[t];
  return v;
}

double policy_return(const TabularMdp& mdp, const Policy& pi, const Eigen::MatrixXd& reward) {
  check_reward_table(mdp, reward);
  const Visitation v = exact_visitation(mdp, pi);
  return v.rho.topRows(mdp.n_states()).cwiseProduct(reward).sum() / (1.0 - mdp.gamma());
}

double policy_return(const TabularMdp& mdp, const Policy& pi, const RewardFn& reward) {
  return policy_return(mdp, pi, reward.state_action_table());
}

Eigen::MatrixXd soft_bellman_backup(const TabularMdp& mdp, const Eigen::MatrixXd& reward,
                                    const Eigen::MatrixXd& q, double temperature) {
  return reward + mdp.gamma() * expected_next(mdp, soft_max_values(q, temperature));
}

Policy soft_value_iteration(const TabularMdp& mdp, const Eigen::MatrixXd& reward,
                            double temperature, int n_iters) {
  check_reward_table(mdp, reward);
  if (!(temperature > 0.0)) throw Error("soft_value_iteration: temperature must be positive");
  if (n_iters < 1) throw Error("soft_value_iteration: n_iters must be >= 1");
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.n_states(), mdp.n_actions());
  for (int i = 0; i < n_iters; ++i) q = soft_bellman_backup(mdp, reward, q, temperature);
  return Policy::softmax(q, temperature);
}

Policy soft_value_iteration(const TabularMdp& mdp, const RewardFn& reward, double temperature,
                            int n_iters) {
  return soft_value_iteration(mdp, reward.state_action_table(), temperature, n_iters);
}

OptimalSolution hard_value_iteration(const TabularMdp& mdp, const Eigen::MatrixXd& reward) {
  check_reward_table(mdp, reward);
  const int S = mdp.n_states(), A = mdp.n_actions();
  const double gamma = mdp.gamma();

  Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
  const double tol = 1e-10;
  for (int it = 0; it < 100000; ++it) {
    const Eigen::VectorXd next = (reward + gamma * expected_next(mdp, v)).rowwise().maxCoeff();
    const double delta = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (delta <= tol) break;
  }

  // Policy iteration from the greedy policy settles the exact optimum.
  std::vector<int> actions = greedy_actions(reward + gamma * expected_next(mdp, v));
  for (int it = 0; it < 1000; ++it) {
    const Policy pi = Policy::deterministic(actions, A);
    v = evaluate(mdp, pi, reward);
    const Eigen::MatrixXd q = reward + gamma * expected_next(mdp, v);
    bool changed = false;
    for (int s = 0; s < S; ++s) {
      const double scale = 1e-12 * std::max(1.0, std::abs(q(s, actions[s])));
      int best = actions[s];
      for (int a = 0; a < A; ++a)
        if (q(s, a) > q(s, best) + scale) best = a;
      if (best != actions[s]) {
        actions[s] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }
  Policy pi = Policy::deterministic(actions, A);
  v = evaluate(mdp, pi, reward);
  const double j = mdp.rho0().dot(v);
  return OptimalSolution{std::move(pi), j, std::move(v)};
}

OptimalSolution hard_value_iteration(const TabularMdp& mdp, const RewardFn& reward) {
  return hard_value_iteration(mdp, reward.state_action_table());
}

std::vector<Trajectory> sample_trajectories(const TabularMdp& mdp, const Policy& pi, int n,
                                            std::uint64_t seed) {
  check_compatible(mdp, pi);
  if (n < 1) throw Error("sample_trajectories: n must be >= 1");
  Rng rng(seed);
  auto draw = [&rng](const auto& probs) {
    const double u = rng.uniform();
    double cum = 0.0;
    const Eigen::Index last = probs.size() - 1;
    for (Eigen::Index i = 0; i < last; ++i) {
      cum += probs[i];
      if (u < cum) return static_cast<int>(i);
    }
    // Skip trailing zero-probability entries.
    Eigen::Index i = last;
    while (i > 0 && probs[i] == 0.0) --i;
    return static_cast<int>(i);
  };

  std::vector<Trajectory> out(n);
  for (Trajectory& traj : out) {
    traj.steps.reserve(mdp.horizon());
    int s = draw(mdp.rho0());
    for (int t = 0; t < mdp.horizon(); ++t) {
      const int a = draw(pi.probs().row(s));
      traj.steps.push_back(Step{s, a});
      s = draw(mdp.next_distribution(s, a));
    }
  }
  return out;
}

}  // namespace rankgame
