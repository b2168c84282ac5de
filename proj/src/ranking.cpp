#include "rankgame/ranking.hpp"

#include <algorithm>
#include <cmath>

namespace rankgame {
namespace {

// Visitation mass laid out on the reward value table: state-only rewards fold
// the action columns together.
Eigen::MatrixXd fold(const Visitation& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.rho.rows() != rows)
    throw Error("visitation has " + std::to_string(v.rho.rows()) + " rows, reward table has " +
                std::to_string(rows));
  if (v.rho.cols() == cols) return v.rho;
  if (cols == 1) return v.rho.rowwise().sum();
  throw Error("state-action reward cannot be evaluated on a state-only visitation");
}

void match_support(Visitation& a, Visitation& b) {
  if (a.support == b.support) return;
  a = a.state_marginal();
  b = b.state_marginal();
}

// loss(V) = sum(a .* V^2 - 2 b .* V + lin .* V) + c, gradient 2 a .* V - 2 b + lin.
struct Quadratic {
  Eigen::MatrixXd a, b, lin;
  double c = 0.0;

  Quadratic(Eigen::Index rows, Eigen::Index cols)
      : a(Eigen::MatrixXd::Zero(rows, cols)),
        b(Eigen::MatrixXd::Zero(rows, cols)),
        lin(Eigen::MatrixXd::Zero(rows, cols)) {}

  void add_target(const Visitation& v, double weight, double target) {
    const Eigen::MatrixXd f = fold(v, a.rows(), a.cols());
    a += weight * f;
    b += (weight * target) * f;
    c += weight * target * target * f.sum();
  }
  void add_linear(const Visitation& v, double weight) { lin += weight * fold(v, a.rows(), a.cols()); }

  double value(const Eigen::MatrixXd& V) const {
    return (a.cwiseProduct(V.cwiseProduct(V)) - 2.0 * b.cwiseProduct(V) + lin.cwiseProduct(V)).sum() + c;
  }
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& V) const { return 2.0 * a.cwiseProduct(V) - 2.0 * b + lin; }
};

struct SnippetTerm {
  const Trajectory* trajectory;
  std::size_t start;
  double target_sum;
  double weight;
};

struct Objective {
  Quadratic quad;
  std::vector<SnippetTerm> snippets;
  int snippet_length = 0;

  double value(const RewardFn& reward) const {
    const Eigen::MatrixXd V = reward.values();
    double total = quad.value(V);
    for (const auto& term : snippets) {
      const double e = window_sum(reward, term) - term.target_sum;
      total += term.weight * e * e;
    }
    return total;
  }

  Eigen::MatrixXd value_gradient(const RewardFn& reward) const {
    const Eigen::MatrixXd V = reward.values();
    Eigen::MatrixXd g = quad.gradient(V);
    const bool state_only = reward.kind() == RewardKind::kStateOnly;
    for (const auto& term : snippets) {
      const double e = window_sum(reward, term) - term.target_sum;
      for (int j = 0; j < snippet_length; ++j) {
        const Step& st = term.trajectory->steps[term.start + j];
        g(st.state, state_only ? 0 : st.action) += 2.0 * term.weight * e;
      }
    }
    return g;
  }

  double window_sum(const RewardFn& reward, const SnippetTerm& term) const {
    double sum = 0.0;
    for (int j = 0; j < snippet_length; ++j) {
      const Step& st = term.trajectory->steps[term.start + j];
      sum += reward(st.state, st.action);
    }
    return sum;
  }
};

void add_pairs(Quadratic& q, const std::vector<RankingPair>& pairs, double weight, double k) {
  if (pairs.empty()) return;
  const double w = weight / static_cast<double>(pairs.size());
  for (const auto& pair : pairs) {
    q.add_target(pair.lesser, w, 0.0);
    q.add_target(pair.greater, w, k);
  }
}

void add_chains(Objective& obj, const std::vector<RankingChain>& chains, double weight,
                const FitConfig& config) {
  if (chains.empty()) return;
  const double w_chain = weight / static_cast<double>(chains.size());
  for (const auto& chain : chains) {
    chain.validate();
    const double w = w_chain / static_cast<double>(chain.members.size());
    for (std::size_t i = 0; i < chain.members.size(); ++i)
      obj.quad.add_target(chain.members[i], w, chain.targets[i]);
  }
  if (!config.use_snippets) return;
  const int l = config.snippet_length;
  if (l < 1) throw Error("snippet length must be >= 1");
  obj.snippet_length = l;
  std::vector<SnippetTerm> terms;
  for (const auto& chain : chains) {
    if (chain.trajectories.empty()) continue;
    for (std::size_t i = 0; i < chain.members.size(); ++i)
      for (const Trajectory& traj : chain.trajectories[i]) {
        if (static_cast<int>(traj.steps.size()) < l) continue;
        for (std::size_t start = 0; start + l <= traj.steps.size(); ++start)
          terms.push_back(SnippetTerm{&traj, start, chain.targets[i] * l, 0.0});
      }
  }
  if (terms.empty()) return;
  // Windows are scaled by 1/l^2 so a window error is comparable to a per-step one.
  const double w = weight * config.snippet_weight /
                   (static_cast<double>(terms.size()) * static_cast<double>(l) * l);
  for (auto& term : terms) term.weight = w;
  obj.snippets.insert(obj.snippets.end(), terms.begin(), terms.end());
}

Objective build_objective(const RankingDataset& dataset, const RewardFn& reward, LossKind kind,
                          const FitConfig& config) {
  Objective obj{Quadratic(reward.table_rows(), reward.table_cols()), {}, 0};
  switch (kind) {
    case LossKind::kLk:
      if (dataset.pairs.empty()) throw Error("L_k loss needs at least one ranking pair");
      add_pairs(obj.quad, dataset.pairs, 1.0, config.k);
      break;
    case LossKind::kSLk:
      if (dataset.chains.empty()) throw Error("SL_k loss needs at least one ranking chain");
      add_chains(obj, dataset.chains, 1.0, config);
      break;
    case LossKind::kOfflineCombined: {
      const double lambda = config.lambda;
      if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
      if (lambda > 0.0 && dataset.pairs.empty())
        throw Error("offline-combined loss with lambda > 0 needs an online pair");
      if (lambda < 1.0 && dataset.chains.empty())
        throw Error("offline-combined loss with lambda < 1 needs an offline chain");
      if (lambda > 0.0) add_pairs(obj.quad, dataset.pairs, lambda, config.k);
      if (lambda < 1.0) add_chains(obj, dataset.chains, 1.0 - lambda, config);
      break;
    }
    case LossKind::kSupremum: {
      if (dataset.pairs.empty()) throw Error("supremum loss needs at least one ranking pair");
      const double w = 1.0 / static_cast<double>(dataset.pairs.size());
      for (const auto& pair : dataset.pairs) {
        obj.quad.add_linear(pair.greater, -w);
        obj.quad.add_linear(pair.lesser, w);
      }
      break;
    }
  }
  return obj;
}

}  // namespace

void RankingChain::validate() const {
  if (members.empty()) throw Error("ranking chain has no members");
  if (targets.size() != members.size()) throw Error("ranking chain targets do not match members");
  for (std::size_t i = 1; i < targets.size(); ++i)
    if (targets[i] < targets[i - 1]) throw Error("ranking chain targets must be nondecreasing");
  if (!trajectories.empty() && trajectories.size() != members.size())
    throw Error("ranking chain trajectories do not match members");
}

double expectation(const Visitation& v, const Eigen::MatrixXd& values) {
  return fold(v, values.rows(), values.cols()).cwiseProduct(values).sum();
}

double loss_Lk(const RankingDataset& dataset, const RewardFn& reward, double k) {
  if (dataset.pairs.empty()) throw Error("loss_Lk: dataset has no pairs");
  const Eigen::MatrixXd V = reward.values();
  const Eigen::MatrixXd V_k = V.array() - k;
  double total = 0.0;
  for (const auto& pair : dataset.pairs)
    total += expectation(pair.lesser, V.cwiseProduct(V)) +
             expectation(pair.greater, V_k.cwiseProduct(V_k));
  return total / static_cast<double>(dataset.pairs.size());
}

double loss_SLk(const RankingChain& chain, const RewardFn& reward) {
  chain.validate();
  const Eigen::MatrixXd V = reward.values();
  double total = 0.0;
  for (std::size_t i = 0; i < chain.members.size(); ++i) {
    const Eigen::MatrixXd e = V.array() - chain.targets[i];
    total += expectation(chain.members[i], e.cwiseProduct(e));
  }
  return total / static_cast<double>(chain.members.size());
}

double loss_offline_combined(const RankingDataset& online, const RankingChain& offline_chain,
                             const RewardFn& reward, double k, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
  double total = 0.0;
  if (lambda > 0.0) total += lambda * loss_Lk(online, reward, k);
  if (lambda < 1.0) total += (1.0 - lambda) * loss_SLk(offline_chain, reward);
  return total;
}

Eigen::MatrixXd closed_form_table(const Visitation& agent_in, const Visitation& expert_in, double k) {
  if (!(k > 0.0)) throw Error("closed_form_reward: k must be positive");
  Visitation agent = agent_in, expert = expert_in;
  match_support(agent, expert);
  if (agent.rho.rows() != expert.rho.rows() || agent.rho.cols() != expert.rho.cols())
    throw Error("closed_form_reward: visitation shapes differ");
  Eigen::MatrixXd out(agent.rho.rows(), agent.rho.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double e = expert.rho(i), p = agent.rho(i);
    out(i) = (e + p > 0.0) ? k * e / (e + p) : 0.5 * k;
  }
  return out;
}

RewardFn closed_form_reward(const Visitation& agent, const Visitation& expert, double k) {
  const Eigen::MatrixXd table = closed_form_table(agent, expert, k);
  const bool state_only = agent.support == Support::kState || expert.support == Support::kState;
  const RewardKind kind = state_only ? RewardKind::kStateOnly : RewardKind::kStateAction;
  const int n_actions = state_only ? 1 : static_cast<int>(table.cols());
  return RewardFn::from_table(kind, n_actions, table, ClampRange{0.0, k});
}

Eigen::VectorXd loss_supremum_grad(const Visitation& agent, const Visitation& expert,
                                   const RewardFn& reward) {
  const auto rows = reward.table_rows(), cols = reward.table_cols();
  return reward.pullback(fold(expert, rows, cols) - fold(agent, rows, cols));
}

std::vector<double> interpolation_alphas(int p) {
  if (p < 1) throw Error("number of interpolants must be >= 1");
  std::vector<double> alphas(p);
  for (int i = 1; i <= p; ++i) alphas[i - 1] = static_cast<double>(i) / (p + 1);
  return alphas;
}

std::vector<Visitation> make_interpolants(const Visitation& agent_in, const Visitation& expert_in,
                                          int p, double gamma) {
  Visitation agent = agent_in, expert = expert_in;
  match_support(agent, expert);
  if (!agent.has_time_marginals() || !expert.has_time_marginals())
    throw Error("make_interpolants: both visitations need time marginals");
  if (agent.time_marginals.size() != expert.time_marginals.size())
    throw Error("make_interpolants: time marginal lengths differ");
  if (agent.rho.rows() != expert.rho.rows() || agent.rho.cols() != expert.rho.cols())
    throw Error("make_interpolants: visitation shapes differ");

  std::vector<Visitation> out;
  for (double alpha : interpolation_alphas(p)) {
    Visitation v;
    v.support = agent.support;
    v.time_marginals.reserve(agent.time_marginals.size());
    for (std::size_t t = 0; t < agent.time_marginals.size(); ++t)
      v.time_marginals.push_back(agent.time_marginals[t] +
                                 alpha * (expert.time_marginals[t] - agent.time_marginals[t]));
    v.rho = aggregate_time_marginals(v.time_marginals, gamma);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<double> shape_targets(const ShapingFamily& family, std::span<const double> alphas) {
  std::vector<double> out;
  out.reserve(alphas.size());
  for (double alpha : alphas) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("shape_targets: alpha outside [0, 1]");
    const bool linear = family.kind == ShapingFamily::Kind::kLinear || std::abs(family.beta) < 1e-12;
    out.push_back(linear ? alpha * family.k_max
                         : family.k_max * std::expm1(family.beta * alpha) / std::expm1(family.beta));
  }
  return out;
}

RankingChain make_auto_chain(const Visitation& agent, const Visitation& expert, int p,
                             const ShapingFamily& family, double gamma) {
  RankingChain chain;
  std::vector<double> alphas{0.0};
  const auto inner = interpolation_alphas(p);
  alphas.insert(alphas.end(), inner.begin(), inner.end());
  alphas.push_back(1.0);

  Visitation a = agent, e = expert;
  match_support(a, e);
  chain.members.push_back(a);
  for (auto& v : make_interpolants(a, e, p, gamma)) chain.members.push_back(std::move(v));
  chain.members.push_back(e);
  chain.targets = shape_targets(family, alphas);
  return chain;
}

std::vector<double> augment_snippets(std::span<const Trajectory> trajectories,
                                     std::span<const double> targets, int l,
                                     const RewardFn& reward) {
  if (l < 1) throw Error("augment_snippets: snippet length must be >= 1");
  if (targets.size() != trajectories.size())
    throw Error("augment_snippets: one target per trajectory is required");
  std::vector<double> terms;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& steps = trajectories[i].steps;
    if (static_cast<int>(steps.size()) < l) continue;
    for (std::size_t start = 0; start + l <= steps.size(); ++start) {
      double sum = 0.0;
      for (int j = 0; j < l; ++j) sum += reward(steps[start + j].state, steps[start + j].action);
      const double e = sum - targets[i] * l;
      terms.push_back(e * e);
    }
  }
  return terms;
}

double ranking_objective(const RankingDataset& dataset, const RewardFn& reward, LossKind kind,
                         const FitConfig& config) {
  return build_objective(dataset, reward, kind, config).value(reward);
}

FitResult fit_reward_gd(const RankingDataset& dataset, const RewardFn& init, LossKind kind,
                        const FitConfig& config) {
  if (config.max_steps < 0) throw Error("fit_reward_gd: max_steps must be >= 0");
  if (!(config.learning_rate > 0.0)) throw Error("fit_reward_gd: learning rate must be positive");
  const Objective obj = build_objective(dataset, init, kind, config);

  RewardFn reward = init;
  const bool tabular = reward.is_tabular();
  const ClampRange clamp = reward.clamp();

  auto projected_gradient = [&](const RewardFn& r) {
    Eigen::VectorXd g = r.pullback(obj.value_gradient(r)) + config.l2_weight * r.params();
    if (tabular) {
      const Eigen::VectorXd& theta = r.params();
      for (Eigen::Index i = 0; i < g.size(); ++i)
        if ((theta[i] <= clamp.lo && g[i] > 0.0) || (theta[i] >= clamp.hi && g[i] < 0.0)) g[i] = 0.0;
    }
    return g;
  };

  FitResult result{reward, 0, 0.0, false, 0.0};
  Eigen::VectorXd g = projected_gradient(reward);
  result.grad_norm = g.norm();
  while (result.steps < config.max_steps) {
    if (result.grad_norm < config.grad_tol) {
      result.converged = true;
      break;
    }
    reward.set_params(reward.params() - config.learning_rate * g);
    ++result.steps;
    g = projected_gradient(reward);
    result.grad_norm = g.norm();
  }
  if (result.grad_norm < config.grad_tol) result.converged = true;
  result.reward = std::move(reward);
  result.loss = obj.value(result.reward);
  return result;
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSupremum: return "supremum";
    case LossKind::kLk: return "lk";
    case LossKind::kSLk: return "slk";
    case LossKind::kOfflineCombined: return "offline";
  }
  return "unknown";
}

std::string to_string(PairSource source) {
  switch (source) {
    case PairSource::kOnlineAgentVsExpert: return "online_agent_vs_expert";
    case PairSource::kAutoInterpolant: return "auto_interpolant";
    case PairSource::kOfflineAnnotated: return "offline_annotated";
  }
  return "unknown";
}

PairSource pair_source_from_string(const std::string& name) {
  if (name == "online_agent_vs_expert") return PairSource::kOnlineAgentVsExpert;
  if (name == "auto_interpolant") return PairSource::kAutoInterpolant;
  if (name == "offline_annotated") return PairSource::kOfflineAnnotated;
  throw Error("unknown ranking pair source '" + name + "'");
}

}  // namespace rankgame
