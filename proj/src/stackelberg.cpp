#include "rankgame/stackelberg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rankgame/rng.hpp"

namespace rankgame {
namespace {

Visitation to_support(const Visitation& v, bool state_only) {
  return state_only ? v.state_marginal() : v;
}

LossKind fit_kind(GameLoss loss) {
  switch (loss) {
    case GameLoss::kSupremum: return LossKind::kSupremum;
    case GameLoss::kLk: return LossKind::kLk;
    case GameLoss::kSlkAuto: return LossKind::kSLk;
    case GameLoss::kOffline: return LossKind::kOfflineCombined;
  }
  return LossKind::kLk;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

void GameConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw Error(std::string("game.") + field + ": " + what);
  };
  require(rounds >= 1, "rounds", "must be >= 1");
  require(!n_pol || *n_pol >= 1, "n_pol", "must be >= 1");
  require(!n_rew || *n_rew >= 1, "n_rew", "must be >= 1");
  require(!k || *k > 0.0, "k", "must be positive");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(ral_policy_scale >= 1, "ral_policy_scale", "must be >= 1");
  require(p >= 1, "p", "must be >= 1");
  require(lambda >= 0.0 && lambda <= 1.0, "lambda", "must lie in [0, 1]");
  require(temperature > 0.0, "temperature", "must be positive");
  require(policy_lr > 0.0 && policy_lr <= 1.0, "policy_lr", "must lie in (0, 1]");
  require(policy_init_noise >= 0.0, "policy_init_noise", "must be >= 0");
  require(episodes_per_round >= 1, "episodes_per_round", "must be >= 1");
  require(reward_lr > 0.0, "reward_lr", "must be positive");
  require(l2_weight >= 0.0, "l2_weight", "must be >= 0");
  require(clamp.lo <= clamp.hi, "clamp", "lower bound exceeds upper bound");
  require(model_decay > 0.0 && model_decay <= 1.0, "model_decay", "must lie in (0, 1]");
  require(grad_tol >= 0.0, "grad_tol", "must be >= 0");
  require(snippet_length >= 1, "snippet_length", "must be >= 1");
  require(snippet_weight >= 0.0, "snippet_weight", "must be >= 0");
  require(loss != GameLoss::kOffline || offline_chain.has_value(), "offline_chain",
          "loss 'offline' needs an offline preference chain");
}

Schedule two_timescale_schedule(const GameConfig& config, int horizon, [[maybe_unused]] int round,
                                std::int64_t dataset_transitions) {
  const int n_pol = config.n_pol.value_or(horizon);
  if (config.leader == Leader::kPolicy) {
    const std::int64_t per_round = static_cast<std::int64_t>(horizon) * config.episodes_per_round;
    const int n_rew = config.n_rew.value_or(static_cast<int>(ceil_div(per_round, config.batch_size)));
    return Schedule{n_pol, n_rew};
  }
  const std::int64_t n_rew = std::max<std::int64_t>(1, ceil_div(dataset_transitions, config.batch_size));
  return Schedule{n_pol * config.ral_policy_scale, static_cast<int>(n_rew)};
}

Game::Game(TabularMdp mdp, ExpertData expert, GameConfig config)
    : mdp_(std::move(mdp)),
      expert_(std::move(expert)),
      config_(std::move(config)),
      k_(config_.k.value_or(mdp_.r_max())),
      state_{Policy::uniform(mdp_.n_states(), mdp_.n_actions()),
             RewardFn::tabular(config_.state_only ? RewardKind::kStateOnly : RewardKind::kStateAction,
                               mdp_.n_states(), mdp_.n_actions(), 0.0, config_.clamp),
             Eigen::MatrixXd::Zero(mdp_.n_states(), mdp_.n_actions()),
             Eigen::MatrixXd::Zero(mdp_.n_states() * mdp_.n_actions(), mdp_.n_states()),
             {},
             0,
             0,
             {}} {
  config_.validate();
  config_.shaping.k_max = k_;
  expert_.demo = to_support(expert_.demo, config_.state_only);
  if (expert_.demo.rho.rows() != mdp_.n_states() + 1)
    throw Error("expert visitation does not match the MDP");
  if (config_.offline_chain) {
    for (auto& member : config_.offline_chain->members) {
      member = to_support(member, config_.state_only);
      if (member.rho.rows() != expert_.demo.rho.rows() || member.rho.cols() != expert_.demo.rho.cols())
        throw Error("offline chain member does not match the expert visitation shape");
    }
    config_.offline_chain->validate();
  }
  if (config_.policy_init_noise > 0.0) {
    Rng rng(mix_seed(config_.seed, 0x51));
    for (Eigen::Index i = 0; i < state_.q.size(); ++i)
      state_.q(i) = config_.policy_init_noise * rng.uniform(-1.0, 1.0);
  }
  state_.policy = Policy::softmax(state_.q, config_.temperature);
}

void Game::improve_policy(int n_pol) {
  const TabularMdp model = planning_model();
  const Eigen::MatrixXd reward = state_.reward.state_action_table();
  const double eta = config_.policy_lr;
  for (int i = 0; i < n_pol; ++i) {
    const Eigen::MatrixXd target = soft_bellman_backup(model, reward, state_.q, config_.temperature);
    state_.q = eta == 1.0 ? target : Eigen::MatrixXd((1.0 - eta) * state_.q + eta * target);
  }
  state_.policy = Policy::softmax(state_.q, config_.temperature);
}

// Maximum-likelihood transitions. State-actions with less than one (decayed)
// observation are treated as self-loops.
TabularMdp Game::planning_model() const {
  if (!config_.use_empirical || !config_.learned_model) return mdp_;
  const int A = mdp_.n_actions();
  Eigen::MatrixXd p = state_.transition_counts;
  for (Eigen::Index row = 0; row < p.rows(); ++row) {
    const double total = p.row(row).sum();
    if (total >= 1.0) {
      p.row(row) /= total;
    } else {
      p.row(row).setZero();
      p(row, row / A) = 1.0;
    }
  }
  return mdp_.with_transition(std::move(p));
}

RankingDataset Game::training_dataset() const {
  RankingDataset data;
  data.pairs = state_.online_dataset.pairs;
  if (config_.loss == GameLoss::kSlkAuto) {
    for (const auto& pair : data.pairs)
      data.chains.push_back(
          make_auto_chain(pair.lesser, pair.greater, config_.p, config_.shaping, mdp_.gamma()));
  } else if (config_.loss == GameLoss::kOffline) {
    data.chains.push_back(*config_.offline_chain);
  }
  return data;
}

double Game::true_return_ratio() const {
  if (!mdp_.true_reward()) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::MatrixXd& truth = *mdp_.true_reward();
  const double denom = *expert_return_;
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return policy_return(mdp_, state_.policy, truth) / denom;
}

const GameReport& Game::step() {
  const int round = state_.round + 1;
  const std::int64_t per_round = static_cast<std::int64_t>(mdp_.horizon()) * config_.episodes_per_round;
  const bool pal = config_.leader == Leader::kPolicy;
  const std::int64_t transitions = pal ? per_round : dataset_transitions_ + per_round;
  const Schedule schedule = two_timescale_schedule(config_, mdp_.horizon(), round, transitions);

  // Exact mode scores the improved policy. Empirical mode scores the rollouts
  // collected while improving, which also feed the learned model.
  Visitation agent;
  if (config_.use_empirical) {
    const auto trajectories = sample_trajectories(mdp_, state_.policy, config_.episodes_per_round,
                                                  mix_seed(config_.seed, static_cast<std::uint64_t>(round)));
    const int A = mdp_.n_actions();
    if (config_.model_decay < 1.0) state_.transition_counts *= config_.model_decay;
    for (const auto& t : trajectories)
      for (std::size_t i = 0; i + 1 < t.steps.size(); ++i)
        state_.transition_counts(t.steps[i].state * A + t.steps[i].action, t.steps[i + 1].state) += 1.0;
    agent = empirical_visitation(trajectories, mdp_);
    improve_policy(schedule.n_pol);
  } else {
    improve_policy(schedule.n_pol);
    agent = exact_visitation(mdp_, state_.policy);
  }
  state_.env_steps += per_round;

  RankingPair pair{to_support(agent, config_.state_only), expert_.demo, PairSource::kOnlineAgentVsExpert};
  if (pal) state_.online_dataset.pairs.clear();
  state_.online_dataset.pairs.push_back(pair);
  dataset_transitions_ = transitions;

  FitConfig fit;
  fit.learning_rate = config_.reward_lr;
  fit.l2_weight = config_.l2_weight;
  fit.clamp = config_.clamp;
  fit.max_steps = schedule.n_rew;
  fit.grad_tol = config_.grad_tol;
  fit.k = k_;
  fit.lambda = config_.lambda;
  fit.use_snippets = config_.use_snippets;
  fit.snippet_length = config_.snippet_length;
  fit.snippet_weight = config_.snippet_weight;

  const RewardFn init = config_.warm_start_reward
                            ? state_.reward
                            : RewardFn::tabular(state_.reward.kind(), mdp_.n_states(),
                                                mdp_.n_actions(), 0.0, config_.clamp);
  state_.reward = fit_reward_gd(training_dataset(), init, fit_kind(config_.loss), fit).reward;
  state_.round = round;

  if (!expert_return_) {
    if (expert_.policy && mdp_.true_reward())
      expert_return_ = policy_return(mdp_, *expert_.policy, *mdp_.true_reward());
    else if (mdp_.true_reward())
      expert_return_ = hard_value_iteration(mdp_, *mdp_.true_reward()).optimal_return;
    else
      expert_return_ = std::numeric_limits<double>::quiet_NaN();
  }

  const Certificate cert = theorem1_certificate(mdp_, state_.policy, state_.reward, expert_.reference, k_);
  RankingDataset current;
  current.pairs.push_back(std::move(pair));

  GameReport report;
  report.round = round;
  report.ranking_loss = loss_Lk(current, state_.reward, k_);
  report.eps_r = cert.eps_r;
  report.eps_pi = cert.eps_pi;
  report.f_divergence = cert.f_divergence;
  report.bound_rhs = cert.bound_rhs;
  report.bound_satisfied = cert.satisfied;
  report.true_return_ratio = true_return_ratio();
  report.env_steps = state_.env_steps;
  state_.history.push_back(report);
  return state_.history.back();
}

void Game::replace_mdp(TabularMdp mdp) {
  if (mdp.n_states() != mdp_.n_states() || mdp.n_actions() != mdp_.n_actions())
    throw Error("replacement MDP changes dimensions");
  mdp_ = std::move(mdp);
  expert_return_.reset();
}

void Game::replace_expert(ExpertData expert) {
  expert.demo = to_support(expert.demo, config_.state_only);
  if (expert.demo.rho.rows() != expert_.demo.rho.rows() || expert.demo.rho.cols() != expert_.demo.rho.cols())
    throw Error("replacement expert changes the visitation shape");
  expert_ = std::move(expert);
  expert_return_.reset();
}

namespace {

GameState run_loop(const TabularMdp& mdp, const ExpertData& expert, const GameConfig& config,
                   Leader required) {
  if (config.leader != required)
    throw Error(required == Leader::kPolicy ? "run_pal needs leader = policy"
                                            : "run_ral needs leader = reward");
  Game game(mdp, expert, config);
  for (int r = 0; r < config.rounds; ++r) game.step();
  return game.state();
}

}  // namespace

GameState run_pal(const TabularMdp& mdp, const ExpertData& expert, const GameConfig& config) {
  return run_loop(mdp, expert, config, Leader::kPolicy);
}
GameState run_pal(const TabularMdp& mdp, const Visitation& expert, const GameConfig& config) {
  return run_pal(mdp, ExpertData::exact(expert), config);
}
GameState run_ral(const TabularMdp& mdp, const ExpertData& expert, const GameConfig& config) {
  return run_loop(mdp, expert, config, Leader::kReward);
}
GameState run_ral(const TabularMdp& mdp, const Visitation& expert, const GameConfig& config) {
  return run_ral(mdp, ExpertData::exact(expert), config);
}

std::string to_string(Leader leader) { return leader == Leader::kPolicy ? "policy" : "reward"; }

std::string to_string(GameLoss loss) {
  switch (loss) {
    case GameLoss::kSupremum: return "supremum";
    case GameLoss::kLk: return "lk";
    case GameLoss::kSlkAuto: return "slk_auto";
    case GameLoss::kOffline: return "offline";
  }
  return "unknown";
}

Leader leader_from_string(const std::string& name) {
  if (name == "policy" || name == "pal") return Leader::kPolicy;
  if (name == "reward" || name == "ral") return Leader::kReward;
  throw Error("unknown leader '" + name + "' (expected policy or reward)");
}

GameLoss game_loss_from_string(const std::string& name) {
  if (name == "supremum") return GameLoss::kSupremum;
  if (name == "lk") return GameLoss::kLk;
  if (name == "slk_auto") return GameLoss::kSlkAuto;
  if (name == "offline") return GameLoss::kOffline;
  throw Error("unknown loss '" + name + "' (expected supremum, lk, slk_auto or offline)");
}

}  // namespace rankgame
