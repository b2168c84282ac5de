#include "rankgame/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rankgame/rng.hpp"

namespace rankgame {
namespace {

// Action order: up, down, left, right.
constexpr int kDx[4] = {0, 0, -1, 1};
constexpr int kDy[4] = {-1, 1, 0, 0};

int default_horizon(const ScenarioSpec& spec) {
  switch (spec.env) {
    case EnvKind::kGridworld: return 2 * (spec.width + spec.height);
    case EnvKind::kChain: return 2 * spec.chain_length;
    case EnvKind::kRandom: return 20;
    case EnvKind::kBandit: return 10;
  }
  return 20;
}

int goal_x(const ScenarioSpec& spec) { return spec.goal_x.value_or(spec.width - 1); }
int goal_y(const ScenarioSpec& spec) { return spec.goal_y.value_or(spec.height - 1); }

Eigen::VectorXd dirichlet_ones(Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = -std::log(1.0 - rng.uniform());
  return v / v.sum();
}

Policy solve_expert(const TabularMdp& mdp, const ScenarioSpec& spec) {
  if (spec.expert_source == ExpertSource::kProvided) {
    if (!spec.provided_policy) throw Error("scenario.provided_policy: required for expert_source provided");
    Policy pi(*spec.provided_policy);
    if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions())
      throw Error("scenario.provided_policy: dimensions do not match the environment");
    return pi;
  }
  if (!mdp.true_reward()) throw Error("scenario: optimal expert needs a true reward");
  return hard_value_iteration(mdp, *mdp.true_reward()).policy;
}

}  // namespace

void ScenarioSpec::validate() const {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw Error(std::string("scenario.") + field + ": " + what);
  };
  require(width >= 1 && height >= 1, "width", "grid dimensions must be positive");
  require(goal_x.value_or(0) >= 0 && goal_x.value_or(0) < width, "goal_x", "outside the grid");
  require(goal_y.value_or(0) >= 0 && goal_y.value_or(0) < height, "goal_y", "outside the grid");
  require(slip >= 0.0 && slip < 1.0, "slip", "must lie in [0, 1)");
  require(chain_length >= 2, "chain_length", "must be >= 2");
  require(n_states >= 1 && n_actions >= 1, "n_states", "dimensions must be positive");
  require(n_arms >= 1, "n_arms", "must be >= 1");
  require(arm_rewards.empty() || static_cast<int>(arm_rewards.size()) == n_arms, "arm_rewards",
          "needs one entry per arm");
  require(gamma >= 0.0 && gamma < 1.0, "gamma", "must lie in [0, 1)");
  require(!horizon || *horizon >= 1, "horizon", "must be >= 1");
  require(r_max > 0.0, "r_max", "must be positive");
  require(n_expert_trajectories >= 1, "n_expert_trajectories", "must be >= 1");
  require(offline_levels == 0 || offline_levels >= 2, "offline_levels", "must be 0 or >= 2");
  require(offline_max_temperature >= offline_min_temperature && offline_min_temperature > 0.0,
          "offline_min_temperature", "temperatures must satisfy 0 < min <= max");
  if (mutation) {
    require(mutation->round >= 1, "mutation.round", "must be >= 1");
    require(mutation->slip >= 0.0 && mutation->slip <= 1.0, "mutation.slip", "must lie in [0, 1]");
    require(mutation->kind != MutationKind::kIntentChange || env == EnvKind::kGridworld, "mutation.kind",
            "intent_change is defined for gridworld scenarios");
    require(mutation->kind != MutationKind::kIntentChange || expert_source == ExpertSource::kOptimal,
            "mutation.kind", "intent_change needs an optimal expert");
  }
}

TabularMdp make_gridworld(int width, int height, int gx, int gy, double slip, double gamma,
                          int horizon, double r_max) {
  const int S = width * height, A = 4;
  const int goal = gy * width + gx;
  Eigen::MatrixXd transition = Eigen::MatrixXd::Zero(S * A, S);
  auto move = [&](int s, int dir) {
    const int x = s % width + kDx[dir], y = s / width + kDy[dir];
    if (x < 0 || x >= width || y < 0 || y >= height) return s;
    return y * width + x;
  };
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      auto row = transition.row(s * A + a);
      if (s == goal) {
        row[s] = 1.0;
        continue;
      }
      row[move(s, a)] += 1.0 - slip;
      for (int dir = 0; dir < A; ++dir) row[move(s, dir)] += slip / A;
    }
  Eigen::VectorXd rho0 = Eigen::VectorXd::Zero(S);
  rho0[0] = 1.0;
  Eigen::MatrixXd reward = Eigen::MatrixXd::Zero(S, A);
  reward.row(goal).setConstant(r_max);
  return TabularMdp(S, A, std::move(transition), gamma, std::move(rho0), horizon, r_max, reward);
}

TabularMdp make_chain(int n, bool reset, double slip, double gamma, int horizon, double r_max) {
  const int A = 2;
  Eigen::MatrixXd transition = Eigen::MatrixXd::Zero(n * A, n);
  for (int s = 0; s < n; ++s) {
    if (s == n - 1) {
      transition(s * A, s) = transition(s * A + 1, s) = 1.0;
      continue;
    }
    const int left = reset ? 0 : std::max(s - 1, 0), right = s + 1;
    transition(s * A, left) += 1.0 - slip / 2;
    transition(s * A, right) += slip / 2;
    transition(s * A + 1, right) += 1.0 - slip / 2;
    transition(s * A + 1, left) += slip / 2;
  }
  Eigen::VectorXd rho0 = Eigen::VectorXd::Zero(n);
  rho0[0] = 1.0;
  Eigen::MatrixXd reward = Eigen::MatrixXd::Zero(n, A);
  reward.row(n - 1).setConstant(r_max);
  return TabularMdp(n, A, std::move(transition), gamma, std::move(rho0), horizon, r_max, reward);
}

TabularMdp make_random_mdp(int n_states, int n_actions, std::uint64_t seed, double gamma,
                           int horizon, double r_max) {
  Rng rng(mix_seed(seed, 0x4d4450));
  Eigen::MatrixXd transition(n_states * n_actions, n_states);
  for (int row = 0; row < transition.rows(); ++row)
    transition.row(row) = dirichlet_ones(rng, n_states).transpose();
  Eigen::VectorXd rho0 = dirichlet_ones(rng, n_states);
  Eigen::MatrixXd reward(n_states, n_actions);
  for (Eigen::Index i = 0; i < reward.size(); ++i) reward(i) = rng.uniform(0.0, r_max);
  return TabularMdp(n_states, n_actions, std::move(transition), gamma, std::move(rho0), horizon,
                    r_max, reward);
}

TabularMdp make_bandit(const std::vector<double>& arm_rewards, double gamma, int horizon,
                       double r_max) {
  const int A = static_cast<int>(arm_rewards.size());
  if (A < 1) throw Error("bandit needs at least one arm");
  Eigen::MatrixXd transition = Eigen::MatrixXd::Ones(A, 1);
  Eigen::MatrixXd reward(1, A);
  for (int a = 0; a < A; ++a) reward(0, a) = arm_rewards[a];
  return TabularMdp(1, A, std::move(transition), gamma, Eigen::VectorXd::Ones(1), horizon, r_max,
                    reward);
}

TabularMdp build_mdp(const ScenarioSpec& spec) {
  spec.validate();
  const int horizon = spec.horizon.value_or(default_horizon(spec));
  switch (spec.env) {
    case EnvKind::kGridworld:
      return make_gridworld(spec.width, spec.height, goal_x(spec), goal_y(spec), spec.slip,
                            spec.gamma, horizon, spec.r_max);
    case EnvKind::kChain:
      return make_chain(spec.chain_length, spec.chain_reset, spec.slip, spec.gamma, horizon,
                        spec.r_max);
    case EnvKind::kRandom:
      return make_random_mdp(spec.n_states, spec.n_actions, spec.env_seed, spec.gamma, horizon,
                             spec.r_max);
    case EnvKind::kBandit: {
      std::vector<double> arms = spec.arm_rewards;
      if (arms.empty()) {
        arms.resize(spec.n_arms, spec.r_max);
        for (int i = 0; i < spec.n_arms && spec.n_arms > 1; ++i)
          arms[i] = spec.r_max * (1.0 - static_cast<double>(i) / (spec.n_arms - 1));
      }
      return make_bandit(arms, spec.gamma, horizon, spec.r_max);
    }
  }
  throw Error("unknown environment kind");
}

ExpertData make_expert_data(const TabularMdp& mdp, const Policy& policy, const ScenarioSpec& spec,
                            std::uint64_t seed) {
  ExpertData data;
  data.policy = policy;
  data.reference = exact_visitation(mdp, policy);
  if (spec.expert_mode == ExpertMode::kExact) {
    data.demo = data.reference;
  } else {
    data.trajectories = sample_trajectories(mdp, policy, spec.n_expert_trajectories, mix_seed(seed, 0xE0));
    data.demo = empirical_visitation(data.trajectories, mdp);
  }
  if (spec.lfo) {
    data.reference = data.reference.state_marginal();
    data.demo = data.demo.state_marginal();
  }
  return data;
}

BuiltEnv build_env(const ScenarioSpec& spec, std::uint64_t seed) {
  TabularMdp mdp = build_mdp(spec);
  Policy expert_policy = solve_expert(mdp, spec);
  ExpertData expert = make_expert_data(mdp, expert_policy, spec, seed);
  return BuiltEnv{std::move(mdp), std::move(expert), std::move(expert_policy)};
}

TabularMdp perturb_dynamics(const TabularMdp& mdp, double slip, int action_shift) {
  if (!(slip >= 0.0 && slip <= 1.0)) throw Error("dynamics change: slip must lie in [0, 1]");
  const int S = mdp.n_states(), A = mdp.n_actions();
  const int shift = ((action_shift % A) + A) % A;
  Eigen::MatrixXd out(S * A, S);
  for (int s = 0; s < S; ++s) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(S);
    for (int a = 0; a < A; ++a) mean += mdp.next_distribution(s, a);
    mean /= A;
    for (int a = 0; a < A; ++a) {
      const int src = (a + shift) % A;
      Eigen::RowVectorXd row = (1.0 - slip) * mdp.next_distribution(s, src) + slip * mean;
      if ((row.array() < -1e-12).any()) throw Error("dynamics change produced negative probabilities");
      row = row.cwiseMax(0.0);
      const double total = row.sum();
      if (!(total > 0.0)) throw Error("dynamics change produced an empty transition row");
      out.row(s * A + a) = row / total;
    }
  }
  return mdp.with_transition(std::move(out));
}

MutationResult apply_mutation(const TabularMdp& mdp, const ScenarioSpec& spec, int round,
                              std::uint64_t seed) {
  if (!spec.mutation || spec.mutation->round != round) return MutationResult{mdp, std::nullopt, false};
  const Mutation& m = *spec.mutation;
  if (m.kind == MutationKind::kIntentChange) {
    if (spec.env != EnvKind::kGridworld) throw Error("intent change is defined for gridworld scenarios");
    ScenarioSpec changed = spec;
    changed.goal_x = m.goal_x.value_or(spec.width - 1 - goal_x(spec));
    changed.goal_y = m.goal_y.value_or(goal_y(spec));
    changed.mutation.reset();
    TabularMdp next = build_mdp(changed);
    Policy expert = solve_expert(next, changed);
    ExpertData data = make_expert_data(next, expert, changed, mix_seed(seed, 0x1c));
    return MutationResult{std::move(next), std::move(data), true, true};
  }
  TabularMdp next = perturb_dynamics(mdp, m.slip, m.action_shift);
  Policy expert = solve_expert(next, spec);
  ExpertData data = make_expert_data(next, expert, spec, mix_seed(seed, 0xd1));
  return MutationResult{std::move(next), std::move(data), true, false};
}

std::vector<double> offline_temperatures(int n_levels, double max_temperature,
                                         double min_temperature, bool grounded) {
  if (n_levels < 2) throw Error("offline preferences need at least 2 levels");
  std::vector<double> temps(n_levels);
  temps.front() = std::numeric_limits<double>::infinity();
  if (grounded) temps.back() = 0.0;
  const int inner = grounded ? n_levels - 2 : n_levels - 1;
  for (int i = 0; i < inner; ++i) {
    const double frac = inner == 1 ? 0.5 : static_cast<double>(i) / (inner - 1);
    temps[i + 1] = max_temperature * std::pow(min_temperature / max_temperature, frac);
  }
  return temps;
}

RankingChain make_offline_preferences(const TabularMdp& mdp, const Eigen::MatrixXd& true_reward,
                                      int n_levels, std::uint64_t seed,
                                      const OfflinePreferenceOptions& options) {
  const auto temps = offline_temperatures(n_levels, options.max_temperature, options.min_temperature,
                                          options.grounded);
  const int iters = std::clamp(
      static_cast<int>(std::ceil(std::log(1e-8) / std::log(std::max(mdp.gamma(), 1e-3)))),
      mdp.horizon(), 5000);
  Eigen::MatrixXd reward_table = Eigen::MatrixXd::Zero(mdp.n_states() + 1, mdp.n_actions());
  reward_table.topRows(mdp.n_states()) = true_reward;

  struct Member {
    double value;
    Visitation visitation;
    std::vector<Trajectory> trajectories;
  };
  std::vector<Member> members;
  for (int i = 0; i < n_levels; ++i) {
    const double t = temps[i];
    const Policy pi = std::isinf(t) ? Policy::uniform(mdp.n_states(), mdp.n_actions())
                      : t == 0.0    ? hard_value_iteration(mdp, true_reward).policy
                                    : soft_value_iteration(mdp, true_reward, t, iters);
    auto trajectories = sample_trajectories(mdp, pi, 1, mix_seed(seed, 0x0ff1 + i));
    Visitation v = empirical_visitation(trajectories, mdp);
    const double value = expectation(v, reward_table);
    if (options.state_only) v = v.state_marginal();
    members.push_back(Member{value, std::move(v), std::move(trajectories)});
  }
  std::stable_sort(members.begin(), members.end(),
                   [](const Member& a, const Member& b) { return a.value < b.value; });

  std::vector<double> alphas(n_levels);
  for (int i = 0; i < n_levels; ++i) alphas[i] = static_cast<double>(i) / (n_levels - 1);
  ShapingFamily family = options.shaping;
  family.k_max = mdp.r_max();

  RankingChain chain;
  chain.targets = shape_targets(family, alphas);
  for (auto& m : members) {
    chain.members.push_back(std::move(m.visitation));
    chain.trajectories.push_back(std::move(m.trajectories));
  }
  return chain;
}

}  // namespace rankgame
