#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "rankgame/envs.hpp"
#include "test_util.hpp"

namespace rankgame {
namespace {

double total_variation(const Visitation& a, const Visitation& b) {
  return 0.5 * (a.state_marginal().rho - b.state_marginal().rho).cwiseAbs().sum();
}

ScenarioSpec gridworld_spec() {
  ScenarioSpec spec;
  spec.width = spec.height = 5;
  spec.r_max = 10.0;
  spec.expert_mode = ExpertMode::kExact;
  return spec;
}

TEST(BuildEnv, BanditExpertPlaysBestArm) {
  ScenarioSpec spec;
  spec.env = EnvKind::kBandit;
  spec.n_arms = 2;
  spec.arm_rewards = {1.0, 0.0};
  const BuiltEnv env = build_env(spec, 0);
  EXPECT_EQ(env.expert_policy(0, 0), 1.0);
}

TEST(BuildEnv, GridworldExpertTakesShortestPath) {
  const BuiltEnv env = build_env(gridworld_spec(), 0);
  const auto ts = sample_trajectories(env.mdp, env.expert_policy, 1, 0);
  const int goal = 24;
  int first = -1;
  for (std::size_t t = 0; t < ts[0].steps.size(); ++t)
    if (ts[0].steps[t].state == goal) {
      first = static_cast<int>(t);
      break;
    }
  EXPECT_EQ(first, 8);
  const Visitation& v = env.expert.reference;
  for (int s = 0; s < 25; ++s) {
    double inflow = (1 - env.mdp.gamma()) * env.mdp.rho0()[s];
    for (int sp = 0; sp < 25; ++sp)
      for (int a = 0; a < 4; ++a) inflow += env.mdp.gamma() * v.rho(sp, a) * env.mdp.transition(sp, a, s);
    EXPECT_NEAR(inflow, v.rho.row(s).sum(), 1e-8);
  }
}

TEST(BuildEnv, LfoDropsActions) {
  ScenarioSpec spec;
  spec.env = EnvKind::kChain;
  spec.chain_length = 3;
  spec.lfo = true;
  const BuiltEnv env = build_env(spec, 0);
  EXPECT_EQ(env.expert.demo.rho.cols(), 1);
  EXPECT_EQ(env.expert.demo.support, Support::kState);
  EXPECT_EQ(env.expert.reference.rho.cols(), 1);
}

TEST(BuildEnv, SampledDemoUsesRequestedTrajectories) {
  ScenarioSpec spec = gridworld_spec();
  spec.expert_mode = ExpertMode::kSampled;
  spec.n_expert_trajectories = 3;
  const BuiltEnv env = build_env(spec, 4);
  EXPECT_EQ(env.expert.trajectories.size(), 3u);
  EXPECT_NEAR(env.expert.demo.total(), 1.0, 1e-12);
}

TEST(BuildEnv, Deterministic) {
  ScenarioSpec spec = gridworld_spec();
  spec.slip = 0.2;
  spec.expert_mode = ExpertMode::kSampled;
  const BuiltEnv a = build_env(spec, 9), b = build_env(spec, 9);
  EXPECT_EQ(a.mdp.transition(), b.mdp.transition());
  EXPECT_EQ(a.expert.demo.rho, b.expert.demo.rho);
  EXPECT_EQ(a.expert.trajectories, b.expert.trajectories);
}

TEST(BuildEnv, ExpertBeatsRandomPolicies) {
  ScenarioSpec spec;
  spec.env = EnvKind::kRandom;
  spec.n_states = 8;
  spec.n_actions = 3;
  spec.env_seed = 2;
  const BuiltEnv env = build_env(spec, 0);
  const Eigen::MatrixXd& r = *env.mdp.true_reward();
  const double expert = policy_return(env.mdp, env.expert_policy, r);
  for (std::uint64_t i = 0; i < 100; ++i)
    EXPECT_GE(expert, policy_return(env.mdp, test::random_policy(8, 3, i), r) - 1e-8);
}

TEST(ScenarioSpec, Validation) {
  ScenarioSpec spec;
  spec.slip = 1.0;
  EXPECT_THROW(spec.validate(), Error);
  spec = ScenarioSpec{};
  spec.goal_x = 7;
  EXPECT_THROW(spec.validate(), Error);
  spec = ScenarioSpec{};
  spec.env = EnvKind::kChain;
  spec.mutation = Mutation{MutationKind::kIntentChange, 3};
  EXPECT_THROW(spec.validate(), Error);
}

TEST(Mutation, OutsideTriggerRoundIsIdentity) {
  ScenarioSpec spec = gridworld_spec();
  spec.mutation = Mutation{MutationKind::kIntentChange, 5};
  const TabularMdp mdp = build_mdp(spec);
  const MutationResult r = apply_mutation(mdp, spec, 4, 0);
  EXPECT_FALSE(r.applied);
  EXPECT_EQ(r.mdp.transition(), mdp.transition());
}

TEST(Mutation, IdentityPerturbation) {
  const TabularMdp mdp = make_random_mdp(5, 3, 1, 0.9, 10, 1.0);
  EXPECT_NEAR((perturb_dynamics(mdp, 0.0, 0).transition() - mdp.transition()).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  EXPECT_NEAR((perturb_dynamics(mdp, 0.0, 3).transition() - mdp.transition()).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Mutation, MirroredGoalMovesExpert) {
  ScenarioSpec spec = gridworld_spec();
  spec.mutation = Mutation{MutationKind::kIntentChange, 2};
  const BuiltEnv env = build_env(spec, 0);
  const MutationResult r = apply_mutation(env.mdp, spec, 2, 0);
  ASSERT_TRUE(r.applied);
  ASSERT_TRUE(r.expert.has_value());
  EXPECT_TRUE(r.demo_changed);
  EXPECT_GT(total_variation(env.expert.reference, r.expert->reference), 0.5);
  EXPECT_EQ(r.mdp.true_reward()->row(20).maxCoeff(), 10.0);
}

TEST(Mutation, DynamicsChangeKeepsRowsStochastic) {
  ScenarioSpec spec = gridworld_spec();
  spec.slip = 0.1;
  spec.mutation = Mutation{MutationKind::kDynamicsChange, 1};
  spec.mutation->slip = 0.2;
  spec.mutation->action_shift = 1;
  const TabularMdp mdp = build_mdp(spec);
  const MutationResult r = apply_mutation(mdp, spec, 1, 0);
  ASSERT_TRUE(r.applied);
  EXPECT_FALSE(r.demo_changed);
  const Eigen::VectorXd sums = r.mdp.transition().rowwise().sum();
  EXPECT_NEAR((sums.array() - 1.0).abs().maxCoeff(), 0.0, 1e-9);
  EXPECT_GE(r.mdp.transition().minCoeff(), 0.0);
  EXPECT_NEAR(r.mdp.rho0().sum(), 1.0, 1e-12);
  EXPECT_NE(r.mdp.transition(), mdp.transition());
}

TEST(Mutation, ShiftRelabelsActions) {
  const TabularMdp mdp = make_random_mdp(3, 4, 2, 0.9, 5, 1.0);
  const TabularMdp shifted = perturb_dynamics(mdp, 0.0, 1);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 4; ++a)
      EXPECT_NEAR((shifted.next_distribution(s, a) - mdp.next_distribution(s, (a + 1) % 4)).cwiseAbs().maxCoeff(),
                  0.0, 1e-15);
}

TEST(OfflinePreferences, TemperatureSchedule) {
  const auto t2 = offline_temperatures(2, 1.0, 0.01);
  EXPECT_TRUE(std::isinf(t2[0]));
  EXPECT_EQ(t2[1], 0.0);
  const auto t10 = offline_temperatures(10, 100.0, 1.0);
  EXPECT_NEAR(t10[1], 100.0, 1e-12);
  EXPECT_NEAR(t10[8], 1.0, 1e-12);
  for (int i = 2; i < 9; ++i) EXPECT_LT(t10[i], t10[i - 1]);
  const auto ungrounded = offline_temperatures(4, 8.0, 2.0, false);
  EXPECT_NEAR(ungrounded[3], 2.0, 1e-12);
  EXPECT_THROW(offline_temperatures(1, 1.0, 1.0), Error);
}

TEST(OfflinePreferences, TwoLevelsAreUniformThenExpert) {
  const TabularMdp mdp = make_chain(4, false, 0.0, 0.9, 8, 10.0);
  const RankingChain chain = make_offline_preferences(mdp, *mdp.true_reward(), 2, 3);
  ASSERT_EQ(chain.members.size(), 2u);
  const Policy expert = hard_value_iteration(mdp, *mdp.true_reward()).policy;
  const auto expert_traj = sample_trajectories(mdp, expert, 1, 0);
  EXPECT_EQ(chain.members.back().rho, empirical_visitation(expert_traj, mdp).rho);
  EXPECT_EQ(chain.targets.front(), 0.0);
  EXPECT_EQ(chain.targets.back(), 10.0);
}

TEST(OfflinePreferences, OrderedByTrueReturnWithNondecreasingTargets) {
  ScenarioSpec spec = gridworld_spec();
  spec.slip = 0.1;
  const TabularMdp mdp = build_mdp(spec);
  OfflinePreferenceOptions opts;
  opts.max_temperature = 5.0;
  opts.min_temperature = 0.1;
  const RankingChain chain = make_offline_preferences(mdp, *mdp.true_reward(), 10, 7, opts);
  ASSERT_EQ(chain.members.size(), 10u);
  EXPECT_NEAR(chain.targets.back(), mdp.r_max(), 1e-12);
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(26, 4);
  table.topRows(25) = *mdp.true_reward();
  for (std::size_t i = 1; i < chain.members.size(); ++i) {
    EXPECT_GE(chain.targets[i], chain.targets[i - 1]);
    EXPECT_GE(expectation(chain.members[i], table), expectation(chain.members[i - 1], table));
  }
  EXPECT_NO_THROW(chain.validate());
}

}  // namespace
}  // namespace rankgame
