#include <cmath>

#include <gtest/gtest.h>

#include "rankgame/envs.hpp"
#include "rankgame/stackelberg.hpp"
#include "test_util.hpp"

namespace rankgame {
namespace {

GameConfig converging_config(Leader leader) {
  GameConfig c;
  c.leader = leader;
  c.loss = GameLoss::kLk;
  c.rounds = 3;
  c.reward_lr = 0.5;
  c.l2_weight = 0.0;
  c.clamp = {-1e6, 1e6};
  c.n_rew = 100000;
  c.grad_tol = 1e-12;
  return c;
}

double max_support_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Visitation& u,
                       const Visitation& v) {
  double gap = 0.0;
  for (Eigen::Index s = 0; s + 1 < a.rows(); ++s)
    for (Eigen::Index x = 0; x < a.cols(); ++x)
      if (u.rho(s, x) + v.rho(s, x) > 0) gap = std::max(gap, std::abs(a(s, x) - b(s, x)));
  return gap;
}

TEST(Schedule, PalDefaultsAreRoundIndependent) {
  GameConfig c;
  c.leader = Leader::kPolicy;
  c.batch_size = 8;
  const Schedule s1 = two_timescale_schedule(c, 20, 1, 20);
  EXPECT_EQ(s1, (Schedule{20, 3}));
  EXPECT_EQ(two_timescale_schedule(c, 20, 100, 20), s1);
}

TEST(Schedule, RalScalesWithDataset) {
  GameConfig c;
  c.leader = Leader::kReward;
  c.batch_size = 16;
  for (int m : {1, 5, 37}) {
    const Schedule s = two_timescale_schedule(c, 20, m, 20LL * m);
    EXPECT_EQ(s.n_rew, (20 * m + 15) / 16);
    EXPECT_EQ(s.n_pol, 20 * c.ral_policy_scale);
  }
}

TEST(GameConfig, RejectsInvalidFields) {
  GameConfig c;
  c.rounds = 0;
  EXPECT_THROW(c.validate(), Error);
  c = GameConfig{};
  c.model_decay = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = GameConfig{};
  c.loss = GameLoss::kOffline;
  EXPECT_THROW(c.validate(), Error);
}

TEST(RunPal, RejectsWrongLeader) {
  const TabularMdp mdp = make_chain(3, false, 0.0, 0.9, 6, 1.0);
  const Visitation e = exact_visitation(mdp, Policy::uniform(3, 2));
  EXPECT_THROW(run_pal(mdp, e, converging_config(Leader::kReward)), Error);
  EXPECT_THROW(run_ral(mdp, e, converging_config(Leader::kPolicy)), Error);
}

TEST(RunPal, MatchedExpertConvergesInOneRound) {
  for (Leader leader : {Leader::kPolicy, Leader::kReward}) {
    const TabularMdp mdp = make_random_mdp(4, 3, 3, 0.9, 10, 5.0);
    const Visitation e = exact_visitation(mdp, Policy::uniform(4, 3));
    GameConfig c = converging_config(leader);
    c.rounds = 1;
    const GameState st = leader == Leader::kPolicy ? run_pal(mdp, e, c) : run_ral(mdp, e, c);
    ASSERT_EQ(st.history.size(), 1u);
    EXPECT_LE(st.history[0].f_divergence, 1e-6);
    // RAL takes ceil(|D| / batch) reward steps, so only PAL fits to convergence here.
    if (leader == Leader::kPolicy) EXPECT_LE(st.history[0].eps_r, 1e-6);
    EXPECT_TRUE(st.history[0].bound_satisfied);
  }
}

TEST(RunPal, FittedRewardIsClosedForm) {
  const TabularMdp mdp = make_gridworld(3, 3, 2, 2, 0.0, 0.9, 12, 10.0);
  const Policy expert = hard_value_iteration(mdp, *mdp.true_reward()).policy;
  const Visitation e = exact_visitation(mdp, expert);
  GameConfig c = converging_config(Leader::kPolicy);
  Game game(mdp, ExpertData::exact(e), c);
  for (int r = 0; r < 3; ++r) {
    game.step();
    const Visitation agent = exact_visitation(mdp, game.state().policy);
    const Eigen::MatrixXd cf = closed_form_table(agent, e, game.k());
    EXPECT_LE(max_support_gap(game.state().reward.values(), cf, agent, e), 1e-6) << r;
    EXPECT_EQ(game.state().online_dataset.pairs.size(), 1u);
  }
}

TEST(RunRal, DatasetGrowsByOnePairPerRound) {
  const TabularMdp mdp = make_chain(4, false, 0.0, 0.9, 8, 1.0);
  const Visitation e = exact_visitation(mdp, Policy::deterministic({1, 1, 1, 1}, 2));
  GameConfig c;
  c.leader = Leader::kReward;
  Game game(mdp, ExpertData::exact(e), c);
  for (int m = 1; m <= 6; ++m) {
    game.step();
    EXPECT_EQ(game.state().online_dataset.pairs.size(), static_cast<std::size_t>(m));
  }
}

TEST(Game, RoundsAndEnvSteps) {
  const TabularMdp mdp = make_chain(4, false, 0.0, 0.9, 8, 1.0);
  const Visitation e = exact_visitation(mdp, Policy::deterministic({1, 1, 1, 1}, 2));
  GameConfig c;
  c.rounds = 1;
  const GameState st = run_pal(mdp, e, c);
  ASSERT_EQ(st.history.size(), 1u);
  EXPECT_EQ(st.history[0].round, 1);
  EXPECT_EQ(st.history[0].env_steps, 8);
}

TEST(Game, ExactModeIsReproducible) {
  const TabularMdp mdp = make_gridworld(4, 4, 3, 3, 0.1, 0.9, 16, 10.0);
  const Visitation e = exact_visitation(mdp, hard_value_iteration(mdp, *mdp.true_reward()).policy);
  for (GameLoss loss : {GameLoss::kLk, GameLoss::kSlkAuto, GameLoss::kSupremum}) {
    GameConfig c;
    c.loss = loss;
    c.rounds = 10;
    c.policy_init_noise = 0.2;
    c.seed = 5;
    EXPECT_EQ(run_pal(mdp, e, c).history, run_pal(mdp, e, c).history);
    c.leader = Leader::kReward;
    EXPECT_EQ(run_ral(mdp, e, c).history, run_ral(mdp, e, c).history);
  }
}

TEST(Game, EmpiricalModeIsSeedDeterministic) {
  ScenarioSpec spec;
  spec.width = spec.height = 4;
  spec.slip = 0.1;
  spec.r_max = 10.0;
  const BuiltEnv env = build_env(spec, 3);
  GameConfig c;
  c.use_empirical = true;
  c.rounds = 5;
  c.seed = 11;
  const GameState a = run_pal(env.mdp, env.expert, c);
  const GameState b = run_pal(env.mdp, env.expert, c);
  EXPECT_EQ(a.history, b.history);
  c.seed = 12;
  EXPECT_NE(run_pal(env.mdp, env.expert, c).history, a.history);
}

TEST(Game, LearnedModelCountsObservedTransitions) {
  const TabularMdp mdp = make_chain(5, false, 0.1, 0.9, 10, 1.0);
  const Visitation e = exact_visitation(mdp, Policy::deterministic({1, 1, 1, 1, 1}, 2));
  GameConfig c;
  c.use_empirical = true;
  c.episodes_per_round = 2;
  Game game(mdp, ExpertData::exact(e), c);
  game.step();
  game.step();
  EXPECT_NEAR(game.state().transition_counts.sum(), 2 * 2 * 9, 1e-12);
  for (int row = 0; row < game.state().transition_counts.rows(); ++row)
    for (int n = 0; n < 5; ++n)
      if (game.state().transition_counts(row, n) > 0) EXPECT_GT(mdp.transition(row / 2, row % 2, n), 0.0);
}

TEST(Game, ModelDecayDiscountsOldCounts) {
  const TabularMdp mdp = make_chain(5, false, 0.1, 0.9, 10, 1.0);
  const Visitation e = exact_visitation(mdp, Policy::deterministic({1, 1, 1, 1, 1}, 2));
  GameConfig c;
  c.use_empirical = true;
  c.model_decay = 0.5;
  Game game(mdp, ExpertData::exact(e), c);
  game.step();
  game.step();
  EXPECT_NEAR(game.state().transition_counts.sum(), 9 * 0.5 + 9, 1e-12);
}

TEST(Game, ReplaceMdpRejectsDimensionChange) {
  const TabularMdp mdp = make_chain(4, false, 0.0, 0.9, 8, 1.0);
  Game game(mdp, ExpertData::exact(exact_visitation(mdp, Policy::uniform(4, 2))), GameConfig{});
  EXPECT_THROW(game.replace_mdp(make_chain(5, false, 0.0, 0.9, 8, 1.0)), Error);
}

TEST(Game, CertificateHoldsEveryRound) {
  const TabularMdp mdp = make_gridworld(5, 5, 4, 4, 0.0, 0.9, 20, 10.0);
  const Visitation e = exact_visitation(mdp, hard_value_iteration(mdp, *mdp.true_reward()).policy);
  for (Leader leader : {Leader::kPolicy, Leader::kReward}) {
    GameConfig c;
    c.leader = leader;
    c.rounds = 40;
    c.reward_lr = 0.05;
    c.n_rew = 50;
    const GameState st = leader == Leader::kPolicy ? run_pal(mdp, e, c) : run_ral(mdp, e, c);
    for (const auto& r : st.history) {
      EXPECT_TRUE(r.bound_satisfied) << r.round;
      EXPECT_LE(r.f_divergence, 1.0);
    }
  }
}

TEST(LeaderGradient, MatchesFiniteDifferencesOnRandomMdps) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int S = 2 + static_cast<int>(seed % 3), A = 2 + static_cast<int>(seed % 2);
    const TabularMdp mdp = make_random_mdp(S, A, seed, 0.9, 5, 1.0);
    const Visitation e = exact_visitation(mdp, test::random_policy(S, A, seed + 40));
    const Eigen::MatrixXd logits = test::random_table(S, A, seed + 80, -1.0, 1.0);
    const LeaderGradient g = leader_gradient_pal_analytic(mdp, Policy::softmax(logits), e, 1.0);
    const Eigen::MatrixXd fd = leader_gradient_finite_difference(mdp, logits, e, 1.0);
    const double rel = (g.total - fd).norm() / std::max(fd.norm(), 1e-12);
    EXPECT_LE(rel, 1e-5) << seed;
    EXPECT_NEAR((g.direct + g.indirect - g.total).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  }
}

TEST(LeaderGradient, FixedPointMatchesFiniteDifferences) {
  const TabularMdp mdp = make_random_mdp(3, 2, 7, 0.9, 5, 1.0);
  const Eigen::MatrixXd logits = test::random_table(3, 2, 8, -1.0, 1.0);
  const Visitation e = exact_visitation(mdp, Policy::softmax(logits));
  const LeaderGradient g = leader_gradient_pal_analytic(mdp, Policy::softmax(logits), e, 2.0);
  const Eigen::MatrixXd fd = leader_gradient_finite_difference(mdp, logits, e, 2.0);
  EXPECT_LE((g.total - fd).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
}

TEST(LeaderGradient, BanditSignFromOracle) {
  const TabularMdp mdp = make_bandit({1.0, 0.0}, 0.5, 3, 1.0);
  const Visitation e = exact_visitation(mdp, Policy::deterministic({0}, 2));
  const Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(1, 2);
  const LeaderGradient g = leader_gradient_pal_analytic(mdp, Policy::softmax(logits), e, 1.0);
  const Eigen::MatrixXd fd = leader_gradient_finite_difference(mdp, logits, e, 1.0);
  EXPECT_NEAR(g.total(0, 0), fd(0, 0), 1e-5 * std::max(1.0, std::abs(fd(0, 0))));
  EXPECT_EQ(std::signbit(g.total(0, 0)), std::signbit(fd(0, 0)));
}

TEST(LeaderGradient, IndirectTermVanishesWithoutExpertMass) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(4, 2);
  p << 1, 0, 0, 1, 0, 1, 0, 1;
  Eigen::VectorXd rho0(2);
  rho0 << 1, 0;
  const TabularMdp mdp(2, 2, p, 0.9, rho0, 5, 1.0);
  const Visitation e = exact_visitation(mdp, Policy::deterministic({0, 0}, 2));
  const LeaderGradient g = leader_gradient_pal_analytic(mdp, Policy::uniform(2, 2), e, 1.0);
  EXPECT_NEAR(g.indirect.row(1).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(Strings, LeaderAndLoss) {
  EXPECT_EQ(leader_from_string(to_string(Leader::kReward)), Leader::kReward);
  EXPECT_EQ(game_loss_from_string(to_string(GameLoss::kSlkAuto)), GameLoss::kSlkAuto);
  EXPECT_THROW(game_loss_from_string("gail"), Error);
}

}  // namespace
}  // namespace rankgame
