#include <gtest/gtest.h>

#include "rankgame/diagnostics.hpp"
#include "rankgame/envs.hpp"
#include "test_util.hpp"

namespace rankgame {
namespace {

using test::visitation;

Visitation pair_dist(double a, double b) {
  Eigen::MatrixXd rho = Eigen::MatrixXd::Zero(3, 1);
  rho(0, 0) = a;
  rho(1, 0) = b;
  return visitation(rho);
}

TEST(FDivergence, Examples) {
  const Visitation v = pair_dist(0.5, 0.5);
  EXPECT_EQ(f_divergence(v, v), 0.0);
  EXPECT_EQ(f_divergence(pair_dist(1, 0), pair_dist(0, 1)), 1.0);
  EXPECT_NEAR(f_divergence(pair_dist(0.5, 0.5), pair_dist(0.75, 0.25)), 0.15 - 0.25 / 3.0, 1e-12);
  EXPECT_NEAR(f_divergence(pair_dist(0.5, 0.5), pair_dist(0.75, 0.25)), 0.066667, 1e-6);
}

TEST(FDivergence, RejectsUnnormalized) {
  EXPECT_THROW(f_divergence(pair_dist(0.5, 0.6), pair_dist(0.5, 0.5)), Error);
}

TEST(FDivergence, MixedSupportsCompareStates) {
  Eigen::MatrixXd sa = Eigen::MatrixXd::Zero(3, 2);
  sa(0, 0) = 0.2;
  sa(0, 1) = 0.3;
  sa(1, 1) = 0.5;
  Visitation p = visitation(sa);
  Visitation q = pair_dist(0.5, 0.5);
  q.support = Support::kState;
  EXPECT_NEAR(f_divergence(p, q), 0.0, 1e-15);
}

TEST(MeasureEpsPi, OptimalPolicyIsZero) {
  const TabularMdp mdp = make_random_mdp(6, 3, 1, 0.9, 10, 1.0);
  const RewardFn r = RewardFn::from_table(RewardKind::kStateAction, 3, test::random_table(7, 3, 2, 0.0, 1.0));
  const Policy opt = hard_value_iteration(mdp, r).policy;
  EXPECT_NEAR(measure_eps_pi(mdp, opt, r), 0.0, 1e-8);
}

TEST(MeasureEpsPi, UniformOnBandit) {
  const double gamma = 0.5;
  const TabularMdp mdp = make_bandit({1.0, 0.0}, gamma, 5, 1.0);
  const RewardFn r = RewardFn::from_table(RewardKind::kStateAction, 2,
                                          (Eigen::MatrixXd(2, 2) << 1.0, 0.0, 0.0, 0.0).finished());
  EXPECT_NEAR(measure_eps_pi(mdp, Policy::uniform(1, 2), r), 0.5 / (1 - gamma), 1e-9);
}

TEST(MeasureEpsPi, RandomPoliciesBounded) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TabularMdp mdp = make_random_mdp(5, 2, seed, 0.9, 10, 2.0);
    const RewardFn r = RewardFn::from_table(RewardKind::kStateAction, 2, test::random_table(6, 2, seed, 0.0, 2.0));
    const double eps = measure_eps_pi(mdp, test::random_policy(5, 2, seed + 1), r);
    EXPECT_GE(eps, -1e-8);
    EXPECT_LE(eps, 2.0 / (1 - 0.9));
  }
}

TEST(MeasureEpsR, ClosedFormAndOffset) {
  const Visitation a = visitation(test::random_occupancy(5, 2, 1, 3));
  const Visitation e = visitation(test::random_occupancy(5, 2, 2, 4));
  RankingDataset d;
  d.pairs.push_back({a, e, PairSource::kOnlineAgentVsExpert});
  const double k = 10.0;
  const ClampRange wide{-100, 100};
  const Eigen::MatrixXd cf = closed_form_table(a, e, k);
  EXPECT_NEAR(measure_eps_r(d, RewardFn::from_table(RewardKind::kStateAction, 2, cf, wide), k).eps_r, 0.0, 1e-12);
  const Eigen::MatrixXd shifted = cf.array() + 0.1;
  EXPECT_NEAR(measure_eps_r(d, RewardFn::from_table(RewardKind::kStateAction, 2, shifted, wide), k).eps_r, 0.1,
              1e-12);
}

TEST(MeasureEpsR, FittedRewardIsClose) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Visitation a = visitation(test::random_occupancy(5, 2, seed + 10, 3));
    const Visitation e = visitation(test::random_occupancy(5, 2, seed + 20, 4));
    RankingDataset d;
    d.pairs.push_back({a, e, PairSource::kOnlineAgentVsExpert});
    FitConfig c;
    c.k = 10.0;
    c.learning_rate = 0.5;
    c.l2_weight = 0.0;
    c.max_steps = 200000;
    c.grad_tol = 1e-6;
    c.clamp = {-100, 100};
    const FitResult fit = fit_reward_gd(d, RewardFn::tabular(RewardKind::kStateAction, 4, 2, 0.0, c.clamp),
                                        LossKind::kLk, c);
    EXPECT_LE(measure_eps_r(d, fit.reward, c.k).eps_r, 1e-3);
  }
}

TEST(MeasureEpsR, NeedsOnlinePair) {
  RankingDataset d;
  d.pairs.push_back({pair_dist(1, 0), pair_dist(0, 1), PairSource::kAutoInterpolant});
  EXPECT_THROW(measure_eps_r(d, RewardFn::tabular(RewardKind::kStateAction, 2, 1), 1.0), Error);
}

TEST(BoundRhs, Arithmetic) { EXPECT_NEAR(bound_rhs(0.9, 0.1, 0.05, 10.0), 0.011, 1e-15); }

TEST(Certificate, MatchedExpert) {
  const TabularMdp mdp = make_gridworld(3, 3, 2, 2, 0.0, 0.9, 12, 10.0);
  const Policy expert = hard_value_iteration(mdp, *mdp.true_reward()).policy;
  const Visitation e = exact_visitation(mdp, expert);
  const RewardFn r = closed_form_reward(e, e, 10.0);
  const Certificate c = theorem1_certificate(mdp, expert, r, e, 10.0);
  EXPECT_TRUE(c.satisfied);
  EXPECT_NEAR(c.f_divergence, 0.0, 1e-12);
  EXPECT_NEAR(c.eps_r, 0.0, 1e-12);
}

TEST(Certificate, RandomInstancesSatisfyBound) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const TabularMdp mdp = make_random_mdp(6, 3, seed, seed % 2 ? 0.99 : 0.9, 10, 10.0);
    const Visitation e = exact_visitation(mdp, test::random_policy(6, 3, seed + 500));
    const RewardFn r =
        RewardFn::from_table(RewardKind::kStateAction, 3, test::random_table(7, 3, seed + 900, 0.0, 10.0));
    const Certificate c = theorem1_certificate(mdp, test::random_policy(6, 3, seed + 700), r, e, 10.0);
    EXPECT_TRUE(c.satisfied) << seed;
    EXPECT_GE(c.eps_pi, -1e-8);
  }
}

TEST(FDivergenceAxioms, RandomPairs) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const int rows = 2 + static_cast<int>(seed % 9);
    const Visitation p = visitation(test::random_distribution(rows, 2, seed, static_cast<int>(seed % 4)));
    const Visitation q = visitation(test::random_distribution(rows, 2, seed + 5000, static_cast<int>(seed % 3)));
    EXPECT_EQ(f_divergence(p, p), 0.0);
    EXPECT_LE(f_divergence(p, q), 1.0);
  }
}

}  // namespace
}  // namespace rankgame
