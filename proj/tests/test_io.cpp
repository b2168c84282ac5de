#include <sstream>

#include <gtest/gtest.h>

#include "rankgame/envs.hpp"
#include "rankgame/io.hpp"
#include "test_util.hpp"

namespace rankgame {
namespace {

TEST(MdpJson, RoundTrip) {
  const TabularMdp mdp = make_random_mdp(4, 3, 5, 0.95, 12, 2.0);
  const TabularMdp back = mdp_from_json(mdp_to_json(mdp));
  EXPECT_EQ(back.n_states(), 4);
  EXPECT_EQ(back.n_actions(), 3);
  EXPECT_EQ(back.transition(), mdp.transition());
  EXPECT_EQ(back.rho0(), mdp.rho0());
  EXPECT_EQ(back.gamma(), mdp.gamma());
  EXPECT_EQ(back.horizon(), mdp.horizon());
  ASSERT_TRUE(back.true_reward().has_value());
  EXPECT_EQ(*back.true_reward(), *mdp.true_reward());
}

TEST(MdpJson, RejectsInvalidDocuments) {
  EXPECT_THROW(mdp_from_json("{"), Error);
  EXPECT_THROW(mdp_from_json(R"({"n_states": 1})"), Error);
  const std::string bad_row = R"({"n_states": 1, "n_actions": 1, "transition": [[[0.5]]],
    "gamma": 0.9, "rho0": [1.0], "horizon": 3, "r_max": 1.0})";
  EXPECT_THROW(mdp_from_json(bad_row), Error);
  const std::string ok = R"({"n_states": 1, "n_actions": 1, "transition": [[[1.0]]],
    "gamma": 0.9, "rho0": [1.0], "horizon": 3, "r_max": 1.0})";
  EXPECT_NO_THROW(mdp_from_json(ok));
}

TEST(DatasetJson, RoundTrip) {
  const TabularMdp mdp = make_random_mdp(3, 2, 1, 0.9, 4, 1.0);
  const Visitation a = exact_visitation(mdp, test::random_policy(3, 2, 1));
  const Visitation e = exact_visitation(mdp, test::random_policy(3, 2, 2));
  RankingDataset d;
  d.pairs.push_back({a, e, PairSource::kOnlineAgentVsExpert});
  d.chains.push_back(make_auto_chain(a, e, 2, {}, mdp.gamma()));
  const RankingDataset back = dataset_from_json(dataset_to_json(d));
  ASSERT_EQ(back.pairs.size(), 1u);
  EXPECT_EQ(back.pairs[0].lesser.rho, a.rho);
  EXPECT_EQ(back.pairs[0].greater.time_marginals.size(), e.time_marginals.size());
  ASSERT_EQ(back.chains.size(), 1u);
  EXPECT_EQ(back.chains[0].targets, d.chains[0].targets);
}

TEST(OfflinePreferencesJson, RoundTripRecomputesVisitations) {
  const TabularMdp mdp = make_chain(4, false, 0.1, 0.9, 8, 5.0);
  const RankingChain chain = make_offline_preferences(mdp, *mdp.true_reward(), 3, 2);
  const RankingChain back = offline_preferences_from_json(offline_preferences_to_json(chain), mdp, false);
  ASSERT_EQ(back.members.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.members[i].rho, chain.members[i].rho);
  EXPECT_EQ(back.targets, chain.targets);
  const RankingChain states = offline_preferences_from_json(offline_preferences_to_json(chain), mdp, true);
  EXPECT_EQ(states.members[0].rho.cols(), 1);
}

TEST(OfflinePreferencesJson, AcceptsBareStepLists) {
  const TabularMdp mdp = make_chain(3, false, 0.0, 0.9, 3, 1.0);
  const RankingChain chain = offline_preferences_from_json(
      R"({"trajectories": [[[0, 0], [0, 0], [0, 0]], [[0, 1], [1, 1], [2, 1]]], "targets": [0, 1]})", mdp,
      false);
  EXPECT_EQ(chain.members.size(), 2u);
  EXPECT_THROW(offline_preferences_from_json(R"({"trajectories": [[[0, 0]]], "targets": [1, 0]})", mdp, false),
               Error);
}

TEST(ReportsCsv, FixedHeaderAndRoundTripDoubles) {
  GameReport r;
  r.round = 3;
  r.ranking_loss = 0.1;
  r.eps_r = 1.0 / 3.0;
  r.bound_satisfied = true;
  r.env_steps = 60;
  const std::string csv = reports_to_csv({r});
  std::istringstream in(csv);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header,
            "round,ranking_loss,eps_r,eps_pi,f_divergence,bound_rhs,bound_satisfied,true_return_ratio,env_steps");
  EXPECT_EQ(row.substr(0, 2), "3,");
  EXPECT_NE(row.find(",nan,60"), std::string::npos);
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Files, AtomicWriteAndRead) {
  const auto dir = std::filesystem::temp_directory_path() / "rankgame_io_test";
  std::filesystem::remove_all(dir);
  write_file_atomic(dir / "nested" / "x.txt", "hello");
  EXPECT_EQ(read_file(dir / "nested" / "x.txt"), "hello");
  EXPECT_FALSE(std::filesystem::exists(dir / "nested" / "x.txt.tmp"));
  EXPECT_THROW(read_file(dir / "missing"), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace rankgame
