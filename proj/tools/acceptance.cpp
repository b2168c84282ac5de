// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "rankgame/envs.hpp"
#include "rankgame/experiment.hpp"
#include "rankgame/io.hpp"
#include "rankgame/rng.hpp"

#ifndef RANKGAME_SOURCE_DIR
#define RANKGAME_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace rankgame;

namespace {

constexpr int kSweepInstances = 100;
constexpr double kSweepSeconds = 60.0;
constexpr int kClosedFormPairs = 20;
constexpr double kClosedFormTol = 1e-4;
constexpr int kGradientMdps = 20;
constexpr double kGradientRelTol = 1e-5;
constexpr int kSeeds = 5;
constexpr int kRequiredAll = 5;
constexpr int kRequiredMajority = 4;
constexpr int kMaxUnrescued = 1;  // runs allowed to reach threshold where failure is expected
constexpr int kDivergencePairs = 1000;
constexpr double kShapingTol = 1e-9;
constexpr double kDisjointTol = 1e-12;
constexpr double kLinearLimitTol = 1e-6;

const fs::path kConfigDir = fs::path(RANKGAME_SOURCE_DIR) / "configs";

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Steps = std::vector<std::optional<std::int64_t>>;

std::string steps_text(const Steps& steps) {
  std::string s = "[";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    s += (i ? " " : "") + (steps[i] ? std::to_string(*steps[i]) : std::string("-"));
  }
  return s + "]";
}

int count_within(const Steps& steps, std::int64_t budget) {
  int n = 0;
  for (const auto& s : steps) n += s && *s <= budget ? 1 : 0;
  return n;
}

// Seed-matched wins of `a` over `b`: `a` must reach, and `b` must either not
// reach or take at least as many steps.
int wins(const Steps& a, const Steps& b) {
  int n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] && (!b[i] || *a[i] <= *b[i]) ? 1 : 0;
  return n;
}

struct Variant {
  ExperimentConfig config;
  std::vector<SeedRun> runs;

  Steps first_crossing() const {
    Steps out;
    for (const auto& r : runs) out.push_back(steps_to_threshold(r.reports, config.threshold));
    return out;
  }
  Steps recovery() const {
    Steps out;
    for (const auto& r : runs)
      out.push_back(recovery_steps(r.reports, config.scenario.mutation->round, config.threshold));
    return out;
  }
};

Variant run_variant(const std::string& file) {
  Variant v;
  v.config = load_experiment_config(kConfigDir / file);
  v.config.repeats = kSeeds;
  v.runs = run_seeds(v.config, 0, thread_budget());
  return v;
}

Eigen::MatrixXd random_distribution(Rng& rng, int rows, int cols, double zero_prob) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform() < zero_prob ? 0.0 : rng.uniform();
  if (m.sum() == 0.0) m(rng.index(static_cast<int>(m.size()))) = 1.0;
  return m / m.sum();
}

Visitation as_visitation(Eigen::MatrixXd rho) {
  Visitation v;
  v.rho = std::move(rho);
  return v;
}

Outcome criterion1() {
  const auto start = std::chrono::steady_clock::now();
  const SweepResult r = certificate_sweep(kSweepInstances, 20240601);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream d;
  d << r.passed << "/" << kSweepInstances << " instances satisfy the bound, worst margin "
    << format_double(r.worst_margin) << ", " << secs << " s";
  return {r.failed == 0 && r.passed == kSweepInstances && secs < kSweepSeconds, d.str()};
}

Outcome criterion2() {
  Rng rng(2);
  double worst = 0.0;
  for (int i = 0; i < kClosedFormPairs; ++i) {
    const int S = 2 + rng.index(8), A = 1 + rng.index(4);
    const Visitation agent = as_visitation(random_distribution(rng, S + 1, A, 0.2));
    const Visitation expert = as_visitation(random_distribution(rng, S + 1, A, 0.2));
    RankingDataset d;
    d.pairs.push_back({agent, expert, PairSource::kOnlineAgentVsExpert});
    FitConfig c;
    c.k = 1.0 + 9.0 * rng.uniform();
    c.learning_rate = 0.5;
    c.l2_weight = 0.0;
    c.clamp = {-1e12, 1e12};
    c.max_steps = 1000000;
    c.grad_tol = 1e-12;
    const FitResult fit =
        fit_reward_gd(d, RewardFn::tabular(RewardKind::kStateAction, S, A, 0.0, c.clamp), LossKind::kLk, c);
    const Eigen::MatrixXd cf = closed_form_table(agent, expert, c.k);
    const Eigen::MatrixXd got = fit.reward.values();
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        if (agent.rho(s, a) + expert.rho(s, a) > 0.0) worst = std::max(worst, std::abs(got(s, a) - cf(s, a)));
  }
  return {worst <= kClosedFormTol,
          std::to_string(kClosedFormPairs) + " pairs, worst sup-norm gap " + format_double(worst)};
}

Outcome criterion3() {
  Rng rng(3);
  double worst = 0.0;
  for (int i = 0; i < kGradientMdps; ++i) {
    const int S = 2 + rng.index(4), A = 2 + rng.index(2);
    const TabularMdp mdp = make_random_mdp(S, A, 300 + i, rng.uniform() < 0.5 ? 0.9 : 0.99, 10, 1.0);
    Eigen::MatrixXd expert_logits(S, A), logits(S, A);
    for (Eigen::Index j = 0; j < logits.size(); ++j) {
      expert_logits(j) = rng.uniform(-2.0, 2.0);
      logits(j) = rng.uniform(-2.0, 2.0);
    }
    const Visitation expert = exact_visitation(mdp, Policy::softmax(expert_logits));
    const double k = 1.0 + 9.0 * rng.uniform();
    const LeaderGradient g = leader_gradient_pal_analytic(mdp, Policy::softmax(logits), expert, k);
    const Eigen::MatrixXd fd = leader_gradient_finite_difference(mdp, logits, expert, k);
    worst = std::max(worst, (g.total - fd).norm() / std::max(fd.norm(), 1e-12));
  }
  return {worst <= kGradientRelTol,
          std::to_string(kGradientMdps) + " MDPs, worst relative error " + format_double(worst)};
}

struct Budgets {
  std::int64_t gridworld = 0;
  std::int64_t chain = 0;
};

Budgets load_budgets() {
  const YAML::Node root = YAML::LoadFile((kConfigDir / "budgets.yaml").string());
  return {root["gridworld"]["env_steps"].as<std::int64_t>(), root["chain"]["env_steps"].as<std::int64_t>()};
}

std::string line(const std::string& name, const Steps& s) { return name + " " + steps_text(s); }

}  // namespace

int main() {
  const Budgets budgets = load_budgets();
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;

  criteria.emplace_back("certificate sweep", criterion1);
  criteria.emplace_back("closed-form oracle", criterion2);
  criteria.emplace_back("leader gradient", criterion3);

  std::optional<Variant> rank_pal, rank_ral, imit_pal, imit_ral;
  auto gridworld = [&] {
    if (!rank_pal) {
      rank_pal = run_variant("gridworld_rank_pal.yaml");
      rank_ral = run_variant("gridworld_rank_ral.yaml");
      imit_pal = run_variant("gridworld_imit_pal.yaml");
      imit_ral = run_variant("gridworld_imit_ral.yaml");
    }
  };
  criteria.emplace_back("imitation quality", [&] {
    gridworld();
    const Steps p = rank_pal->first_crossing(), r = rank_ral->first_crossing();
    const int np = count_within(p, budgets.gridworld), nr = count_within(r, budgets.gridworld);
    return Outcome{np >= kRequiredAll && nr >= kRequiredAll,
                   "budget " + std::to_string(budgets.gridworld) + ": " + line("RANK-PAL", p) + " " +
                       std::to_string(np) + "/5, " + line("RANK-RAL", r) + " " + std::to_string(nr) + "/5"};
  });
  criteria.emplace_back("sample-efficiency direction", [&] {
    gridworld();
    const int wp = wins(rank_pal->first_crossing(), imit_pal->first_crossing());
    const int wr = wins(rank_ral->first_crossing(), imit_ral->first_crossing());
    return Outcome{wp >= kRequiredMajority && wr >= kRequiredMajority,
                   "RANK-PAL <= IMIT-PAL " + std::to_string(wp) + "/5 " +
                       line("IMIT-PAL", imit_pal->first_crossing()) + "; RANK-RAL <= IMIT-RAL " +
                       std::to_string(wr) + "/5 " + line("IMIT-RAL", imit_ral->first_crossing())};
  });
  criteria.emplace_back("offline-preference rescue", [&] {
    const Variant automatic = run_variant("chain_lfo_auto.yaml");
    const Variant pref = run_variant("chain_lfo_pref.yaml");
    const Variant offline = run_variant("chain_lfo_offline_only.yaml");
    const Steps a = automatic.first_crossing(), p = pref.first_crossing(), o = offline.first_crossing();
    const int na = count_within(a, budgets.chain), np = count_within(p, budgets.chain),
              no = count_within(o, budgets.chain);
    return Outcome{np >= kRequiredMajority && na <= kMaxUnrescued && no <= kMaxUnrescued,
                   "budget " + std::to_string(budgets.chain) + ": " + line("auto", a) + " " + std::to_string(na) +
                       "/5, " + line("pref", p) + " " + std::to_string(np) + "/5, " + line("offline-only", o) +
                       " " + std::to_string(no) + "/5"};
  });
  criteria.emplace_back("nonstationarity direction", [&] {
    const Steps ip = run_variant("intent_change_pal.yaml").recovery();
    const Steps ir = run_variant("intent_change_ral.yaml").recovery();
    const Steps dp = run_variant("dynamics_change_pal.yaml").recovery();
    const Steps dr = run_variant("dynamics_change_ral.yaml").recovery();
    const int intent = wins(ip, ir), dynamics = wins(dr, dp);
    return Outcome{intent >= kRequiredMajority && dynamics >= kRequiredMajority,
                   "intent: PAL <= RAL " + std::to_string(intent) + "/5 " + line("PAL", ip) + " " +
                       line("RAL", ir) + "; dynamics: RAL <= PAL " + std::to_string(dynamics) + "/5 " +
                       line("RAL", dr) + " " + line("PAL", dp)};
  });
  criteria.emplace_back("divergence axioms", [] {
    Rng rng(8);
    int bad = 0;
    double max_seen = -1e300;
    for (int i = 0; i < kDivergencePairs; ++i) {
      const int rows = 2 + rng.index(30), cols = 1 + rng.index(4);
      const Eigen::MatrixXd p = random_distribution(rng, rows, cols, 0.3);
      const Eigen::MatrixXd q = random_distribution(rng, rows, cols, 0.3);
      const double d = f_divergence(as_visitation(p), as_visitation(q));
      max_seen = std::max(max_seen, d);
      if (!(d <= 1.0)) ++bad;
      if (f_divergence(as_visitation(p), as_visitation(p)) != 0.0) ++bad;
      // Disjoint: split a random table's cells between the two arguments.
      Eigen::MatrixXd u = Eigen::MatrixXd::Zero(rows, cols), v = u;
      for (Eigen::Index j = 0; j < u.size(); ++j) (j % 2 ? u(j) : v(j)) = rng.uniform() + 1e-3;
      if (std::abs(f_divergence(as_visitation(u / u.sum()), as_visitation(v / v.sum())) - 1.0) > kDisjointTol) ++bad;
    }
    return Outcome{bad == 0, std::to_string(kDivergencePairs) + " pairs, " + std::to_string(bad) +
                                 " violations, max D_f " + format_double(max_seen)};
  });
  criteria.emplace_back("determinism", [] {
    const fs::path tmp = fs::temp_directory_path() / "rankgame_acceptance_determinism";
    fs::remove_all(tmp);
    const fs::path cfg = kConfigDir / "quickstart.yaml";
    std::ostringstream sink;
    CliOverrides a, b;
    a.out = tmp / "a";
    b.out = tmp / "b";
    a.empirical = b.empirical = false;
    if (cmd_run(cfg, a, sink, sink) != 0 || cmd_run(cfg, b, sink, sink) != 0)
      return Outcome{false, "run failed: " + sink.str()};
    int files = 0, identical = 0;
    for (const auto& entry : fs::directory_iterator(tmp / "a")) {
      if (entry.path().extension() != ".csv") continue;
      ++files;
      const fs::path other = tmp / "b" / entry.path().filename();
      identical += fs::exists(other) && read_file(entry.path()) == read_file(other) ? 1 : 0;
    }
    fs::remove_all(tmp);
    return Outcome{files > 0 && identical == files,
                   std::to_string(identical) + "/" + std::to_string(files) + " CSV files byte-identical"};
  });
  criteria.emplace_back("shaping families", [] {
    std::vector<double> alphas;
    for (int i = 0; i <= 200; ++i) alphas.push_back(i / 200.0);
    const double k_max = 10.0;
    const auto linear = shape_targets({ShapingFamily::Kind::kLinear, 0.0, k_max}, alphas);
    int bad = 0;
    for (double beta : {-2.0, -1.0, -1e-8, 1e-8, 1.0, 2.0}) {
      const auto t = shape_targets({ShapingFamily::Kind::kExponential, beta, k_max}, alphas);
      if (std::abs(t.front()) > kShapingTol || std::abs(t.back() - k_max) > kShapingTol) ++bad;
      for (std::size_t i = 1; i < t.size(); ++i) bad += t[i] < t[i - 1] ? 1 : 0;
      if (std::abs(beta) < 1e-6)
        for (std::size_t i = 0; i < t.size(); ++i) bad += std::abs(t[i] - linear[i]) > kLinearLimitTol ? 1 : 0;
    }
    const std::vector<double> half{0.5};
    const double got = shape_targets({ShapingFamily::Kind::kExponential, -1.0, k_max}, half)[0];
    const double expected = k_max * (std::exp(-0.5) - 1.0) / (std::exp(-1.0) - 1.0);
    const bool value_ok = std::abs(got - expected) <= kShapingTol;
    return Outcome{bad == 0 && value_ok,
                   std::to_string(bad) + " property violations, exp[-1](0.5) = " + format_double(got)};
  });

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
