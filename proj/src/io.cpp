#include "rankgame/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rankgame {
namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* field) {
  if (!j.is_array() || j.empty()) throw Error(std::string(field) + ": expected a nonempty 2-D array");
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw Error(std::string(field) + ": ragged array");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

template <typename T>
T require(const json& j, const char* field) {
  if (!j.contains(field)) throw Error(std::string("missing field '") + field + "'");
  try {
    return j.at(field).get<T>();
  } catch (const json::exception& e) {
    throw Error(std::string("field '") + field + "': " + e.what());
  }
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("invalid JSON: ") + e.what());
  }
}

json visitation_to_json(const Visitation& v) {
  json j;
  j["support"] = v.support == Support::kState ? "state" : "state_action";
  j["rho"] = matrix_to_json(v.rho);
  if (v.has_time_marginals()) {
    json tm = json::array();
    for (const auto& m : v.time_marginals) tm.push_back(matrix_to_json(m));
    j["time_marginals"] = std::move(tm);
  }
  return j;
}

Visitation visitation_from_json(const json& j) {
  Visitation v;
  const std::string support = j.value("support", "state_action");
  if (support != "state" && support != "state_action") throw Error("visitation support: unknown value");
  v.support = support == "state" ? Support::kState : Support::kStateAction;
  v.rho = matrix_from_json(require<json>(j, "rho"), "rho");
  if (std::abs(v.rho.sum() - 1.0) > 1e-8 || (v.rho.array() < 0.0).any())
    throw Error("visitation rho is not a normalized distribution");
  if (j.contains("time_marginals"))
    for (const auto& m : j["time_marginals"]) v.time_marginals.push_back(matrix_from_json(m, "time_marginals"));
  return v;
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  const json& steps = j.is_object() ? j.at("steps") : j;
  for (const auto& step : steps) {
    if (!step.is_array() || step.size() != 2) throw Error("trajectory step must be [state, action]");
    t.steps.push_back(Step{step[0].get<int>(), step[1].get<int>()});
  }
  if (j.is_object()) t.terminated_early = j.value("terminated_early", false);
  if (t.steps.empty()) throw Error("trajectory must have at least one step");
  return t;
}

json trajectory_to_json(const Trajectory& t) {
  json steps = json::array();
  for (const auto& s : t.steps) steps.push_back({s.state, s.action});
  return json{{"steps", std::move(steps)}, {"terminated_early", t.terminated_early}};
}

}  // namespace

std::string mdp_to_json(const TabularMdp& mdp) {
  json j;
  j["n_states"] = mdp.n_states();
  j["n_actions"] = mdp.n_actions();
  json transition = json::array();
  for (int s = 0; s < mdp.n_states(); ++s) {
    json per_action = json::array();
    for (int a = 0; a < mdp.n_actions(); ++a) {
      json row = json::array();
      for (int n = 0; n < mdp.n_states(); ++n) row.push_back(mdp.transition(s, a, n));
      per_action.push_back(std::move(row));
    }
    transition.push_back(std::move(per_action));
  }
  j["transition"] = std::move(transition);
  j["gamma"] = mdp.gamma();
  j["rho0"] = std::vector<double>(mdp.rho0().data(), mdp.rho0().data() + mdp.rho0().size());
  j["horizon"] = mdp.horizon();
  j["r_max"] = mdp.r_max();
  if (mdp.true_reward()) j["true_reward"] = matrix_to_json(*mdp.true_reward());
  return j.dump(2);
}

TabularMdp mdp_from_json(const std::string& text) {
  const json j = parse(text);
  const int S = require<int>(j, "n_states"), A = require<int>(j, "n_actions");
  if (S < 1 || A < 1) throw Error("n_states and n_actions must be positive");
  const json transition = require<json>(j, "transition");
  if (!transition.is_array() || transition.size() != static_cast<std::size_t>(S))
    throw Error("transition: expected n_states entries");
  Eigen::MatrixXd p(S * A, S);
  for (int s = 0; s < S; ++s) {
    if (transition[s].size() != static_cast<std::size_t>(A)) throw Error("transition: expected n_actions rows per state");
    for (int a = 0; a < A; ++a) {
      if (transition[s][a].size() != static_cast<std::size_t>(S))
        throw Error("transition: expected n_states probabilities per row");
      for (int n = 0; n < S; ++n) p(s * A + a, n) = transition[s][a][n].get<double>();
    }
  }
  const auto rho0_vec = require<std::vector<double>>(j, "rho0");
  if (rho0_vec.size() != static_cast<std::size_t>(S)) throw Error("rho0: expected n_states entries");
  const Eigen::VectorXd rho0 = Eigen::Map<const Eigen::VectorXd>(rho0_vec.data(), S);
  std::optional<Eigen::MatrixXd> reward;
  if (j.contains("true_reward") && !j["true_reward"].is_null())
    reward = matrix_from_json(j["true_reward"], "true_reward");
  return TabularMdp(S, A, std::move(p), require<double>(j, "gamma"), rho0, require<int>(j, "horizon"),
                    require<double>(j, "r_max"), std::move(reward));
}

std::string dataset_to_json(const RankingDataset& dataset) {
  json j;
  j["pairs"] = json::array();
  for (const auto& pair : dataset.pairs)
    j["pairs"].push_back({{"lesser", visitation_to_json(pair.lesser)},
                          {"greater", visitation_to_json(pair.greater)},
                          {"source", to_string(pair.source)}});
  j["chains"] = json::array();
  for (const auto& chain : dataset.chains) {
    json members = json::array();
    for (const auto& m : chain.members) members.push_back(visitation_to_json(m));
    j["chains"].push_back({{"members", std::move(members)}, {"targets", chain.targets}});
  }
  return j.dump(2);
}

RankingDataset dataset_from_json(const std::string& text) {
  const json j = parse(text);
  RankingDataset data;
  for (const auto& p : j.value("pairs", json::array())) {
    RankingPair pair{visitation_from_json(require<json>(p, "lesser")),
                     visitation_from_json(require<json>(p, "greater")),
                     pair_source_from_string(p.value("source", "online_agent_vs_expert"))};
    if (pair.lesser.rho.rows() != pair.greater.rho.rows() || pair.lesser.rho.cols() != pair.greater.rho.cols())
      throw Error("ranking pair visitations have different shapes");
    data.pairs.push_back(std::move(pair));
  }
  for (const auto& c : j.value("chains", json::array())) {
    RankingChain chain;
    for (const auto& m : require<json>(c, "members")) chain.members.push_back(visitation_from_json(m));
    chain.targets = require<std::vector<double>>(c, "targets");
    chain.validate();
    data.chains.push_back(std::move(chain));
  }
  return data;
}

std::string offline_preferences_to_json(const RankingChain& chain) {
  chain.validate();
  if (chain.trajectories.empty()) throw Error("offline preferences need trajectories");
  json j;
  j["trajectories"] = json::array();
  for (const auto& group : chain.trajectories) {
    json g = json::array();
    for (const auto& t : group) g.push_back(trajectory_to_json(t));
    j["trajectories"].push_back(std::move(g));
  }
  j["targets"] = chain.targets;
  return j.dump(2);
}

RankingChain offline_preferences_from_json(const std::string& text, const TabularMdp& mdp,
                                           bool state_only) {
  const json j = parse(text);
  RankingChain chain;
  chain.targets = require<std::vector<double>>(j, "targets");
  for (const auto& group : require<json>(j, "trajectories")) {
    std::vector<Trajectory> trajectories;
    if (!group.empty() && group[0].is_array() && !group[0].empty() && group[0][0].is_number())
      trajectories.push_back(trajectory_from_json(group));
    else
      for (const auto& t : group) trajectories.push_back(trajectory_from_json(t));
    Visitation v = empirical_visitation(trajectories, mdp);
    chain.members.push_back(state_only ? v.state_marginal() : std::move(v));
    chain.trajectories.push_back(std::move(trajectories));
  }
  chain.validate();
  return chain;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void write_reports_csv(std::ostream& out, const std::vector<GameReport>& reports) {
  out << kReportCsvHeader << '\n';
  for (const auto& r : reports)
    out << r.round << ',' << format_double(r.ranking_loss) << ',' << format_double(r.eps_r) << ','
        << format_double(r.eps_pi) << ',' << format_double(r.f_divergence) << ','
        << format_double(r.bound_rhs) << ',' << (r.bound_satisfied ? 1 : 0) << ','
        << format_double(r.true_return_ratio) << ',' << r.env_steps << '\n';
}

std::string reports_to_csv(const std::vector<GameReport>& reports) {
  std::ostringstream out;
  write_reports_csv(out, reports);
  return out.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace rankgame
