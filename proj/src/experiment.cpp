#include "rankgame/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include <yaml-cpp/yaml.h>
#include <json.hpp>

#include "rankgame/io.hpp"
#include "rankgame/rng.hpp"

namespace rankgame {
namespace {

using nlohmann::json;

int line_of(const YAML::Node& node) {
  const YAML::Mark mark = node.Mark();
  return mark.is_null() ? -1 : mark.line + 1;
}

template <typename T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else return "a list of numbers";
}

// Strict view of one YAML mapping: every key must be consumed.
class Section {
 public:
  Section(YAML::Node node, std::string prefix) : node_(std::move(node)), prefix_(std::move(prefix)) {
    if (node_ && !node_.IsNull() && !node_.IsMap())
      throw ConfigError(prefix_.empty() ? "<root>" : prefix_, line_of(node_), "expected a mapping");
    if (!node_ || !node_.IsMap()) return;
    std::set<std::string> keys;
    for (const auto& kv : node_)
      if (!keys.insert(kv.first.as<std::string>()).second)
        throw ConfigError(path(kv.first.as<std::string>()), line_of(kv.first), "duplicate key");
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return YAML::Node();
    const YAML::Node& view = node_;
    return view[key];
  }

  template <typename T>
  bool get(const std::string& key, T& out) {
    const YAML::Node n = raw(key);
    if (!n || n.IsNull()) return false;
    out = convert<T>(n, path(key));
    return true;
  }

  template <typename T>
  bool get(const std::string& key, std::optional<T>& out) {
    T value{};
    if (!get(key, value)) return false;
    out = value;
    return true;
  }

  Section child(const std::string& key) { return Section(raw(key), path(key)); }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(path(key), line_of(kv.first), "unknown key");
    }
  }

  template <typename T>
  static T convert(const YAML::Node& n, const std::string& field) {
    try {
      if constexpr (std::is_same_v<T, std::vector<double>>) {
        if (!n.IsSequence()) throw YAML::Exception(n.Mark(), "");
      }
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field, line_of(n), std::string("expected ") + type_name<T>());
    }
  }

 private:
  YAML::Node node_;
  std::string prefix_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(Section& sec, const std::string& key, E fallback,
             std::initializer_list<std::pair<const char*, E>> names) {
  std::string value;
  const YAML::Node n = sec.raw(key);
  if (!n || n.IsNull()) return fallback;
  value = Section::convert<std::string>(n, sec.path(key));
  for (const auto& [name, e] : names)
    if (value == name) return e;
  std::string allowed;
  for (const auto& [name, e] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  throw ConfigError(sec.path(key), line_of(n), "unknown value '" + value + "' (expected " + allowed + ")");
}

void get_pair(Section& sec, const std::string& key, std::optional<int>& x, std::optional<int>& y) {
  const YAML::Node n = sec.raw(key);
  if (!n || n.IsNull()) return;
  if (!n.IsSequence() || n.size() != 2) throw ConfigError(sec.path(key), line_of(n), "expected [x, y]");
  x = Section::convert<int>(n[0], sec.path(key));
  y = Section::convert<int>(n[1], sec.path(key));
}

ScenarioSpec parse_scenario(Section sec) {
  ScenarioSpec s;
  s.env = parse_enum(sec, "env", s.env,
                     {{"gridworld", EnvKind::kGridworld}, {"chain", EnvKind::kChain},
                      {"random", EnvKind::kRandom}, {"bandit", EnvKind::kBandit}});
  sec.get("width", s.width);
  sec.get("height", s.height);
  get_pair(sec, "goal", s.goal_x, s.goal_y);
  sec.get("slip", s.slip);
  sec.get("chain_length", s.chain_length);
  sec.get("chain_reset", s.chain_reset);
  sec.get("n_states", s.n_states);
  sec.get("n_actions", s.n_actions);
  sec.get("env_seed", s.env_seed);
  sec.get("n_arms", s.n_arms);
  sec.get("arm_rewards", s.arm_rewards);
  sec.get("gamma", s.gamma);
  sec.get("horizon", s.horizon);
  sec.get("r_max", s.r_max);
  s.expert_source = parse_enum(sec, "expert_source", s.expert_source,
                               {{"optimal", ExpertSource::kOptimal}, {"provided", ExpertSource::kProvided}});
  if (const YAML::Node n = sec.raw("provided_policy"); n && !n.IsNull()) {
    if (!n.IsSequence() || n.size() == 0)
      throw ConfigError(sec.path("provided_policy"), line_of(n), "expected a list of rows");
    const auto first = Section::convert<std::vector<double>>(n[0], sec.path("provided_policy"));
    Eigen::MatrixXd m(n.size(), first.size());
    for (std::size_t r = 0; r < n.size(); ++r) {
      const auto row = Section::convert<std::vector<double>>(n[r], sec.path("provided_policy"));
      if (row.size() != first.size())
        throw ConfigError(sec.path("provided_policy"), line_of(n[r]), "rows differ in length");
      for (std::size_t c = 0; c < row.size(); ++c) m(r, c) = row[c];
    }
    s.provided_policy = m;
  }
  s.expert_mode = parse_enum(sec, "expert_mode", s.expert_mode,
                             {{"sampled", ExpertMode::kSampled}, {"exact", ExpertMode::kExact}});
  sec.get("n_expert_trajectories", s.n_expert_trajectories);
  sec.get("lfo", s.lfo);
  sec.get("offline_levels", s.offline_levels);
  sec.get("offline_max_temperature", s.offline_max_temperature);
  sec.get("offline_min_temperature", s.offline_min_temperature);
  if (const YAML::Node n = sec.raw("mutation"); n && !n.IsNull()) {
    Section m(n, sec.path("mutation"));
    Mutation mut;
    mut.kind = parse_enum(m, "kind", mut.kind,
                          {{"intent_change", MutationKind::kIntentChange},
                           {"dynamics_change", MutationKind::kDynamicsChange}});
    m.get("round", mut.round);
    get_pair(m, "goal", mut.goal_x, mut.goal_y);
    m.get("slip", mut.slip);
    m.get("action_shift", mut.action_shift);
    m.finish();
    s.mutation = mut;
  }
  sec.finish();
  return s;
}

GameConfig parse_game(Section sec) {
  GameConfig g;
  g.leader = parse_enum(sec, "leader", g.leader, {{"policy", Leader::kPolicy}, {"reward", Leader::kReward}});
  g.loss = parse_enum(sec, "loss", g.loss,
                      {{"supremum", GameLoss::kSupremum}, {"lk", GameLoss::kLk},
                       {"slk_auto", GameLoss::kSlkAuto}, {"offline", GameLoss::kOffline}});
  sec.get("k", g.k);
  sec.get("n_pol", g.n_pol);
  sec.get("n_rew", g.n_rew);
  sec.get("batch_size", g.batch_size);
  sec.get("ral_policy_scale", g.ral_policy_scale);
  sec.get("p", g.p);
  if (const YAML::Node n = sec.raw("shaping"); n && !n.IsNull()) {
    Section sh(n, sec.path("shaping"));
    g.shaping.kind = parse_enum(sh, "kind", g.shaping.kind,
                                {{"linear", ShapingFamily::Kind::kLinear},
                                 {"exponential", ShapingFamily::Kind::kExponential}});
    sh.get("beta", g.shaping.beta);
    sh.finish();
  }
  sec.get("lambda", g.lambda);
  sec.get("temperature", g.temperature);
  sec.get("policy_lr", g.policy_lr);
  sec.get("policy_init_noise", g.policy_init_noise);
  sec.get("rounds", g.rounds);
  sec.get("seed", g.seed);
  const auto mode = parse_enum(sec, "mode", std::string("exact"),
                               {{"exact", std::string("exact")}, {"empirical", std::string("empirical")}});
  g.use_empirical = mode == "empirical";
  const auto planner = parse_enum(sec, "planner", std::string("learned"),
                                  {{"learned", std::string("learned")}, {"known", std::string("known")}});
  g.learned_model = planner == "learned";
  sec.get("model_decay", g.model_decay);
  sec.get("episodes_per_round", g.episodes_per_round);
  sec.get("reward_lr", g.reward_lr);
  sec.get("l2_weight", g.l2_weight);
  if (const YAML::Node n = sec.raw("clamp"); n && !n.IsNull()) {
    const auto v = Section::convert<std::vector<double>>(n, sec.path("clamp"));
    if (v.size() != 2) throw ConfigError(sec.path("clamp"), line_of(n), "expected [lo, hi]");
    g.clamp = ClampRange{v[0], v[1]};
  }
  sec.get("grad_tol", g.grad_tol);
  sec.get("warm_start_reward", g.warm_start_reward);
  if (const YAML::Node n = sec.raw("snippets"); n && !n.IsNull()) {
    Section sn(n, sec.path("snippets"));
    sn.get("enabled", g.use_snippets);
    sn.get("length", g.snippet_length);
    sn.get("weight", g.snippet_weight);
    sn.finish();
  }
  sec.finish();
  return g;
}

// Splits "scenario.slip: message" into a field and a message.
ConfigError as_config_error(const Error& e) {
  const std::string what = e.what();
  const auto colon = what.find(": ");
  if (colon != std::string::npos && what.find(' ') > colon)
    return ConfigError(what.substr(0, colon), -1, what.substr(colon + 2));
  return ConfigError("<config>", -1, what);
}

void emit_optional(YAML::Emitter& em, const char* key, const std::optional<int>& v) {
  if (v) em << YAML::Key << key << YAML::Value << *v;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return v.empty() ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

json stats(const std::vector<double>& values) {
  json j;
  j["mean"] = mean_of(values);
  j["std"] = std_of(values);
  j["values"] = values;
  return j;
}

json optional_steps_stats(const std::vector<std::optional<std::int64_t>>& steps) {
  json values = json::array();
  std::vector<double> reached;
  for (const auto& s : steps) {
    if (s) {
      values.push_back(*s);
      reached.push_back(static_cast<double>(*s));
    } else {
      values.push_back(nullptr);
    }
  }
  json j;
  j["values"] = std::move(values);
  j["reached"] = reached.size();
  j["mean"] = reached.empty() ? json(nullptr) : json(mean_of(reached));
  j["std"] = reached.empty() ? json(nullptr) : json(std_of(reached));
  return j;
}

ExperimentConfig load_with_overrides(const std::filesystem::path& path, const CliOverrides& o) {
  ExperimentConfig config = load_experiment_config(path);
  if (o.out) config.output_dir = *o.out;
  if (o.empirical) config.game.use_empirical = *o.empirical;
  return config;
}

std::filesystem::path csv_path(const ExperimentConfig& config, std::uint64_t seed) {
  return config.output_dir / (config.name + "_seed" + std::to_string(seed) + ".csv");
}

}  // namespace

ConfigError::ConfigError(std::string field, int line, const std::string& message)
    : Error(field + (line > 0 ? " (line " + std::to_string(line) + ")" : std::string()) + ": " + message),
      field_(std::move(field)),
      line_(line) {}

void ExperimentConfig::validate() const {
  if (repeats < 1) throw ConfigError("repeats", -1, "must be >= 1");
  if (!(threshold > 0.0)) throw ConfigError("threshold", -1, "must be positive");
  if (name.empty() || name.find('/') != std::string::npos)
    throw ConfigError("name", -1, "must be a nonempty file-name-safe string");
  if (sweep.instances < 1) throw ConfigError("check_theorem.instances", -1, "must be >= 1");
  try {
    scenario.validate();
    GameConfig g = game;
    const bool has_offline = scenario.offline_levels > 0 || !offline_preferences_file.empty();
    if (g.loss == GameLoss::kOffline && has_offline) g.offline_chain = RankingChain{};
    g.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw as_config_error(e);
  }
  if (game.loss == GameLoss::kOffline && offline_preferences_file.empty() && scenario.offline_levels == 0)
    throw ConfigError("scenario.offline_levels", -1, "loss 'offline' needs offline preferences");
  if (game.loss == GameLoss::kOffline && offline_preferences_file.empty() &&
      scenario.expert_source == ExpertSource::kProvided)
    throw ConfigError("scenario.offline_levels", -1, "generated preferences need a true reward");
  if (scenario.mutation && scenario.mutation->round > game.rounds)
    throw ConfigError("scenario.mutation.round", -1, "must not exceed game.rounds");
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("<syntax>", e.mark.line + 1, e.msg);
  }
  Section top(root, "");
  ExperimentConfig config;
  top.get("name", config.name);
  std::string out_dir;
  if (top.get("output_dir", out_dir)) config.output_dir = out_dir;
  top.get("repeats", config.repeats);
  top.get("threshold", config.threshold);
  if (top.get("offline_preferences", config.offline_preferences_file) && !base_dir.empty() &&
      std::filesystem::path(config.offline_preferences_file).is_relative())
    config.offline_preferences_file = (base_dir / config.offline_preferences_file).string();
  {
    Section emit = top.child("emit");
    emit.get("csv", config.emit.csv);
    emit.get("json_summary", config.emit.json_summary);
    emit.get("plot_data", config.emit.plot_data);
    emit.finish();
  }
  {
    Section sweep = top.child("check_theorem");
    sweep.get("instances", config.sweep.instances);
    sweep.get("seed", config.sweep.seed);
    sweep.finish();
  }
  config.scenario = parse_scenario(top.child("scenario"));
  config.game = parse_game(top.child("game"));
  config.game.state_only = config.scenario.lfo;
  top.finish();
  config.validate();
  return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError("<file>", -1, e.what());
  }
  return parse_experiment_config(text, path.parent_path());
}

std::string serialize_scenario(const ScenarioSpec& s) {
  YAML::Emitter em;
  em.SetDoublePrecision(17);
  em << YAML::BeginMap;
  const char* env = s.env == EnvKind::kGridworld ? "gridworld"
                    : s.env == EnvKind::kChain   ? "chain"
                    : s.env == EnvKind::kRandom  ? "random"
                                                 : "bandit";
  em << YAML::Key << "env" << YAML::Value << env;
  em << YAML::Key << "width" << YAML::Value << s.width;
  em << YAML::Key << "height" << YAML::Value << s.height;
  if (s.goal_x || s.goal_y)
    em << YAML::Key << "goal" << YAML::Value << YAML::Flow << YAML::BeginSeq
       << s.goal_x.value_or(s.width - 1) << s.goal_y.value_or(s.height - 1) << YAML::EndSeq;
  em << YAML::Key << "slip" << YAML::Value << s.slip;
  em << YAML::Key << "chain_length" << YAML::Value << s.chain_length;
  em << YAML::Key << "chain_reset" << YAML::Value << s.chain_reset;
  em << YAML::Key << "n_states" << YAML::Value << s.n_states;
  em << YAML::Key << "n_actions" << YAML::Value << s.n_actions;
  em << YAML::Key << "env_seed" << YAML::Value << s.env_seed;
  em << YAML::Key << "n_arms" << YAML::Value << s.n_arms;
  if (!s.arm_rewards.empty())
    em << YAML::Key << "arm_rewards" << YAML::Value << YAML::Flow << s.arm_rewards;
  em << YAML::Key << "gamma" << YAML::Value << s.gamma;
  emit_optional(em, "horizon", s.horizon);
  em << YAML::Key << "r_max" << YAML::Value << s.r_max;
  em << YAML::Key << "expert_source" << YAML::Value
     << (s.expert_source == ExpertSource::kOptimal ? "optimal" : "provided");
  if (s.provided_policy) {
    em << YAML::Key << "provided_policy" << YAML::Value << YAML::BeginSeq;
    for (Eigen::Index r = 0; r < s.provided_policy->rows(); ++r) {
      std::vector<double> row(s.provided_policy->cols());
      for (Eigen::Index c = 0; c < s.provided_policy->cols(); ++c) row[c] = (*s.provided_policy)(r, c);
      em << YAML::Flow << row;
    }
    em << YAML::EndSeq;
  }
  em << YAML::Key << "expert_mode" << YAML::Value
     << (s.expert_mode == ExpertMode::kSampled ? "sampled" : "exact");
  em << YAML::Key << "n_expert_trajectories" << YAML::Value << s.n_expert_trajectories;
  em << YAML::Key << "lfo" << YAML::Value << s.lfo;
  em << YAML::Key << "offline_levels" << YAML::Value << s.offline_levels;
  em << YAML::Key << "offline_max_temperature" << YAML::Value << s.offline_max_temperature;
  em << YAML::Key << "offline_min_temperature" << YAML::Value << s.offline_min_temperature;
  if (s.mutation) {
    const Mutation& m = *s.mutation;
    em << YAML::Key << "mutation" << YAML::Value << YAML::BeginMap;
    em << YAML::Key << "kind" << YAML::Value
       << (m.kind == MutationKind::kIntentChange ? "intent_change" : "dynamics_change");
    em << YAML::Key << "round" << YAML::Value << m.round;
    if (m.goal_x && m.goal_y)
      em << YAML::Key << "goal" << YAML::Value << YAML::Flow << YAML::BeginSeq << *m.goal_x << *m.goal_y
         << YAML::EndSeq;
    em << YAML::Key << "slip" << YAML::Value << m.slip;
    em << YAML::Key << "action_shift" << YAML::Value << m.action_shift;
    em << YAML::EndMap;
  }
  em << YAML::EndMap;
  return em.c_str();
}

std::string serialize_experiment_config(const ExperimentConfig& c) {
  const GameConfig& g = c.game;
  YAML::Emitter em;
  em.SetDoublePrecision(17);
  em << YAML::BeginMap;
  em << YAML::Key << "name" << YAML::Value << c.name;
  em << YAML::Key << "output_dir" << YAML::Value << c.output_dir.string();
  em << YAML::Key << "repeats" << YAML::Value << c.repeats;
  em << YAML::Key << "threshold" << YAML::Value << c.threshold;
  if (!c.offline_preferences_file.empty())
    em << YAML::Key << "offline_preferences" << YAML::Value << c.offline_preferences_file;
  em << YAML::Key << "emit" << YAML::Value << YAML::BeginMap << YAML::Key << "csv" << YAML::Value
     << c.emit.csv << YAML::Key << "json_summary" << YAML::Value << c.emit.json_summary << YAML::Key
     << "plot_data" << YAML::Value << c.emit.plot_data << YAML::EndMap;
  em << YAML::Key << "check_theorem" << YAML::Value << YAML::BeginMap << YAML::Key << "instances"
     << YAML::Value << c.sweep.instances << YAML::Key << "seed" << YAML::Value << c.sweep.seed
     << YAML::EndMap;
  em << YAML::Key << "scenario" << YAML::Value << YAML::Load(serialize_scenario(c.scenario));

  em << YAML::Key << "game" << YAML::Value << YAML::BeginMap;
  em << YAML::Key << "leader" << YAML::Value << to_string(g.leader);
  em << YAML::Key << "loss" << YAML::Value << to_string(g.loss);
  if (g.k) em << YAML::Key << "k" << YAML::Value << *g.k;
  emit_optional(em, "n_pol", g.n_pol);
  emit_optional(em, "n_rew", g.n_rew);
  em << YAML::Key << "batch_size" << YAML::Value << g.batch_size;
  em << YAML::Key << "ral_policy_scale" << YAML::Value << g.ral_policy_scale;
  em << YAML::Key << "p" << YAML::Value << g.p;
  em << YAML::Key << "shaping" << YAML::Value << YAML::BeginMap << YAML::Key << "kind" << YAML::Value
     << (g.shaping.kind == ShapingFamily::Kind::kLinear ? "linear" : "exponential") << YAML::Key
     << "beta" << YAML::Value << g.shaping.beta << YAML::EndMap;
  em << YAML::Key << "lambda" << YAML::Value << g.lambda;
  em << YAML::Key << "temperature" << YAML::Value << g.temperature;
  em << YAML::Key << "policy_lr" << YAML::Value << g.policy_lr;
  em << YAML::Key << "policy_init_noise" << YAML::Value << g.policy_init_noise;
  em << YAML::Key << "rounds" << YAML::Value << g.rounds;
  em << YAML::Key << "seed" << YAML::Value << g.seed;
  em << YAML::Key << "mode" << YAML::Value << (g.use_empirical ? "empirical" : "exact");
  em << YAML::Key << "planner" << YAML::Value << (g.learned_model ? "learned" : "known");
  em << YAML::Key << "model_decay" << YAML::Value << g.model_decay;
  em << YAML::Key << "episodes_per_round" << YAML::Value << g.episodes_per_round;
  em << YAML::Key << "reward_lr" << YAML::Value << g.reward_lr;
  em << YAML::Key << "l2_weight" << YAML::Value << g.l2_weight;
  em << YAML::Key << "clamp" << YAML::Value << YAML::Flow << YAML::BeginSeq << g.clamp.lo << g.clamp.hi
     << YAML::EndSeq;
  em << YAML::Key << "grad_tol" << YAML::Value << g.grad_tol;
  em << YAML::Key << "warm_start_reward" << YAML::Value << g.warm_start_reward;
  em << YAML::Key << "snippets" << YAML::Value << YAML::BeginMap << YAML::Key << "enabled" << YAML::Value
     << g.use_snippets << YAML::Key << "length" << YAML::Value << g.snippet_length << YAML::Key
     << "weight" << YAML::Value << g.snippet_weight << YAML::EndMap;
  em << YAML::EndMap;
  em << YAML::EndMap;
  return std::string(em.c_str()) + "\n";
}

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  const ScenarioSpec& spec = config.scenario;
  BuiltEnv env = build_env(spec, seed);
  GameConfig game = config.game;
  game.seed = seed;
  game.state_only = spec.lfo;
  if (game.loss == GameLoss::kOffline) {
    if (!config.offline_preferences_file.empty()) {
      game.offline_chain = offline_preferences_from_json(read_file(config.offline_preferences_file),
                                                         env.mdp, spec.lfo);
    } else {
      OfflinePreferenceOptions opts;
      opts.max_temperature = spec.offline_max_temperature;
      opts.min_temperature = spec.offline_min_temperature;
      opts.state_only = spec.lfo;
      // Offline-only mode sees no expert data, so its chain is not grounded.
      opts.grounded = game.lambda > 0.0;
      opts.shaping = game.shaping;
      game.offline_chain = make_offline_preferences(env.mdp, *env.mdp.true_reward(), spec.offline_levels,
                                                    mix_seed(seed, 0x0ff), opts);
    }
  }
  Game g(env.mdp, env.expert, game);
  for (int round = 1; round <= game.rounds; ++round) {
    MutationResult m = apply_mutation(g.mdp(), spec, round, seed);
    if (m.applied) {
      g.replace_mdp(std::move(m.mdp));
      if (m.expert) {
        if (!m.demo_changed) {
          m.expert->demo = g.expert().demo;
          m.expert->trajectories = g.expert().trajectories;
        }
        g.replace_expert(std::move(*m.expert));
      }
    }
    g.step();
  }
  return SeedRun{seed, g.state().history};
}

std::vector<SeedRun> run_seeds(const ExperimentConfig& config, std::int64_t seed_offset, int threads) {
  const int n = config.repeats;
  std::vector<SeedRun> runs(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      const auto seed = static_cast<std::uint64_t>(static_cast<std::int64_t>(config.game.seed) + seed_offset + i);
      try {
        runs[i] = run_seed(config, seed);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(threads, 1, n);
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return runs;
}

std::optional<std::int64_t> steps_to_threshold(const std::vector<GameReport>& reports, double threshold) {
  for (const auto& r : reports)
    if (r.true_return_ratio >= threshold) return r.env_steps;
  return std::nullopt;
}

std::optional<std::int64_t> recovery_steps(const std::vector<GameReport>& reports, int round,
                                           double threshold) {
  std::int64_t before = 0;
  for (const auto& r : reports) {
    if (r.round < round) {
      before = r.env_steps;
      continue;
    }
    if (r.true_return_ratio >= threshold) return r.env_steps - before;
  }
  return std::nullopt;
}

SweepResult certificate_sweep(int instances, std::uint64_t seed) {
  SweepResult result;
  result.worst_margin = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < instances; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const int S = 2 + rng.index(19);
    const int A = 2 + rng.index(3);
    const double gamma = i % 2 == 0 ? 0.9 : 0.99;
    const double r_max = rng.uniform(0.5, 10.0);
    const double k = r_max;
    const TabularMdp mdp = make_random_mdp(S, A, mix_seed(seed, 1000 + i), gamma, 10, r_max);

    auto random_policy = [&](double scale) {
      Eigen::MatrixXd logits(S, A);
      for (Eigen::Index j = 0; j < logits.size(); ++j) logits(j) = scale * rng.uniform(-1.0, 1.0);
      return Policy::softmax(logits);
    };
    const Policy expert_policy = random_policy(3.0);
    const Visitation expert = exact_visitation(mdp, expert_policy);
    const ClampRange clamp{-2.0 * k, 2.0 * k};

    const int variant = i % 4;
    const RewardKind kind = variant == 3 ? RewardKind::kStateOnly : RewardKind::kStateAction;
    Policy pi = random_policy(3.0);
    RewardFn reward = RewardFn::tabular(kind, S, A, 0.0, clamp);
    Eigen::VectorXd params = reward.params();
    switch (variant) {
      case 0:
      case 3:
        for (Eigen::Index j = 0; j < params.size(); ++j) params[j] = rng.uniform(0.0, k);
        reward.set_params(params);
        break;
      case 1: {
        const Eigen::MatrixXd cf = closed_form_table(exact_visitation(mdp, pi), expert, k);
        reward = RewardFn::from_table(kind, A, cf, clamp);
        params = reward.params();
        for (Eigen::Index j = 0; j < params.size(); ++j) params[j] += 0.1 * k * rng.uniform(-1.0, 1.0);
        reward.set_params(params);
        pi = hard_value_iteration(mdp, reward).policy;
        break;
      }
      case 2:
        pi = expert_policy;
        reward = RewardFn::from_table(kind, A, closed_form_table(expert, expert, k), clamp);
        break;
    }
    const Certificate c = theorem1_certificate(mdp, pi, reward, expert, k);
    result.worst_margin = std::max(result.worst_margin, c.f_divergence - c.bound_rhs);
    (c.satisfied ? result.passed : result.failed) += 1;
  }
  return result;
}

int thread_budget() {
  if (const char* env = std::getenv("RANKGAME_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string summary_json(const ExperimentConfig& config, const std::vector<SeedRun>& runs) {
  json j;
  j["name"] = config.name;
  j["repeats"] = runs.size();
  j["rounds"] = config.game.rounds;
  j["threshold"] = config.threshold;
  j["leader"] = to_string(config.game.leader);
  j["loss"] = to_string(config.game.loss);
  j["mode"] = config.game.use_empirical ? "empirical" : "exact";
  json seeds = json::array();
  for (const auto& r : runs) seeds.push_back(r.seed);
  j["seeds"] = std::move(seeds);

  std::vector<double> loss, eps_r, eps_pi, fdiv, rhs, ratio, steps;
  std::vector<std::optional<std::int64_t>> reach, recovery;
  int violations = 0;
  for (const auto& run : runs) {
    const GameReport& last = run.reports.back();
    loss.push_back(last.ranking_loss);
    eps_r.push_back(last.eps_r);
    eps_pi.push_back(last.eps_pi);
    fdiv.push_back(last.f_divergence);
    rhs.push_back(last.bound_rhs);
    ratio.push_back(last.true_return_ratio);
    steps.push_back(static_cast<double>(last.env_steps));
    reach.push_back(steps_to_threshold(run.reports, config.threshold));
    if (config.scenario.mutation)
      recovery.push_back(recovery_steps(run.reports, config.scenario.mutation->round, config.threshold));
    for (const auto& r : run.reports) violations += r.bound_satisfied ? 0 : 1;
  }
  json final;
  final["ranking_loss"] = stats(loss);
  final["eps_r"] = stats(eps_r);
  final["eps_pi"] = stats(eps_pi);
  final["f_divergence"] = stats(fdiv);
  final["bound_rhs"] = stats(rhs);
  final["true_return_ratio"] = stats(ratio);
  final["env_steps"] = stats(steps);
  j["final"] = std::move(final);
  j["steps_to_threshold"] = optional_steps_stats(reach);
  if (config.scenario.mutation) {
    j["mutation_round"] = config.scenario.mutation->round;
    j["recovery_steps"] = optional_steps_stats(recovery);
  }
  j["bound_violations"] = violations;
  j["bound_satisfied_all_rounds"] = violations == 0;
  return j.dump(2) + "\n";
}

std::string plot_data_json(const ExperimentConfig& config, const std::vector<SeedRun>& runs) {
  json j;
  j["name"] = config.name;
  j["x"] = "env_steps";
  j["y"] = "true_return_ratio";
  j["threshold"] = config.threshold;
  json curves = json::array();
  std::vector<double> mean(runs.empty() ? 0 : runs.front().reports.size(), 0.0);
  for (const auto& run : runs) {
    std::vector<std::int64_t> x;
    std::vector<double> y;
    for (std::size_t t = 0; t < run.reports.size(); ++t) {
      x.push_back(run.reports[t].env_steps);
      y.push_back(run.reports[t].true_return_ratio);
      if (t < mean.size()) mean[t] += run.reports[t].true_return_ratio / static_cast<double>(runs.size());
    }
    curves.push_back({{"seed", run.seed}, {"env_steps", x}, {"true_return_ratio", y}});
  }
  j["curves"] = std::move(curves);
  if (!runs.empty()) {
    std::vector<std::int64_t> x;
    for (const auto& r : runs.front().reports) x.push_back(r.env_steps);
    j["mean"] = {{"env_steps", x}, {"true_return_ratio", mean}};
  }
  return j.dump(2) + "\n";
}

int cmd_run(const std::filesystem::path& config_path, const CliOverrides& overrides, std::ostream& out,
            std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_with_overrides(config_path, overrides);
  } catch (const Error& e) {
    err << "config error: " << config_path.string() << ": " << e.what() << '\n';
    return 2;
  }
  try {
    const auto runs = run_seeds(config, overrides.seed_offset, thread_budget());
    for (const auto& run : runs) {
      if (config.emit.csv) write_file_atomic(csv_path(config, run.seed), reports_to_csv(run.reports));
      const GameReport& last = run.reports.back();
      out << "seed " << run.seed << ": rounds=" << last.round
          << " true_return_ratio=" << format_double(last.true_return_ratio)
          << " f_divergence=" << format_double(last.f_divergence) << '\n';
    }
    if (config.emit.json_summary)
      write_file_atomic(config.output_dir / "summary.json", summary_json(config, runs));
    if (config.emit.plot_data)
      write_file_atomic(config.output_dir / "plot_data.json", plot_data_json(config, runs));
    out << "wrote " << config.output_dir.string() << '\n';
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_check_theorem(const std::filesystem::path& config_path, const CliOverrides& overrides,
                      std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_with_overrides(config_path, overrides);
  } catch (const Error& e) {
    err << "config error: " << config_path.string() << ": " << e.what() << '\n';
    return 2;
  }
  try {
    const SweepResult sweep = certificate_sweep(config.sweep.instances, config.sweep.seed);
    out << "random instances: " << sweep.passed << " passed, " << sweep.failed
        << " failed (worst f_divergence - bound = " << format_double(sweep.worst_margin) << ")\n";
    const auto runs = run_seeds(config, overrides.seed_offset, thread_budget());
    int passed = 0, failed = 0;
    for (const auto& run : runs)
      for (const auto& r : run.reports) (r.bound_satisfied ? passed : failed) += 1;
    out << "game rounds: " << passed << " passed, " << failed << " failed\n";
    return sweep.failed == 0 && failed == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    err << "check-theorem failed: " << e.what() << '\n';
    return 1;
  }
}

int cmd_compare(const std::vector<std::filesystem::path>& config_paths, const CliOverrides& overrides,
                std::ostream& out, std::ostream& err) {
  if (config_paths.size() < 2) {
    err << "usage: rankgame compare <config> <config> [...]\n";
    return 2;
  }
  std::vector<ExperimentConfig> configs;
  try {
    for (const auto& p : config_paths) configs.push_back(load_with_overrides(p, overrides));
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }
  const std::string scenario = serialize_scenario(configs.front().scenario);
  for (std::size_t i = 1; i < configs.size(); ++i) {
    if (serialize_scenario(configs[i].scenario) != scenario) {
      err << "config error: scenario of " << config_paths[i].string() << " differs from "
          << config_paths.front().string() << '\n';
      return 2;
    }
    if (configs[i].repeats != configs.front().repeats) {
      err << "config error: repeats of " << config_paths[i].string() << " differs from "
          << config_paths.front().string() << '\n';
      return 2;
    }
  }
  try {
    const double threshold = configs.front().threshold;
    std::vector<std::vector<SeedRun>> results;
    for (auto& c : configs) {
      c.game.seed = configs.front().game.seed;
      c.threshold = threshold;
      results.push_back(run_seeds(c, overrides.seed_offset, thread_budget()));
    }
    const bool mutated = configs.front().scenario.mutation.has_value();
    std::string csv = mutated ? "variant,seed,steps_to_threshold,recovery_steps,final_true_return_ratio\n"
                              : "variant,seed,steps_to_threshold,final_true_return_ratio\n";
    auto cell = [](const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : std::string(); };
    for (std::size_t v = 0; v < configs.size(); ++v) {
      int reached = 0;
      for (const auto& run : results[v]) {
        const auto steps = steps_to_threshold(run.reports, threshold);
        reached += steps ? 1 : 0;
        csv += configs[v].name + "," + std::to_string(run.seed) + "," + cell(steps) + ",";
        if (mutated)
          csv += cell(recovery_steps(run.reports, configs[v].scenario.mutation->round, threshold)) + ",";
        csv += format_double(run.reports.back().true_return_ratio) + "\n";
      }
      out << configs[v].name << ": reached " << threshold << " in " << reached << "/" << results[v].size()
          << " seeds\n";
    }
    for (std::size_t v = 1; v < configs.size(); ++v) {
      int wins = 0;
      for (std::size_t s = 0; s < results[0].size(); ++s) {
        const auto a = steps_to_threshold(results[0][s].reports, threshold);
        const auto b = steps_to_threshold(results[v][s].reports, threshold);
        if (a && (!b || *a <= *b)) ++wins;
      }
      out << configs[0].name << " <= " << configs[v].name << " in " << wins << "/" << results[0].size()
          << " seeds\n";
      if (!mutated) continue;
      const int round = configs.front().scenario.mutation->round;
      int recovered = 0;
      for (std::size_t s = 0; s < results[0].size(); ++s) {
        const auto a = recovery_steps(results[0][s].reports, round, threshold);
        const auto b = recovery_steps(results[v][s].reports, round, threshold);
        if (a && (!b || *a <= *b)) ++recovered;
      }
      out << configs[0].name << " recovers no later than " << configs[v].name << " in " << recovered << "/"
          << results[0].size() << " seeds\n";
    }
    const std::filesystem::path dir = overrides.out.value_or(configs.front().output_dir);
    write_file_atomic(dir / "compare.csv", csv);
    out << "wrote " << (dir / "compare.csv").string() << '\n';
  } catch (const std::exception& e) {
    err << "compare failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_export_env(const std::filesystem::path& config_path, const CliOverrides& overrides,
                   std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_experiment_config(config_path);
  } catch (const Error& e) {
    err << "config error: " << config_path.string() << ": " << e.what() << '\n';
    return 2;
  }
  try {
    const TabularMdp mdp = build_mdp(config.scenario);
    const std::string doc = mdp_to_json(mdp) + "\n";
    if (overrides.out) {
      write_file_atomic(*overrides.out, doc);
      out << "wrote " << overrides.out->string() << '\n';
    } else {
      out << doc;
    }
  } catch (const std::exception& e) {
    err << "export-env failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace rankgame
