#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rankgame/diagnostics.hpp"
#include "rankgame/mdp.hpp"
#include "rankgame/ranking.hpp"

namespace rankgame {

// MDP document: {n_states, n_actions, transition[s][a][s'], gamma, rho0,
// horizon, r_max, true_reward?[s][a]}. Loading validates the MDP invariants.
std::string mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const std::string& text);

std::string dataset_to_json(const RankingDataset& dataset);
RankingDataset dataset_from_json(const std::string& text);

// Offline preference file: {"trajectories": [[[s, a], ...], ...], "targets": [...]}.
// Visitations are recomputed from the trajectories.
std::string offline_preferences_to_json(const RankingChain& chain);
RankingChain offline_preferences_from_json(const std::string& text, const TabularMdp& mdp,
                                           bool state_only);

inline constexpr const char* kReportCsvHeader =
    "round,ranking_loss,eps_r,eps_pi,f_divergence,bound_rhs,bound_satisfied,true_return_ratio,"
    "env_steps";

std::string format_double(double value);
void write_reports_csv(std::ostream& out, const std::vector<GameReport>& reports);
std::string reports_to_csv(const std::vector<GameReport>& reports);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace rankgame
