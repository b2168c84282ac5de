#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace rankgame {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RewardKind { kStateAction, kStateOnly };

struct ClampRange {
  double lo = -10.0;
  double hi = 10.0;
};

// Bounded reward over state-action pairs (or states only, for learning from
// observation). Values live in a table with one extra row for the absorbing
// state; that row always evaluates to 0. The table has n_actions columns for
// kStateAction and a single column for kStateOnly.
//
// Tabular rewards keep one parameter per table entry. Linear rewards evaluate
// clamp(features * weights), where `features` has one row per table entry in
// column-major order.
class RewardFn {
 public:
  static RewardFn tabular(RewardKind kind, int n_states, int n_actions, double init = 0.0,
                          ClampRange clamp = {});
  // `values` must have n_states + 1 rows (absorbing row is overwritten with 0).
  static RewardFn from_table(RewardKind kind, int n_actions, const Eigen::MatrixXd& values,
                             ClampRange clamp = {});
  static RewardFn linear(RewardKind kind, int n_states, int n_actions, Eigen::MatrixXd features,
                         Eigen::VectorXd weights, ClampRange clamp = {});

  RewardKind kind() const { return kind_; }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  int table_rows() const { return n_states_ + 1; }
  int table_cols() const { return kind_ == RewardKind::kStateOnly ? 1 : n_actions_; }
  bool is_tabular() const { return !features_.has_value(); }
  const ClampRange& clamp() const { return clamp_; }

  double operator()(int state, int action) const;

  // (n_states + 1) x table_cols(), clamped, absorbing row zero.
  Eigen::MatrixXd values() const;
  // n_states x n_actions, state-only values broadcast over actions.
  Eigen::MatrixXd state_action_table() const;

  const Eigen::VectorXd& params() const { return params_; }
  // Replaces the parameters; tabular parameters are projected onto the clamp
  // range and the absorbing entries are pinned to 0.
  void set_params(const Eigen::VectorXd& params);

  // Chain rule from a gradient over values() to a gradient over params().
  // Entries that sit at a clamp bound of a linear reward pass no gradient.
  Eigen::VectorXd pullback(const Eigen::MatrixXd& value_grad) const;

 private:
  RewardFn(RewardKind kind, int n_states, int n_actions, ClampRange clamp)
      : kind_(kind), n_states_(n_states), n_actions_(n_actions), clamp_(clamp) {}

  Eigen::VectorXd raw_values() const;
  void pin_absorbing();

  RewardKind kind_;
  int n_states_;
  int n_actions_;
  ClampRange clamp_;
  Eigen::VectorXd params_;
  std::optional<Eigen::MatrixXd> features_;
};

std::string to_string(RewardKind kind);
RewardKind reward_kind_from_string(const std::string& name);

}  // namespace rankgame
