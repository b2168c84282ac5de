#include "rankgame/reward.hpp"

#include <algorithm>

namespace rankgame {

RewardFn RewardFn::tabular(RewardKind kind, int n_states, int n_actions, double init,
                           ClampRange clamp) {
  if (n_states < 1 || n_actions < 1) throw Error("RewardFn: dimensions must be positive");
  if (clamp.lo > clamp.hi) throw Error("RewardFn: clamp range is empty");
  RewardFn r(kind, n_states, n_actions, clamp);
  r.params_ = Eigen::VectorXd::Constant(r.table_rows() * r.table_cols(), init);
  r.set_params(r.params_);
  return r;
}

RewardFn RewardFn::from_table(RewardKind kind, int n_actions, const Eigen::MatrixXd& values,
                              ClampRange clamp) {
  RewardFn r = tabular(kind, static_cast<int>(values.rows()) - 1, n_actions, 0.0, clamp);
  if (values.cols() != r.table_cols()) throw Error("RewardFn::from_table: column mismatch");
  r.set_params(Eigen::Map<const Eigen::VectorXd>(values.data(), values.size()));
  return r;
}

RewardFn RewardFn::linear(RewardKind kind, int n_states, int n_actions, Eigen::MatrixXd features,
                          Eigen::VectorXd weights, ClampRange clamp) {
  if (n_states < 1 || n_actions < 1) throw Error("RewardFn: dimensions must be positive");
  RewardFn r(kind, n_states, n_actions, clamp);
  if (features.rows() != r.table_rows() * r.table_cols())
    throw Error("RewardFn::linear: feature rows must equal the number of table entries");
  if (features.cols() != weights.size())
    throw Error("RewardFn::linear: weight dimension does not match features");
  r.features_ = std::move(features);
  r.params_ = std::move(weights);
  return r;
}

void RewardFn::set_params(const Eigen::VectorXd& params) {
  if (params_.size() != 0 && params.size() != params_.size())
    throw Error("RewardFn::set_params: size mismatch");
  params_ = params;
  if (is_tabular()) {
    params_ = params_.cwiseMax(clamp_.lo).cwiseMin(clamp_.hi);
    pin_absorbing();
  }
}

void RewardFn::pin_absorbing() {
  const int rows = table_rows();
  for (int c = 0; c < table_cols(); ++c) params_[c * rows + n_states_] = 0.0;
}

Eigen::VectorXd RewardFn::raw_values() const {
  if (is_tabular()) return params_;
  return *features_ * params_;
}

Eigen::MatrixXd RewardFn::values() const {
  Eigen::VectorXd flat = raw_values().cwiseMax(clamp_.lo).cwiseMin(clamp_.hi);
  Eigen::MatrixXd table = Eigen::Map<Eigen::MatrixXd>(flat.data(), table_rows(), table_cols());
  table.row(n_states_).setZero();
  return table;
}

Eigen::MatrixXd RewardFn::state_action_table() const {
  const Eigen::MatrixXd v = values();
  Eigen::MatrixXd out(n_states_, n_actions_);
  for (int a = 0; a < n_actions_; ++a)
    out.col(a) = v.col(kind_ == RewardKind::kStateOnly ? 0 : a).head(n_states_);
  return out;
}

double RewardFn::operator()(int state, int action) const {
  if (state == n_states_) return 0.0;
  const int col = kind_ == RewardKind::kStateOnly ? 0 : action;
  const int idx = col * table_rows() + state;
  double raw = is_tabular() ? params_[idx] : features_->row(idx).dot(params_);
  return std::clamp(raw, clamp_.lo, clamp_.hi);
}

Eigen::VectorXd RewardFn::pullback(const Eigen::MatrixXd& value_grad) const {
  if (value_grad.rows() != table_rows() || value_grad.cols() != table_cols())
    throw Error("RewardFn::pullback: gradient shape mismatch");
  Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(value_grad.data(), value_grad.size());
  const int rows = table_rows();
  for (int c = 0; c < table_cols(); ++c) g[c * rows + n_states_] = 0.0;
  if (is_tabular()) return g;
  const Eigen::VectorXd raw = raw_values();
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (raw[i] < clamp_.lo || raw[i] > clamp_.hi) g[i] = 0.0;
  return features_->transpose() * g;
}

std::string to_string(RewardKind kind) {
  return kind == RewardKind::kStateOnly ? "state_only" : "state_action";
}

RewardKind reward_kind_from_string(const std::string& name) {
  if (name == "state_only") return RewardKind::kStateOnly;
  if (name == "state_action") return RewardKind::kStateAction;
  throw Error("unknown reward kind '" + name + "'");
}

}  // namespace rankgame
