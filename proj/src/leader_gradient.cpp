#include <cmath>

#include "rankgame/stackelberg.hpp"

namespace rankgame {
namespace {

void check_inputs(const TabularMdp& mdp, const Visitation& expert, double k) {
  if (!(k > 0.0)) throw Error("leader gradient: k must be positive");
  if (expert.support != Support::kStateAction || expert.rho.rows() != mdp.n_states() + 1 ||
      expert.rho.cols() != mdp.n_actions())
    throw Error("leader gradient: expert must be a state-action visitation of the MDP");
}

}  // namespace

double pal_leader_objective(const TabularMdp& mdp, const Eigen::MatrixXd& logits,
                            const Visitation& expert, double k) {
  check_inputs(mdp, expert, k);
  const Visitation agent = exact_visitation(mdp, Policy::softmax(logits));
  const Eigen::MatrixXd best_response = closed_form_table(agent, expert, k);
  return agent.rho.cwiseProduct(best_response).sum() / (1.0 - mdp.gamma());
}

LeaderGradient leader_gradient_pal_analytic(const TabularMdp& mdp, const Policy& pi,
                                            const Visitation& expert, double k) {
  check_inputs(mdp, expert, k);
  if ((pi.probs().array() <= 0.0).any())
    throw Error("leader gradient: policy must have full support to define logits");
  const int S = mdp.n_states(), A = mdp.n_actions();
  const double gamma = mdp.gamma();
  const Eigen::MatrixXd& probs = pi.probs();

  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) p_pi.row(s) += probs(s, a) * mdp.next_distribution(s, a);
  const Eigen::MatrixXd flow = Eigen::MatrixXd::Identity(S, S) - gamma * p_pi.transpose();
  const auto flow_lu = flow.partialPivLu();
  const auto adjoint_lu = Eigen::MatrixXd(flow.transpose()).partialPivLu();
  const Eigen::VectorXd d = flow_lu.solve((1.0 - gamma) * mdp.rho0());

  Eigen::MatrixXd rho(S, A);
  for (int s = 0; s < S; ++s) rho.row(s) = d[s] * probs.row(s);
  const Eigen::MatrixXd rho_e = expert.rho.topRows(S);

  // Coefficients of d(rho) in dJ: R* for the direct term, rho * dR*/drho for the indirect one.
  Eigen::MatrixXd g_direct(S, A), g_indirect(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double e = rho_e(s, a), p = rho(s, a), sum = e + p;
      g_direct(s, a) = (sum > 0.0 ? k * e / sum : 0.5 * k) / (1.0 - gamma);
      g_indirect(s, a) = (sum > 0.0 ? -p * k * e / (sum * sum) : 0.0) / (1.0 - gamma);
    }

  // Adjoint of rho = d * pi with d solving the flow equations:
  // dJ/dtheta(s, a) = d(s) pi(a|s) (h(s, a) - sum_b pi(b|s) h(s, b)),
  // h = g + gamma * P lambda, lambda = (I - gamma P_pi)^{-1} u, u(s) = sum_b pi(b|s) g(s, b).
  auto pull = [&](const Eigen::MatrixXd& g) {
    const Eigen::VectorXd u = probs.cwiseProduct(g).rowwise().sum();
    const Eigen::VectorXd lambda = adjoint_lu.solve(u);
    const Eigen::VectorXd p_lambda = mdp.transition() * lambda;
    Eigen::MatrixXd h(S, A);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) h(s, a) = g(s, a) + gamma * p_lambda[s * A + a];
    Eigen::MatrixXd out(S, A);
    for (int s = 0; s < S; ++s) {
      const double baseline = probs.row(s).dot(h.row(s));
      for (int a = 0; a < A; ++a) out(s, a) = d[s] * probs(s, a) * (h(s, a) - baseline);
    }
    return out;
  };

  LeaderGradient grad;
  grad.direct = pull(g_direct);
  grad.indirect = pull(g_indirect);
  grad.total = grad.direct + grad.indirect;
  return grad;
}

Eigen::MatrixXd leader_gradient_finite_difference(const TabularMdp& mdp,
                                                  const Eigen::MatrixXd& logits,
                                                  const Visitation& expert, double k, double h) {
  Eigen::MatrixXd grad(logits.rows(), logits.cols());
  Eigen::MatrixXd shifted = logits;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    shifted(i) = logits(i) + h;
    const double up = pal_leader_objective(mdp, shifted, expert, k);
    shifted(i) = logits(i) - h;
    const double down = pal_leader_objective(mdp, shifted, expert, k);
    shifted(i) = logits(i);
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace rankgame
