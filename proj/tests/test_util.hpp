#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "rankgame/mdp.hpp"
#include "rankgame/rng.hpp"

namespace rankgame::test {

inline Eigen::MatrixXd random_table(int rows, int cols, std::uint64_t seed, double lo, double hi) {
  Rng rng(mix_seed(seed, 0x7e57));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(lo, hi);
  return m;
}

inline Policy random_policy(int n_states, int n_actions, std::uint64_t seed) {
  return Policy::softmax(random_table(n_states, n_actions, seed, -2.0, 2.0));
}

// Random normalized table with the given number of rows; zeros_every > 0 blanks
// every zeros_every-th entry.
inline Eigen::MatrixXd random_distribution(int rows, int cols, std::uint64_t seed, int zeros_every = 0) {
  Eigen::MatrixXd m = random_table(rows, cols, seed, 0.0, 1.0);
  if (zeros_every > 0)
    for (Eigen::Index i = 0; i < m.size(); i += zeros_every) m(i) = 0.0;
  if (m.sum() == 0.0) m(0) = 1.0;
  return m / m.sum();
}

// As random_distribution, with no mass on the trailing absorbing row.
inline Eigen::MatrixXd random_occupancy(int rows, int cols, std::uint64_t seed, int zeros_every = 0) {
  Eigen::MatrixXd m = random_distribution(rows, cols, seed, zeros_every);
  m.row(rows - 1).setZero();
  if (m.sum() == 0.0) m(0) = 1.0;
  return m / m.sum();
}

inline Visitation visitation(const Eigen::MatrixXd& rho) {
  Visitation v;
  v.rho = rho;
  return v;
}

}  // namespace rankgame::test
