#pragma once

#include <Eigen/Dense>

namespace randecon {

struct MatrixGameSolution {
  Eigen::VectorXd row_strategy;     // maximizer's mixed strategy (on the simplex)
  Eigen::VectorXd column_strategy;  // minimizer's mixed strategy
  double value = 0.0;               // max_x min_j (x^T A)_j
  int pivots = 0;
};

// Solves the zero-sum game max_{x in simplex} min_j (A^T x)_j for payoff A
// (rows: maximizer's pure strategies, columns: minimizer's). Uses a dense
// condensed-tableau simplex on the shifted game with strictly positive payoffs.
MatrixGameSolution solve_matrix_game(const Eigen::MatrixXd& payoff);

}  // namespace randecon
