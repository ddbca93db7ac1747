#include "randecon/matrix_game.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#include "randecon/error.hpp"

namespace randecon {

namespace {

constexpr double kPivotTol = 1e-12;
constexpr double kCostTol = 1e-13;

// Condensed (Tucker) tableau for max 1^T y s.t. B y <= 1, y >= 0, B > 0.
// Basic variable of row i: x_basic = rhs_i - sum_j tab(i, j) x_nonbasic_j.
class Tableau {
 public:
  explicit Tableau(const Eigen::MatrixXd& b)
      : rows_(static_cast<int>(b.rows())),
        cols_(static_cast<int>(b.cols())),
        tab_(static_cast<std::size_t>(rows_) * cols_),
        rhs_(rows_, 1.0),
        cost_(cols_, 1.0),
        row_label_(rows_),
        col_label_(cols_),
        norm_(cols_) {
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) at(i, j) = b(i, j);
    for (int j = 0; j < cols_; ++j) col_label_[j] = j;
    for (int i = 0; i < rows_; ++i) row_label_[i] = cols_ + i;
  }

  // Runs the simplex to optimality; returns the pivot count.
  int optimize() {
    const int budget = 50 * (rows_ + cols_) + 1000;
    int degenerate_run = 0;
    for (int pivots = 0; pivots < budget; ++pivots) {
      const bool bland = degenerate_run > 50;
      const int q = entering(bland);
      if (q < 0) return pivots;
      const int p = leaving(q, bland);
      if (p < 0) throw NumericalError("matrix game LP unbounded (payoffs not positive)", 0.0);
      degenerate_run = rhs_[p] <= 0.0 ? degenerate_run + 1 : 0;
      pivot(p, q);
    }
    throw NumericalError("matrix game simplex exceeded its pivot budget", 0.0);
  }

  double objective() const { return objective_; }

  // Primal y (column player, unnormalized).
  Eigen::VectorXd primal() const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(cols_);
    for (int i = 0; i < rows_; ++i)
      if (row_label_[i] < cols_) y(row_label_[i]) = rhs_[i];
    return y;
  }

  // Dual prices of the rows (row player, unnormalized).
  Eigen::VectorXd dual() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(rows_);
    for (int j = 0; j < cols_; ++j)
      if (col_label_[j] >= cols_) x(col_label_[j] - cols_) = std::max(0.0, -cost_[j]);
    return x;
  }

 private:
  double& at(int i, int j) { return tab_[static_cast<std::size_t>(i) * cols_ + j]; }
  double at(int i, int j) const { return tab_[static_cast<std::size_t>(i) * cols_ + j]; }

  // Steepest-edge pricing: reduced cost scaled by the length of the edge.
  // The lengths are refreshed every few pivots only.
  int entering(bool bland) {
    if (!bland && refresh_++ % 8 == 0) {
      std::fill(norm_.begin(), norm_.end(), 1.0);
      for (int i = 0; i < rows_; ++i) {
        const double* row = &at(i, 0);
        for (int j = 0; j < cols_; ++j) norm_[j] += row[j] * row[j];
      }
    }
    int best = -1;
    double best_score = 0.0;
    for (int j = 0; j < cols_; ++j) {
      if (cost_[j] <= kCostTol) continue;
      if (bland) {
        if (best < 0 || col_label_[j] < col_label_[best]) best = j;
        continue;
      }
      const double score = cost_[j] * cost_[j] / norm_[j];
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    return best;
  }

  int leaving(int q, bool bland) const {
    int best = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < rows_; ++i) {
      const double a = at(i, q);
      if (a <= kPivotTol) continue;
      const double ratio = rhs_[i] / a;
      if (ratio < best_ratio ||
          (ratio == best_ratio && bland && row_label_[i] < row_label_[best])) {
        best_ratio = ratio;
        best = i;
      }
    }
    return best;
  }

  void pivot(int p, int q) {
    const double inv = 1.0 / at(p, q);
    double* prow = &at(p, 0);
    for (int j = 0; j < cols_; ++j) prow[j] *= inv;
    prow[q] = inv;
    rhs_[p] *= inv;

    for (int i = 0; i < rows_; ++i) {
      if (i == p) continue;
      double* row = &at(i, 0);
      const double f = row[q];
      if (f == 0.0) continue;
      for (int j = 0; j < cols_; ++j) row[j] -= f * prow[j];
      row[q] = -f * inv;
      rhs_[i] -= f * rhs_[p];
      if (rhs_[i] < 0.0 && rhs_[i] > -1e-14) rhs_[i] = 0.0;
    }
    const double f = cost_[q];
    for (int j = 0; j < cols_; ++j) cost_[j] -= f * prow[j];
    cost_[q] = -f * inv;
    objective_ += f * rhs_[p];

    std::swap(row_label_[p], col_label_[q]);
  }

  int rows_;
  int cols_;
  std::vector<double> tab_;
  std::vector<double> rhs_;
  std::vector<double> cost_;
  std::vector<int> row_label_;
  std::vector<int> col_label_;
  std::vector<double> norm_;
  int refresh_ = 0;
  double objective_ = 0.0;
};

}  // namespace

MatrixGameSolution solve_matrix_game(const Eigen::MatrixXd& payoff) {
  if (payoff.rows() == 0 || payoff.cols() == 0)
    throw DomainError("solve_matrix_game: empty payoff matrix");
  const double shift = 1.0 - payoff.minCoeff();
  Tableau tableau(payoff.array() + shift);
  MatrixGameSolution out;
  out.pivots = tableau.optimize();
  const double total = tableau.objective();
  Eigen::VectorXd x = tableau.dual();
  Eigen::VectorXd y = tableau.primal();
  out.row_strategy = x / x.sum();
  out.column_strategy = y / y.sum();
  out.value = 1.0 / total - shift;
  return out;
}

}  // namespace randecon
