#include "randecon/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "randecon/error.hpp"

namespace randecon {

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gaussian_partial_moment(int k, double xi) {
  const double cdf = normal_cdf(xi);
  const double pdf = normal_pdf(xi);
  switch (k) {
    case 0:
      return cdf;
    case 1:
      return xi * cdf + pdf;
    case 2:
      return (1.0 + xi * xi) * cdf + xi * pdf;
    default:
      throw DomainError("gaussian_partial_moment: k must be 0, 1 or 2");
  }
}

namespace {

// Orthonormal probabilists' Hermite polynomials psi_0..psi_{m-1} at x, via
// psi_{k+1} = (x psi_k - sqrt(k) psi_{k-1}) / sqrt(k+1). Returns
// (psi_m(x), psi_m'(x), sum_{k<m} psi_k(x)^2).
struct HermiteEval {
  double value;
  double derivative;
  double sum_squares;
};

HermiteEval evaluate(int m, double x) {
  double prev = 0.0;
  double cur = 1.0;
  double sum_squares = 0.0;
  for (int k = 0; k < m; ++k) {
    sum_squares += cur * cur;
    const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) /
                        std::sqrt(static_cast<double>(k + 1));
    prev = cur;
    cur = next;
  }
  // psi_m' = sqrt(m) psi_{m-1}
  return {cur, std::sqrt(static_cast<double>(m)) * prev, sum_squares};
}

}  // namespace

GaussHermite::GaussHermite(int order) {
  if (order < 1) throw ConfigError("Gauss-Hermite order must be positive");
  // Golub-Welsch on the symmetric Jacobi matrix, then Newton polish of each
  // node and weights from the Christoffel function.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    jacobi(k - 1, k) = jacobi(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi, Eigen::EigenvaluesOnly);
  nodes_.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + order);
  weights_.resize(nodes_.size());
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    double x = nodes_[j];
    for (int it = 0; it < 4; ++it) {
      const HermiteEval e = evaluate(order, x);
      if (e.derivative == 0.0) break;
      x -= e.value / e.derivative;
    }
    nodes_[j] = x;
    weights_[j] = 1.0 / evaluate(order, x).sum_squares;
  }
  double total = 0.0;
  for (double w : weights_) total += w;
  for (double& w : weights_) w /= total;
}

}  // namespace randecon
