#pragma once

#include <vector>

namespace randecon {

double normal_pdf(double x);
double normal_cdf(double x);

// I_k(xi) = E[ (t + xi)^k ; t + xi > 0 ] for standard normal t, k in {0,1,2}.
//   I_0 = Phi(xi)
//   I_1 = xi Phi(xi) + phi(xi)
//   I_2 = (1 + xi^2) Phi(xi) + xi phi(xi)
double gaussian_partial_moment(int k, double xi);

// Gauss-Hermite rule for expectations over a standard normal variable:
// E[f(t)] ~= sum_j weight[j] f(node[j]). Weights sum to one.
class GaussHermite {
 public:
  explicit GaussHermite(int order);

  int order() const { return static_cast<int>(nodes_.size()); }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }

  template <class F>
  double expect(F&& f) const {
    double sum = 0.0;
    for (std::size_t j = 0; j < nodes_.size(); ++j) sum += weights_[j] * f(nodes_[j]);
    return sum;
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

}  // namespace randecon
