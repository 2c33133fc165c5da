#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <vector>

namespace testutil {

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Hermite rule for the standard normal density (probabilists'
// weight), via the Golub-Welsch eigenvalue construction.
inline Quadrature gauss_hermite(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Quadrature q;
  for (int k = 0; k < n; ++k) {
    q.nodes.push_back(es.eigenvalues()(k));
    const double v = es.eigenvectors()(0, k);
    q.weights.push_back(v * v);
  }
  return q;
}

}  // namespace testutil
