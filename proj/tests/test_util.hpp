#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace testutil {

// Central finite differences of a scalar function.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                   double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double x0 = x(k);
    x(k) = x0 + h;
    const double fp = f(x);
    x(k) = x0 - h;
    const double fm = f(x);
    x(k) = x0;
    g(k) = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Largest componentwise relative error over components with |reference| > floor.
inline double max_rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& ref, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < ref.size(); ++k) {
    if (std::abs(ref(k)) <= floor) continue;
    worst = std::max(worst, std::abs(got(k) - ref(k)) / std::abs(ref(k)));
  }
  return worst;
}

// Componentwise error relative to max(|reference|, rel_floor * ||reference||_inf),
// so finite-difference roundoff on near-zero components is not amplified.
inline double scaled_err(const Eigen::VectorXd& got, const Eigen::VectorXd& ref, double rel_floor = 1e-3) {
  const double floor = rel_floor * ref.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index k = 0; k < ref.size(); ++k) {
    const double scale = std::max(std::abs(ref(k)), floor);
    if (scale == 0.0) continue;
    worst = std::max(worst, std::abs(got(k) - ref(k)) / scale);
  }
  return worst;
}

inline Eigen::MatrixXd randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

inline std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "sdrom_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace testutil
