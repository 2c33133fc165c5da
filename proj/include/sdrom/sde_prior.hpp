#pragma once

#include "sdrom/netcore.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sdrom {

enum class DriftKind { mlp, polynomial, physics_plus_mlp };

std::string to_string(DriftKind kind);
DriftKind drift_kind_from_string(const std::string& s);

// Known physics drift psi_p(z, t; mu, f). Rows of z, t and f are aligned
// evaluation points; the result has z's shape.
using PhysicsDrift = std::function<ad::Var(const ad::Var& z, const Eigen::VectorXd& t, const Eigen::VectorXd& mu,
                                           const Eigen::MatrixXd& f)>;

// psi_p(z) = A z + b, the form a Galerkin projection of a linear operator gives.
struct LinearPhysics {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  PhysicsDrift as_drift() const;
};

struct DriftConfig {
  DriftKind kind = DriftKind::mlp;
  std::vector<int> hidden{128, 128, 128};
  int poly_order = 3;
  bool time_encoding = true;
  std::optional<LinearPhysics> linear_physics;
  // Takes precedence over linear_physics when set.
  PhysicsDrift physics;
};

// Exponent tuples of all monomials in d variables with total degree <= order,
// graded by degree and lexicographically descending within a degree:
// d=2, order=2 gives 1, z1, z2, z1^2, z1 z2, z2^2.
std::vector<std::vector<int>> monomial_exponents(int d, int order);
int polynomial_feature_count(int d, int order);

Eigen::VectorXd polynomial_features(const Eigen::VectorXd& z, int order);
// Row-wise features of an n x d batch -> n x F.
ad::Var polynomial_features(const ad::Var& z, int order);

class DriftModel {
 public:
  DriftModel() = default;
  DriftModel(DriftConfig cfg, int d, int n_mu, int n_f);

  const DriftConfig& config() const { return cfg_; }
  int latent_dim() const { return d_; }
  int num_features() const;
  MLPConfig mlp_config() const;

  void register_params(ParamLayout& layout) const;
  template <class Rng>
  void init(ParamVector& params, Rng& rng) const;

  // z: n x d; t: n; f: n x N_f (N_f may be zero). Returns n x d.
  ad::Var eval(BlockSource& src, const ad::Var& z, const Eigen::VectorXd& t, const Eigen::VectorXd& mu,
               const Eigen::MatrixXd& f) const;

 private:
  DriftConfig cfg_;
  int d_ = 0;
  int n_mu_ = 0;
  int n_f_ = 0;
};

// Polynomial drift coefficients live in "drift.coef" (d x F); one row per
// output component.
inline const std::string kDriftCoef = "drift.coef";
inline const std::string kDispersionLogDiag = "disp.log_diag";

// Psi = diag(exp(log_diag)); C = (Psi Psi^T)^{-1} = exp(-2 log_diag).
Eigen::VectorXd precision_C(const Eigen::VectorXd& log_diag);

template <class Rng>
void DriftModel::init(ParamVector& params, Rng& rng) const {
  if (cfg_.kind == DriftKind::polynomial) {
    params.block(kDriftCoef).setZero();
    return;
  }
  // Small last layer so the initial drift does not dominate the residual.
  init_mlp(params, "drift", mlp_config(), rng, 0.1);
}

}  // namespace sdrom
