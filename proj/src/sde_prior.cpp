#include "sdrom/sde_prior.hpp"

#include "sdrom/error.hpp"

#include <array>
#include <cmath>

namespace sdrom {

std::string to_string(DriftKind kind) {
  switch (kind) {
    case DriftKind::mlp: return "mlp";
    case DriftKind::polynomial: return "polynomial";
    case DriftKind::physics_plus_mlp: return "physics_plus_mlp";
  }
  return "mlp";
}

DriftKind drift_kind_from_string(const std::string& s) {
  if (s == "mlp") return DriftKind::mlp;
  if (s == "polynomial") return DriftKind::polynomial;
  if (s == "physics_plus_mlp") return DriftKind::physics_plus_mlp;
  throw Error(ErrorCode::schema_violation, "unknown drift kind '" + s + "'");
}

PhysicsDrift LinearPhysics::as_drift() const {
  Eigen::MatrixXd a = A;
  Eigen::RowVectorXd brow = b.transpose();
  return [a, brow](const ad::Var& z, const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::MatrixXd&) {
    ad::Tape& t = *z.tape();
    return ad::add_row(ad::matmul_nt(z, t.constant(a)), t.constant(brow));
  };
}

namespace {

void collect(int d, int degree, int var, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (var == d - 1) {
    cur[var] = degree;
    out.push_back(cur);
    return;
  }
  for (int e = degree; e >= 0; --e) {
    cur[var] = e;
    collect(d, degree - e, var + 1, cur, out);
  }
}

}  // namespace

std::vector<std::vector<int>> monomial_exponents(int d, int order) {
  if (order < 1 || order > 3) {
    throw Error(ErrorCode::unsupported_order, "polynomial order " + std::to_string(order) + " (supported: 1-3)");
  }
  if (d < 1) throw Error(ErrorCode::invalid_argument, "polynomial features need d >= 1");
  std::vector<std::vector<int>> out;
  std::vector<int> cur(d, 0);
  for (int degree = 0; degree <= order; ++degree) collect(d, degree, 0, cur, out);
  return out;
}

int polynomial_feature_count(int d, int order) { return static_cast<int>(monomial_exponents(d, order).size()); }

Eigen::VectorXd polynomial_features(const Eigen::VectorXd& z, int order) {
  const auto exps = monomial_exponents(static_cast<int>(z.size()), order);
  Eigen::VectorXd out(exps.size());
  for (std::size_t k = 0; k < exps.size(); ++k) {
    double v = 1.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) v *= std::pow(z(i), exps[k][i]);
    out(k) = v;
  }
  return out;
}

ad::Var polynomial_features(const ad::Var& z, int order) {
  ad::Tape& t = *z.tape();
  const int d = static_cast<int>(z.cols());
  const auto exps = monomial_exponents(d, order);
  const Eigen::Index n = z.rows();
  const Eigen::Index nf = static_cast<Eigen::Index>(exps.size());
  const ad::Mat& zv = z.value();
  ad::Mat out(n, nf);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index k = 0; k < nf; ++k) {
      double v = 1.0;
      for (int i = 0; i < d; ++i) {
        for (int e = 0; e < exps[k][i]; ++e) v *= zv(r, i);
      }
      out(r, k) = v;
    }
  }
  int iz = z.id();
  return t.push(std::move(out), {z}, [iz, exps, d, n, nf](ad::Tape& t, int self) {
    const ad::Mat& g = t.adjoint(self);
    const ad::Mat& zv = t.value(iz);
    ad::Mat& gz = t.accum(iz);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index k = 0; k < nf; ++k) {
        const double gk = g(r, k);
        if (gk == 0.0) continue;
        for (int i = 0; i < d; ++i) {
          const int ei = exps[k][i];
          if (ei == 0) continue;
          double dv = ei;
          for (int j = 0; j < d; ++j) {
            const int ej = j == i ? ei - 1 : exps[k][j];
            for (int e = 0; e < ej; ++e) dv *= zv(r, j);
          }
          gz(r, i) += gk * dv;
        }
      }
    }
  });
}

DriftModel::DriftModel(DriftConfig cfg, int d, int n_mu, int n_f)
    : cfg_(std::move(cfg)), d_(d), n_mu_(n_mu), n_f_(n_f) {
  if (d <= 0) throw Error(ErrorCode::invalid_argument, "latent dimension must be positive");
  if (cfg_.kind == DriftKind::polynomial) {
    monomial_exponents(d, cfg_.poly_order);
  }
  if (cfg_.kind == DriftKind::physics_plus_mlp && !cfg_.physics && !cfg_.linear_physics) {
    throw Error(ErrorCode::invalid_argument, "physics_plus_mlp drift needs a physics prior");
  }
  if (cfg_.linear_physics) {
    const auto& lp = *cfg_.linear_physics;
    if (lp.A.rows() != d || lp.A.cols() != d || lp.b.size() != d) {
      throw Error(ErrorCode::dimension_mismatch, "linear physics prior must be d x d plus a d-vector");
    }
  }
}

int DriftModel::num_features() const { return polynomial_feature_count(d_, cfg_.poly_order); }

MLPConfig DriftModel::mlp_config() const {
  MLPConfig c;
  c.layer_widths.push_back(d_ + n_mu_ + n_f_);
  c.layer_widths.insert(c.layer_widths.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  c.layer_widths.push_back(d_);
  c.input_has_time_encoding = cfg_.time_encoding;
  return c;
}

void DriftModel::register_params(ParamLayout& layout) const {
  if (cfg_.kind == DriftKind::polynomial) {
    layout.add(kDriftCoef, d_, num_features());
  } else {
    register_mlp(layout, "drift", mlp_config());
  }
}

ad::Var DriftModel::eval(BlockSource& src, const ad::Var& z, const Eigen::VectorXd& t, const Eigen::VectorXd& mu,
                         const Eigen::MatrixXd& f) const {
  const Eigen::Index n = z.rows();
  if (z.cols() != d_ || t.size() != n || mu.size() != n_mu_ || f.cols() != n_f_ || f.rows() != n) {
    throw Error(ErrorCode::dimension_mismatch, "drift_eval: inputs do not match the drift's dimensions");
  }
  if (cfg_.kind == DriftKind::polynomial) {
    return ad::matmul_nt(polynomial_features(z, cfg_.poly_order), src.block(kDriftCoef));
  }
  ad::Tape& tape = src.tape();
  ad::Mat side(n, n_mu_ + n_f_);
  for (Eigen::Index r = 0; r < n; ++r) {
    side.row(r).head(n_mu_) = mu.transpose();
    side.row(r).tail(n_f_) = f.row(r);
  }
  ad::Var x = z;
  if (side.cols() > 0) {
    std::array<ad::Var, 2> parts{z, tape.constant(std::move(side))};
    x = ad::hcat(parts);
  }
  ad::Var out = mlp_forward(src, "drift", mlp_config(), x, &t);
  if (cfg_.kind == DriftKind::physics_plus_mlp) {
    const PhysicsDrift phys = cfg_.physics ? cfg_.physics : cfg_.linear_physics->as_drift();
    out = ad::add(phys(z, t, mu, f), out);
  }
  return out;
}

Eigen::VectorXd precision_C(const Eigen::VectorXd& log_diag) { return (-2.0 * log_diag.array()).exp().matrix(); }

}  // namespace sdrom
