#pragma once

#include "sdrom/netcore.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace sdrom {

// Deep squared-exponential kernel
//   k(t1, t2) = sigma_f * exp(-(phi(t1) - phi(t2))^2 / (2 ell^2))
// with a scalar feature network phi and a nugget sigma^2 on the Gram diagonal.
// sigma_f, ell and sigma are stored as logs.
struct KernelConfig {
  std::vector<int> hidden{32, 32};
  double init_sigma_f = 1.0;
  double init_sigma = 0.1;
  // <= 0 picks ell from the feature spacing of a representative window.
  double init_ell = 0.0;
};

inline const std::string kKernelPhi = "kernel.phi";
inline const std::string kKernelLogSigmaF = "kernel.log_sigma_f";
inline const std::string kKernelLogEll = "kernel.log_ell";
inline const std::string kKernelLogSigma = "kernel.log_sigma";

class DeepKernel {
 public:
  DeepKernel() = default;
  explicit DeepKernel(KernelConfig cfg) : cfg_(std::move(cfg)) {}

  const KernelConfig& config() const { return cfg_; }
  MLPConfig phi_config() const;
  void register_params(ParamLayout& layout) const;
  // node_times: the sample times of one representative window, used for the
  // automatic length scale.
  template <class Rng>
  void init(ParamVector& params, Rng& rng, const Eigen::VectorXd& node_times) const;

  struct Hyper {
    ad::Var sigma_f;  // 1 x 1
    ad::Var ell;
    ad::Var sigma;
  };
  Hyper hyper(BlockSource& src) const;

  // phi and d phi / dt at each time (n x 1 each).
  ValueAndSlope features(BlockSource& src, const Eigen::VectorXd& times) const;

  // Cross-covariance between feature columns a (n x 1) and b (m x 1).
  ad::Var cross(const Hyper& h, const ad::Var& phi_a, const ad::Var& phi_b) const;

 private:
  void set_auto_ell(ParamVector& params, const Eigen::VectorXd& node_times) const;

  KernelConfig cfg_;
};

double kernel_eval(const ParamVector& params, const DeepKernel& kernel, double t1, double t2);

// Deep-kernel interpolant of encoder features over one window. Immutable once
// built; all members live on the tape that built it.
struct WindowPosterior {
  Eigen::VectorXd node_times;  // M
  DeepKernel::Hyper hyper;
  ad::Var phi_nodes;           // M x 1
  ad::Var H_m;                 // M x d
  ad::Var H_s;                 // M x d, log-variances
  ad::Var alpha_m;             // (K_MM + sigma^2 I)^{-1} H_m
  ad::Var alpha_s;             // (K_MM + sigma^2 I)^{-1} H_s

  Eigen::Index latent_dim() const { return H_m.cols(); }
};

WindowPosterior build_window_posterior(BlockSource& src, const DeepKernel& kernel, const Eigen::VectorXd& node_times,
                                       const ad::Var& H_m, const ad::Var& H_s);

// Mean, variance and their time derivatives at n query times (each n x d).
struct PosteriorAt {
  ad::Var m;
  ad::Var log_s;
  ad::Var s;
  ad::Var dm;
  ad::Var ds;
};

PosteriorAt interp(BlockSource& src, const DeepKernel& kernel, const WindowPosterior& wp,
                   const Eigen::VectorXd& times, bool with_derivatives = true);

// m + sqrt(s) * gamma, elementwise (all n x d).
ad::Var sample_latent(const PosteriorAt& at, const ad::Var& gamma);

// ---------------------------------------------------------------------------
// Plain (non-differentiated) evaluation, used by diagnostics and tests.

struct PosteriorValues {
  Eigen::MatrixXd m, s, dm, ds;  // n x d
};

PosteriorValues interp_values(const ParamVector& params, const DeepKernel& kernel, const Eigen::VectorXd& node_times,
                              const Eigen::MatrixXd& H_m, const Eigen::MatrixXd& H_s, const Eigen::VectorXd& times);

// ---------------------------------------------------------------------------

template <class Rng>
void DeepKernel::init(ParamVector& params, Rng& rng, const Eigen::VectorXd& node_times) const {
  init_mlp(params, kKernelPhi, phi_config(), rng);
  params.block(kKernelLogSigmaF).setConstant(std::log(cfg_.init_sigma_f));
  params.block(kKernelLogSigma).setConstant(std::log(cfg_.init_sigma));
  if (cfg_.init_ell > 0.0) {
    params.block(kKernelLogEll).setConstant(std::log(cfg_.init_ell));
  } else {
    set_auto_ell(params, node_times);
  }
}

}  // namespace sdrom
