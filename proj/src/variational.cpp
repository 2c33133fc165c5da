#include "sdrom/variational.hpp"

#include "sdrom/error.hpp"

#include <array>
#include <cmath>

namespace sdrom {

MLPConfig DeepKernel::phi_config() const {
  MLPConfig c;
  c.layer_widths.push_back(1);
  c.layer_widths.insert(c.layer_widths.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  c.layer_widths.push_back(1);
  return c;
}

void DeepKernel::register_params(ParamLayout& layout) const {
  if (!(cfg_.init_sigma_f > 0.0) || !(cfg_.init_sigma > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "kernel sigma_f and sigma must be positive");
  }
  register_mlp(layout, kKernelPhi, phi_config());
  layout.add(kKernelLogSigmaF, 1, 1);
  layout.add(kKernelLogEll, 1, 1);
  layout.add(kKernelLogSigma, 1, 1);
}

void DeepKernel::set_auto_ell(ParamVector& params, const Eigen::VectorXd& node_times) const {
  double ell = 1.0;
  if (node_times.size() >= 2) {
    ad::Tape tape(false);
    FlatBlocks src(tape, params.layout, params.values);
    const Eigen::MatrixXd phi = features(src, node_times).value.value();
    double spacing = 0.0;
    for (Eigen::Index j = 1; j < phi.rows(); ++j) spacing += std::abs(phi(j, 0) - phi(j - 1, 0));
    spacing /= static_cast<double>(phi.rows() - 1);
    if (spacing > 1e-12) ell = 2.0 * spacing;
  }
  params.block(kKernelLogEll).setConstant(std::log(ell));
}

DeepKernel::Hyper DeepKernel::hyper(BlockSource& src) const {
  return {ad::exp(src.block(kKernelLogSigmaF)), ad::exp(src.block(kKernelLogEll)),
          ad::exp(src.block(kKernelLogSigma))};
}

ValueAndSlope DeepKernel::features(BlockSource& src, const Eigen::VectorXd& times) const {
  return mlp_forward_with_slope(src, kKernelPhi, phi_config(), src.tape().constant(times));
}

ad::Var DeepKernel::cross(const Hyper& h, const ad::Var& phi_a, const ad::Var& phi_b) const {
  ad::Var diff = ad::pairwise_diff(phi_a, phi_b);
  ad::Var two_ell2 = ad::square(h.ell) * 2.0;
  return ad::mul(h.sigma_f, ad::exp(-ad::div(ad::square(diff), two_ell2)));
}

double kernel_eval(const ParamVector& params, const DeepKernel& kernel, double t1, double t2) {
  ad::Tape tape(false);
  FlatBlocks src(tape, params.layout, params.values);
  auto h = kernel.hyper(src);
  Eigen::VectorXd a = Eigen::VectorXd::Constant(1, t1);
  Eigen::VectorXd b = Eigen::VectorXd::Constant(1, t2);
  return kernel.cross(h, kernel.features(src, a).value, kernel.features(src, b).value).value()(0, 0);
}

WindowPosterior build_window_posterior(BlockSource& src, const DeepKernel& kernel, const Eigen::VectorXd& node_times,
                                       const ad::Var& H_m, const ad::Var& H_s) {
  const Eigen::Index M = node_times.size();
  if (M < 1 || H_m.rows() != M || H_s.rows() != M || H_m.cols() != H_s.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "window posterior: feature matrices must have one row per node");
  }
  WindowPosterior wp;
  wp.node_times = node_times;
  wp.hyper = kernel.hyper(src);
  wp.phi_nodes = kernel.features(src, node_times).value;
  wp.H_m = H_m;
  wp.H_s = H_s;
  ad::Tape& tape = src.tape();
  ad::Var gram = kernel.cross(wp.hyper, wp.phi_nodes, wp.phi_nodes);
  ad::Var nugget = ad::mul(ad::square(wp.hyper.sigma), tape.constant(Eigen::MatrixXd::Identity(M, M)));
  std::array<ad::Var, 2> rhs{H_m, H_s};
  ad::Var alpha = ad::solve_spd(gram + nugget, ad::hcat(rhs));
  const Eigen::Index d = H_m.cols();
  wp.alpha_m = ad::cols(alpha, 0, d);
  wp.alpha_s = ad::cols(alpha, d, d);
  return wp;
}

PosteriorAt interp(BlockSource& src, const DeepKernel& kernel, const WindowPosterior& wp, const Eigen::VectorXd& times,
                   bool with_derivatives) {
  ValueAndSlope f = kernel.features(src, times);
  ad::Var k = kernel.cross(wp.hyper, f.value, wp.phi_nodes);
  PosteriorAt at;
  at.m = ad::matmul(k, wp.alpha_m);
  at.log_s = ad::matmul(k, wp.alpha_s);
  at.s = ad::exp(at.log_s);
  if (with_derivatives) {
    // d/dt k(t, t_j) = k * (-(phi(t) - phi_j) / ell^2) * phi'(t)
    ad::Var diff = ad::pairwise_diff(f.value, wp.phi_nodes);
    ad::Var kdot = ad::mul_col(ad::mul(k, -ad::div(diff, ad::square(wp.hyper.ell))), f.slope);
    at.dm = ad::matmul(kdot, wp.alpha_m);
    at.ds = ad::mul(at.s, ad::matmul(kdot, wp.alpha_s));
  }
  return at;
}

ad::Var sample_latent(const PosteriorAt& at, const ad::Var& gamma) {
  return at.m + ad::mul(ad::exp(at.log_s * 0.5), gamma);
}

PosteriorValues interp_values(const ParamVector& params, const DeepKernel& kernel, const Eigen::VectorXd& node_times,
                              const Eigen::MatrixXd& H_m, const Eigen::MatrixXd& H_s, const Eigen::VectorXd& times) {
  ad::Tape tape(false);
  FlatBlocks src(tape, params.layout, params.values);
  WindowPosterior wp = build_window_posterior(src, kernel, node_times, tape.constant(H_m), tape.constant(H_s));
  PosteriorAt at = interp(src, kernel, wp, times, true);
  return {at.m.value(), at.s.value(), at.dm.value(), at.ds.value()};
}

}  // namespace sdrom
