#include "sdrom/elbo.hpp"

#include "sdrom/error.hpp"

#include <cmath>

namespace sdrom {

WindowDraws draw_window(const LatentSDEModel& model, const Trajectory& traj, const Window& w,
                        const SamplingConfig& sampling, std::mt19937_64& rng) {
  if (sampling.R < 1 || sampling.L < 1) throw Error(ErrorCode::invalid_argument, "R and L must be at least 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double t0 = traj.times(w.first());
  const double t1 = traj.times(w.last());
  std::uniform_real_distribution<double> uniform(t0, t1);
  WindowDraws dr;
  dr.gamma.resize(sampling.R, model.config().d);
  for (Eigen::Index r = 0; r < dr.gamma.rows(); ++r)
    for (Eigen::Index i = 0; i < dr.gamma.cols(); ++i) dr.gamma(r, i) = normal(rng);
  dr.tau.resize(sampling.L);
  for (Eigen::Index l = 0; l < dr.tau.size(); ++l) dr.tau(l) = uniform(rng);
  dr.xi.resize(model.variational_size());
  for (Eigen::Index k = 0; k < dr.xi.size(); ++k) dr.xi(k) = normal(rng);
  return dr;
}

Eigen::VectorXd b_matrix_diag(const Eigen::VectorXd& s, const Eigen::VectorXd& ds, const Eigen::VectorXd& psi2) {
  if (s.size() != ds.size() || s.size() != psi2.size()) {
    throw Error(ErrorCode::dimension_mismatch, "b_matrix_diag: lengths differ");
  }
  if ((s.array() <= 0.0).any()) throw Error(ErrorCode::invalid_argument, "b_matrix_diag: s must be positive");
  return ((psi2 - ds).array() / (2.0 * s.array())).matrix();
}

ad::Var drift_residual(BlockSource& src, const LatentSDEModel& model, const PosteriorAt& at, const ad::Var& z,
                       const Eigen::VectorXd& times, const Eigen::VectorXd& mu, const Eigen::MatrixXd& f) {
  if (!at.dm.valid() || !at.ds.valid()) {
    throw Error(ErrorCode::invalid_argument, "drift_residual needs posterior derivatives");
  }
  ad::Var psi2 = ad::exp(src.block(kDispersionLogDiag) * 2.0);
  ad::Var b = ad::div(ad::add_row(-at.ds, psi2), at.s * 2.0);
  ad::Var drift = model.drift().eval(src, z, times, mu, f);
  return ad::mul(b, at.m - z) + at.dm - drift;
}

Eigen::VectorXd drift_residual(const LatentSDEModel& model, const Eigen::VectorXd& values, const Eigen::VectorXd& m,
                               const Eigen::VectorXd& s, const Eigen::VectorXd& dm, const Eigen::VectorXd& ds,
                               const Eigen::VectorXd& z, double t, const Eigen::VectorXd& mu,
                               const Eigen::VectorXd& f_t) {
  const Eigen::Index d = model.config().d;
  if (m.size() != d || s.size() != d || dm.size() != d || ds.size() != d || z.size() != d) {
    throw Error(ErrorCode::dimension_mismatch, "drift_residual: moment/latent lengths differ from d");
  }
  if ((s.array() <= 0.0).any()) throw Error(ErrorCode::invalid_argument, "drift_residual: s must be positive");
  ad::Tape tape(false);
  ModelBlocks src(tape, model, values);
  PosteriorAt at;
  at.m = tape.constant(m.transpose());
  at.s = tape.constant(s.transpose());
  at.log_s = ad::log(at.s);
  at.dm = tape.constant(dm.transpose());
  at.ds = tape.constant(ds.transpose());
  Eigen::VectorXd times = Eigen::VectorXd::Constant(1, t);
  ad::Var r = drift_residual(src, model, at, tape.constant(z.transpose()), times, mu, f_t.transpose());
  return r.value().row(0).transpose();
}

double residual_penalty(const Eigen::VectorXd& r, const Eigen::VectorXd& C) {
  if (r.size() != C.size()) throw Error(ErrorCode::dimension_mismatch, "residual_penalty: lengths differ");
  return (C.array() * r.array().square()).sum();
}

namespace {

// Stacks R copies of an n x d posterior quantity.
ad::Var stack(const ad::Var& a, int R) {
  if (R == 1) return a;
  std::vector<ad::Var> parts(R, a);
  return ad::vcat(parts);
}

// (R*n) x d matrix whose r-th block repeats gamma row r.
Eigen::MatrixXd expand_gamma(const Eigen::MatrixXd& gamma, Eigen::Index n) {
  Eigen::MatrixXd out(gamma.rows() * n, gamma.cols());
  for (Eigen::Index r = 0; r < gamma.rows(); ++r) out.middleRows(r * n, n) = gamma.row(r).replicate(n, 1);
  return out;
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw Error(ErrorCode::non_finite_elbo, std::string(term) + " term is not finite");
}

}  // namespace

ad::Var elbo_window(ModelBlocks& src, const LatentSDEModel& model, const Trajectory& traj, const Window& w,
                    const WindowDraws& draws, double kl_weight, ElboTerms* terms) {
  const ModelConfig& cfg = model.config();
  if (traj.state_dim() != cfg.D || traj.param_dim() != cfg.n_mu || traj.forcing_dim() != cfg.n_f) {
    throw Error(ErrorCode::dimension_mismatch, "trajectory dimensions do not match the model");
  }
  const int M = w.size();
  const int R = static_cast<int>(draws.gamma.rows());
  const int L = static_cast<int>(draws.tau.size());
  if (R < 1 || L < 1 || draws.gamma.cols() != cfg.d) {
    throw Error(ErrorCode::invalid_argument, "window draws need R, L >= 1 and d columns of gamma");
  }
  ad::Tape& tape = src.tape();

  Eigen::VectorXd tw(M);
  Eigen::MatrixXd U(M, cfg.D);
  for (int j = 0; j < M; ++j) {
    tw(j) = traj.times(w.sample_indices[j]);
    U.row(j) = traj.states.row(w.sample_indices[j]);
  }
  auto enc = model.encoder().encode(src, tape.constant(U));
  WindowPosterior wp = build_window_posterior(src, model.kernel(), tw, enc.mean, enc.logvar);

  // Log-likelihood at the window's snapshots.
  PosteriorAt nodes = interp(src, model.kernel(), wp, tw, false);
  ad::Var z_nodes = stack(nodes.m, R) +
                    ad::mul(stack(ad::exp(nodes.log_s * 0.5), R), tape.constant(expand_gamma(draws.gamma, M)));
  ad::Var u_mean = model.decoder().mean(src, z_nodes);
  Eigen::MatrixXd U_stack = U.replicate(R, 1);
  ad::Var loglik = gaussian_loglik(tape.constant(std::move(U_stack)), u_mean, model.decoder().logvar(src)) *
                   (1.0 / R);

  // Drift residual at the uniform time samples.
  PosteriorAt at = interp(src, model.kernel(), wp, draws.tau, true);
  PosteriorAt at_stack{stack(at.m, R), stack(at.log_s, R), stack(at.s, R), stack(at.dm, R), stack(at.ds, R)};
  ad::Var z_tau = at_stack.m + ad::mul(ad::exp(at_stack.log_s * 0.5), tape.constant(expand_gamma(draws.gamma, L)));
  Eigen::VectorXd tau_stack = draws.tau.replicate(R, 1);
  Eigen::MatrixXd f_tau(static_cast<Eigen::Index>(R) * L, cfg.n_f);
  for (Eigen::Index l = 0; l < L; ++l) {
    const Eigen::RowVectorXd fl = interpolate_forcing(traj, draws.tau(l)).transpose();
    for (int r = 0; r < R; ++r) f_tau.row(r * L + l) = fl;
  }
  ad::Var r = drift_residual(src, model, at_stack, z_tau, tau_stack, traj.params, f_tau);
  ad::Var C = ad::exp(src.block(kDispersionLogDiag) * -2.0);
  const double span = tw(M - 1) - tw(0);
  ad::Var residual = ad::sum(ad::mul_row(ad::square(r), C)) * (span / (2.0 * L * R));

  ad::Var kl = src.kl() * kl_weight;

  check_finite(loglik.scalar(), "log-likelihood");
  check_finite(residual.scalar(), "drift-residual");
  check_finite(kl.scalar(), "KL");
  ad::Var elbo = loglik - residual - kl;
  if (terms != nullptr) {
    terms->loglik = loglik.scalar();
    terms->residual = residual.scalar();
    terms->kl = kl.scalar();
    terms->elbo = elbo.scalar();
  }
  return elbo;
}

namespace {

const Eigen::VectorXd* xi_for(const LatentSDEModel& model, const WindowDraws& draws) {
  if (model.variational_size() == 0) return nullptr;
  if (draws.xi.size() != model.variational_size()) {
    throw Error(ErrorCode::dimension_mismatch, "window draws carry the wrong number of xi samples");
  }
  return &draws.xi;
}

}  // namespace

ElboTerms elbo_window_estimate(const LatentSDEModel& model, const Eigen::VectorXd& values, const Trajectory& traj,
                               const Window& w, const WindowDraws& draws, double kl_weight) {
  ad::Tape tape(false);
  ModelBlocks src(tape, model, values, xi_for(model, draws));
  ElboTerms terms;
  elbo_window(src, model, traj, w, draws, kl_weight, &terms);
  return terms;
}

WindowGradient elbo_window_gradient(const LatentSDEModel& model, const Eigen::VectorXd& values,
                                    const Trajectory& traj, const Window& w, const WindowDraws& draws,
                                    double kl_weight) {
  ad::Tape tape;
  ModelBlocks src(tape, model, values, xi_for(model, draws));
  WindowGradient out;
  ad::Var elbo = elbo_window(src, model, traj, w, draws, kl_weight, &out.terms);
  tape.backward(elbo);
  out.grad = tape.grad(src.flat()).col(0);
  if (!out.grad.allFinite()) throw Error(ErrorCode::non_finite_gradient, "ELBO gradient has non-finite entries");
  return out;
}

SampledGradient elbo_gradient_estimate(const LatentSDEModel& model, const Eigen::VectorXd& values,
                                       const Dataset& data, const std::vector<Window>& windows,
                                       const SamplingConfig& sampling, std::mt19937_64& rng) {
  if (windows.empty()) throw Error(ErrorCode::invalid_dataset, "no windows to sample from");
  std::uniform_int_distribution<std::size_t> pick(0, windows.size() - 1);
  SampledGradient out;
  out.window = pick(rng);
  const Window& w = windows[out.window];
  const Trajectory& traj = data.trajectories.at(w.trajectory_index);
  WindowDraws draws = draw_window(model, traj, w, sampling, rng);
  out.gradient = elbo_window_gradient(model, values, traj, w, draws, 1.0 / static_cast<double>(windows.size()));
  return out;
}

}  // namespace sdrom
