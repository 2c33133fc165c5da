#include "sdrom/predictor.hpp"

#include "sdrom/container.hpp"
#include "sdrom/error.hpp"

#include <cmath>
#include <string>

namespace sdrom {

LatentDynamics::LatentDynamics(const LatentSDEModel& model, const Eigen::VectorXd& values, Eigen::VectorXd mu,
                               const Trajectory* forcing)
    : model_(model), mu_(std::move(mu)), forcing_(forcing) {
  if (values.size() != model.layout().size()) {
    throw Error(ErrorCode::dimension_mismatch, "parameter vector does not match the model layout");
  }
  if (mu_.size() != model.config().n_mu) {
    throw Error(ErrorCode::dimension_mismatch, "mu has " + std::to_string(mu_.size()) + " entries, model expects " +
                                                   std::to_string(model.config().n_mu));
  }
  const int n_f = model.config().n_f;
  if (n_f > 0 && (forcing_ == nullptr || forcing_->forcing_dim() != n_f)) {
    throw Error(ErrorCode::dimension_mismatch, "model expects " + std::to_string(n_f) + " forcing channels");
  }
  // Only the drift blocks are needed; copy their posterior means once.
  std::vector<const ParamBlock*> kept;
  for (const auto& b : model.layout().blocks()) {
    if (b.name.rfind("drift.", 0) == 0 && theta_group_of(b.name) == "drift" &&
        b.name.find(kQLogvarSuffix) == std::string::npos) {
      drift_params_.layout.add(b.name, b.rows, b.cols);
      kept.push_back(&b);
    }
  }
  drift_params_.values.resize(drift_params_.layout.size());
  for (const ParamBlock* b : kept) {
    drift_params_.block(b->name) = Eigen::Map<const Eigen::MatrixXd>(values.data() + b->offset, b->rows, b->cols);
  }
  dispersion_ = model.dispersion_diag(values);
}

Eigen::MatrixXd LatentDynamics::drift(const Eigen::MatrixXd& z, double t) const {
  ad::Tape tape(false);
  FlatBlocks src(tape, drift_params_.layout, drift_params_.values);
  const Eigen::VectorXd times = Eigen::VectorXd::Constant(z.rows(), t);
  Eigen::MatrixXd f(z.rows(), model_.config().n_f);
  if (f.cols() > 0) f.rowwise() = interpolate_forcing(*forcing_, t).transpose();
  return model_.drift().eval(src, tape.constant(z), times, mu_, f).value();
}

namespace {

void check_finite(const Eigen::MatrixXd& z, long step) {
  if (!z.allFinite()) {
    throw Error(ErrorCode::diverged_integration, "non-finite latent state at step " + std::to_string(step));
  }
}

// Step sizes covering [t0, t1] with steps of dt and a shorter last step.
std::vector<double> step_sizes(double t0, double t1, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::invalid_argument, "integration step must be positive");
  std::vector<double> h;
  const double span = t1 - t0;
  if (span <= 0.0) return h;
  const long full = static_cast<long>(std::floor(span / dt * (1.0 + 1e-12)));
  for (long k = 0; k < full; ++k) h.push_back(dt);
  const double rest = span - static_cast<double>(full) * dt;
  if (rest > 1e-12 * span) h.push_back(rest);
  return h;
}

}  // namespace

LatentPath euler_maruyama(const LatentDynamics& dyn, const Eigen::VectorXd& z0, double T, double dt,
                          std::mt19937_64& rng) {
  if (z0.size() != dyn.latent_dim()) throw Error(ErrorCode::dimension_mismatch, "z0 has the wrong dimension");
  const std::vector<double> h = step_sizes(0.0, T, dt);
  const Eigen::Index d = z0.size();
  LatentPath path;
  path.times.resize(static_cast<Eigen::Index>(h.size()) + 1);
  path.states.resize(path.times.size(), d);
  path.times(0) = 0.0;
  path.states.row(0) = z0.transpose();
  std::normal_distribution<double> normal;
  Eigen::MatrixXd z = z0.transpose();
  double t = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    Eigen::MatrixXd dz = dyn.drift(z, t) * h[k];
    const double sq = std::sqrt(h[k]);
    for (Eigen::Index i = 0; i < d; ++i) dz(0, i) += dyn.dispersion()(i) * sq * normal(rng);
    z += dz;
    t = k + 1 == h.size() ? T : t + h[k];
    check_finite(z, static_cast<long>(k) + 1);
    path.times(static_cast<Eigen::Index>(k) + 1) = t;
    path.states.row(static_cast<Eigen::Index>(k) + 1) = z;
  }
  return path;
}

void euler_maruyama_advance(const LatentDynamics& dyn, Eigen::MatrixXd& z, double t0, double t1, double dt,
                            std::vector<std::mt19937_64>& rngs) {
  if (static_cast<Eigen::Index>(rngs.size()) != z.rows()) {
    throw Error(ErrorCode::invalid_argument, "one generator per state row is required");
  }
  const std::vector<double> h = step_sizes(t0, t1, dt);
  std::normal_distribution<double> normal;
  double t = t0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    Eigen::MatrixXd dz = dyn.drift(z, t) * h[k];
    const double sq = std::sqrt(h[k]);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      for (Eigen::Index i = 0; i < z.cols(); ++i) dz(r, i) += dyn.dispersion()(i) * sq * normal(rngs[r]);
    }
    z += dz;
    t += h[k];
    check_finite(z, static_cast<long>(k) + 1);
  }
}

std::mt19937_64 member_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t member) {
  return derive_rng(seed, kPredictionDomain, stream, member);
}

PredictionEnsemble predict_ensemble(const LatentSDEModel& model, const Eigen::VectorXd& values,
                                    const Eigen::VectorXd& u0, const Eigen::VectorXd& mu, const Trajectory* forcing,
                                    const Eigen::VectorXd& times, const PredictOptions& opts, std::uint64_t stream) {
  const ModelConfig& cfg = model.config();
  if (opts.n_samples < 1) throw Error(ErrorCode::invalid_argument, "n_samples must be at least 1");
  if (times.size() < 1 || times(0) != 0.0) {
    throw Error(ErrorCode::invalid_argument, "prediction times must start at 0");
  }
  for (Eigen::Index j = 1; j < times.size(); ++j) {
    if (!(times(j) > times(j - 1))) throw Error(ErrorCode::invalid_argument, "prediction times must increase");
  }
  if (u0.size() != cfg.D) {
    throw Error(ErrorCode::dimension_mismatch,
                "initial state has " + std::to_string(u0.size()) + " entries, model expects " + std::to_string(cfg.D));
  }
  double dt = opts.dt;
  if (dt <= 0.0) dt = times.size() > 1 ? 0.25 * (times(1) - times(0)) : 1.0;

  const int n = opts.n_samples;
  const Eigen::Index N = times.size();
  const int d = cfg.d;
  std::vector<std::mt19937_64> rngs;
  for (int k = 0; k < n; ++k) rngs.push_back(member_rng(opts.seed, stream, static_cast<std::uint64_t>(k)));

  // Initial latent state from the encoder.
  ad::Tape tape(false);
  ModelBlocks src(tape, model, values);
  Encoder::Output enc = model.encoder().encode(src, tape.constant(u0.transpose()));
  const Eigen::RowVectorXd z_mean = enc.mean.value().row(0);
  const Eigen::RowVectorXd z_sd = (0.5 * enc.logvar.value().row(0).array()).exp().matrix();
  const Eigen::RowVectorXd dec_sd = (0.5 * model.decoder().logvar(src).value().row(0).array()).exp().matrix();
  std::normal_distribution<double> normal;
  Eigen::MatrixXd z(n, d);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < d; ++i) z(k, i) = z_mean(i) + z_sd(i) * normal(rngs[k]);

  LatentDynamics dyn(model, values, mu, forcing);
  PredictionEnsemble ens;
  ens.times = times;
  ens.latent_paths.assign(n, Eigen::MatrixXd(N, d));
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(N, cfg.D);
  Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(N, cfg.D);
  std::vector<Eigen::MatrixXd> decoded(n, Eigen::MatrixXd(N, cfg.D));
  for (Eigen::Index j = 0; j < N; ++j) {
    if (j > 0) euler_maruyama_advance(dyn, z, times(j - 1), times(j), dt, rngs);
    for (int k = 0; k < n; ++k) ens.latent_paths[k].row(j) = z.row(k);
    Eigen::MatrixXd mean = model.decoder().mean(src, tape.constant(z)).value();
    for (int k = 0; k < n; ++k) {
      for (Eigen::Index c = 0; c < cfg.D; ++c) decoded[k](j, c) = mean(k, c) + dec_sd(c) * normal(rngs[k]);
    }
  }
  // Statistics in a fixed member order.
  for (int k = 0; k < n; ++k) sum += decoded[k];
  ens.qoi_mean = sum / n;
  ens.qoi_std = Eigen::MatrixXd::Zero(N, cfg.D);
  ens.std_defined = n >= 2;
  if (ens.std_defined) {
    for (int k = 0; k < n; ++k) sumsq += (decoded[k] - ens.qoi_mean).array().square().matrix();
    ens.qoi_std = (sumsq / (n - 1)).array().sqrt().matrix();
  }
  return ens;
}

PredictionEnsemble predict_trajectory(const LatentSDEModel& model, const Eigen::VectorXd& values,
                                      const Trajectory& traj, const PredictOptions& opts, std::uint64_t stream) {
  if (traj.state_dim() != model.config().D) {
    throw Error(ErrorCode::dimension_mismatch, "trajectory state dimension " + std::to_string(traj.state_dim()) +
                                                   " does not match model D " + std::to_string(model.config().D));
  }
  // Predictions run on a time axis starting at zero; forcing is looked up on
  // the trajectory's own axis.
  const double t0 = traj.times(0);
  Trajectory shifted;
  const Trajectory* forcing = nullptr;
  if (traj.forcing_dim() > 0) {
    shifted.times = traj.times.array() - t0;
    shifted.forcing_samples = traj.forcing_samples;
    forcing = &shifted;
  }
  Eigen::VectorXd times = traj.times.array() - t0;
  PredictOptions o = opts;
  if (o.dt <= 0.0 && traj.length() > 1) o.dt = 0.25 * (traj.times(1) - traj.times(0));
  PredictionEnsemble ens =
      predict_ensemble(model, values, traj.states.row(0).transpose(), traj.params, forcing, times, o, stream);
  ens.times = traj.times;
  ens.eps = error_metric(traj.states, ens.qoi_mean);
  return ens;
}

TestMetrics aggregate_errors(std::vector<Eigen::VectorXd> eps) {
  if (eps.empty()) throw Error(ErrorCode::invalid_dataset, "no error curves to aggregate");
  TestMetrics m;
  double total = 0.0;
  Eigen::Index count = 0;
  Eigen::VectorXd per_traj(static_cast<Eigen::Index>(eps.size()));
  for (std::size_t i = 0; i < eps.size(); ++i) {
    total += eps[i].sum();
    count += eps[i].size();
    per_traj(static_cast<Eigen::Index>(i)) = eps[i].mean();
  }
  m.eps_mu = total / static_cast<double>(count);
  const double mean = per_traj.mean();
  m.eps_sigma = per_traj.size() > 1
                    ? std::sqrt((per_traj.array() - mean).square().sum() / static_cast<double>(per_traj.size() - 1))
                    : 0.0;
  m.eps = std::move(eps);
  return m;
}

TestMetrics evaluate_testset(const LatentSDEModel& model, const Eigen::VectorXd& values, const Dataset& test,
                             const PredictOptions& opts, int max_length) {
  if (test.trajectories.empty()) throw Error(ErrorCode::invalid_dataset, "test set is empty");
  std::vector<Eigen::VectorXd> eps;
  for (std::size_t i = 0; i < test.trajectories.size(); ++i) {
    const Trajectory& full = test.trajectories[i];
    if (max_length > 0 && full.length() > max_length) {
      Trajectory cut;
      cut.times = full.times.head(max_length);
      cut.states = full.states.topRows(max_length);
      cut.params = full.params;
      cut.forcing_samples = full.forcing_samples.topRows(max_length);
      eps.push_back(predict_trajectory(model, values, cut, opts, i).eps);
    } else {
      eps.push_back(predict_trajectory(model, values, full, opts, i).eps);
    }
  }
  return aggregate_errors(std::move(eps));
}

void write_prediction(const std::filesystem::path& path, const PredictionEnsemble& ens) {
  Container c;
  c.meta["kind"] = "prediction";
  c.meta["n_samples"] = static_cast<long>(ens.latent_paths.size());
  c.meta["std_defined"] = ens.std_defined;
  c.arrays.push_back({"times", ens.times});
  c.arrays.push_back({"qoi_mean", ens.qoi_mean});
  c.arrays.push_back({"qoi_std", ens.qoi_std});
  if (ens.eps.size() > 0) c.arrays.push_back({"eps", ens.eps});
  write_container(path, c);
}

}  // namespace sdrom
