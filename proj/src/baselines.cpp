#include "sdrom/baselines.hpp"

#include "sdrom/error.hpp"
#include "sdrom/sde_prior.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace sdrom {

// ---------------------------------------------------------------------------
// POD
// ---------------------------------------------------------------------------

Eigen::MatrixXd PODBasis::project(const Eigen::MatrixXd& snapshots) const {
  if (snapshots.cols() != modes.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "snapshots have " + std::to_string(snapshots.cols()) +
                                                   " columns, basis expects " + std::to_string(modes.rows()));
  }
  return (snapshots.rowwise() - mean_snapshot.transpose()) * modes;
}

Eigen::MatrixXd PODBasis::lift(const Eigen::MatrixXd& coeffs) const {
  if (coeffs.cols() != modes.cols()) throw Error(ErrorCode::dimension_mismatch, "coefficient count mismatch");
  return (coeffs * modes.transpose()).rowwise() + mean_snapshot.transpose();
}

double PODBasis::energy_fraction(int k) const {
  const double total = singular_values.squaredNorm();
  if (total == 0.0) return 1.0;
  return singular_values.head(std::min<Eigen::Index>(k, singular_values.size())).squaredNorm() / total;
}

PODBasis pod_fit(const Eigen::MatrixXd& snapshots, int d) {
  if (d < 1) throw Error(ErrorCode::invalid_argument, "POD dimension must be positive");
  if (snapshots.rows() < d) {
    throw Error(ErrorCode::rank_deficient, "need at least d = " + std::to_string(d) + " snapshots");
  }
  PODBasis b;
  b.mean_snapshot = snapshots.colwise().mean().transpose();
  const Eigen::MatrixXd X = snapshots.rowwise() - b.mean_snapshot.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
  b.singular_values = svd.singularValues();
  const double tol = static_cast<double>(std::max(X.rows(), X.cols())) * std::numeric_limits<double>::epsilon() *
                     (b.singular_values.size() > 0 ? b.singular_values(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < b.singular_values.size() && b.singular_values(rank) > tol) ++rank;
  if (d > rank) {
    throw Error(ErrorCode::rank_deficient,
                "requested " + std::to_string(d) + " modes but the snapshots have rank " + std::to_string(rank));
  }
  b.modes = svd.matrixV().leftCols(d);
  // Fix the sign so the largest entry of every mode is positive.
  for (int k = 0; k < d; ++k) {
    Eigen::Index i;
    b.modes.col(k).cwiseAbs().maxCoeff(&i);
    if (b.modes(i, k) < 0.0) b.modes.col(k) *= -1.0;
  }
  return b;
}

Eigen::MatrixXd stack_snapshots(const Dataset& data) {
  data.validate();
  Eigen::Index n = 0;
  for (const auto& tr : data.trajectories) n += tr.length();
  Eigen::MatrixXd S(n, data.state_dim());
  Eigen::Index row = 0;
  for (const auto& tr : data.trajectories) {
    S.middleRows(row, tr.length()) = tr.states;
    row += tr.length();
  }
  return S;
}

// ---------------------------------------------------------------------------
// SINDy
// ---------------------------------------------------------------------------

Eigen::MatrixXd numerical_time_derivative(const Eigen::MatrixXd& series, const Eigen::VectorXd& times) {
  const Eigen::Index N = series.rows();
  if (N < 3) throw Error(ErrorCode::invalid_argument, "numerical differentiation needs at least 3 samples");
  if (times.size() != N) throw Error(ErrorCode::dimension_mismatch, "times and series lengths differ");
  Eigen::MatrixXd out(N, series.cols());
  for (Eigen::Index j = 1; j + 1 < N; ++j) {
    const double h1 = times(j) - times(j - 1), h2 = times(j + 1) - times(j);
    out.row(j) = -h2 / (h1 * (h1 + h2)) * series.row(j - 1) + (h2 - h1) / (h1 * h2) * series.row(j) +
                 h1 / (h2 * (h1 + h2)) * series.row(j + 1);
  }
  {
    const double h1 = times(1) - times(0), h2 = times(2) - times(1);
    out.row(0) = -(2 * h1 + h2) / (h1 * (h1 + h2)) * series.row(0) + (h1 + h2) / (h1 * h2) * series.row(1) -
                 h1 / (h2 * (h1 + h2)) * series.row(2);
  }
  {
    const double h1 = times(N - 2) - times(N - 3), h2 = times(N - 1) - times(N - 2);
    out.row(N - 1) = h2 / (h1 * (h1 + h2)) * series.row(N - 3) - (h1 + h2) / (h1 * h2) * series.row(N - 2) +
                     (h1 + 2 * h2) / (h2 * (h1 + h2)) * series.row(N - 1);
  }
  return out;
}

Eigen::VectorXd SINDyModel::rhs(const Eigen::VectorXd& x) const {
  return coefficients.transpose() * polynomial_features(x, order);
}

namespace {

Eigen::MatrixXd library(const Eigen::MatrixXd& X, int order) {
  const int F = polynomial_feature_count(static_cast<int>(X.cols()), order);
  Eigen::MatrixXd theta(X.rows(), F);
  for (Eigen::Index i = 0; i < X.rows(); ++i) theta.row(i) = polynomial_features(X.row(i).transpose(), order);
  return theta;
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd& theta, const Eigen::VectorXd& y,
                              const std::vector<Eigen::Index>& active) {
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(theta.cols());
  if (active.empty()) return coef;
  Eigen::MatrixXd A(theta.rows(), static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) A.col(static_cast<Eigen::Index>(k)) = theta.col(active[k]);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < A.cols()) {
    throw Error(ErrorCode::ill_conditioned_library, "library has rank " + std::to_string(qr.rank()) + " for " +
                                                        std::to_string(A.cols()) + " active terms");
  }
  Eigen::VectorXd sol = qr.solve(y);
  for (std::size_t k = 0; k < active.size(); ++k) coef(active[k]) = sol(static_cast<Eigen::Index>(k));
  return coef;
}

}  // namespace

SINDyModel stlsq_fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& dZ, int order, double threshold,
                     int max_iterations) {
  if (X.rows() != dZ.rows()) throw Error(ErrorCode::dimension_mismatch, "X and dZ row counts differ");
  if (dZ.cols() > X.cols()) throw Error(ErrorCode::dimension_mismatch, "more derivative columns than inputs");
  if (threshold < 0.0) throw Error(ErrorCode::invalid_argument, "threshold must be non-negative");
  const Eigen::MatrixXd theta = library(X, order);
  if (theta.rows() <= theta.cols()) {
    throw Error(ErrorCode::invalid_argument, "need more samples (" + std::to_string(theta.rows()) +
                                                 ") than library terms (" + std::to_string(theta.cols()) + ")");
  }
  SINDyModel model;
  model.order = order;
  model.threshold = threshold;
  model.coefficients.resize(theta.cols(), dZ.cols());
  for (Eigen::Index j = 0; j < dZ.cols(); ++j) {
    std::vector<Eigen::Index> active(static_cast<std::size_t>(theta.cols()));
    for (Eigen::Index k = 0; k < theta.cols(); ++k) active[static_cast<std::size_t>(k)] = k;
    Eigen::VectorXd coef = least_squares(theta, dZ.col(j), active);
    for (int it = 0; it < max_iterations; ++it) {
      std::vector<Eigen::Index> next;
      for (Eigen::Index k : active)
        if (std::abs(coef(k)) >= threshold) next.push_back(k);
      if (next == active) break;
      active = std::move(next);
      coef = least_squares(theta, dZ.col(j), active);
    }
    for (Eigen::Index k = 0; k < coef.size(); ++k)
      if (std::abs(coef(k)) < threshold) coef(k) = 0.0;
    model.coefficients.col(j) = coef;
  }
  return model;
}

namespace {

Eigen::MatrixXd sindy_inputs(const Eigen::MatrixXd& Z, const Trajectory& traj) {
  Eigen::MatrixXd X(Z.rows(), Z.cols() + traj.param_dim() + traj.forcing_dim());
  X.leftCols(Z.cols()) = Z;
  if (traj.param_dim() > 0) X.middleCols(Z.cols(), traj.param_dim()).rowwise() = traj.params.transpose();
  if (traj.forcing_dim() > 0) X.rightCols(traj.forcing_dim()) = traj.forcing_samples;
  return X;
}

}  // namespace

Eigen::MatrixXd PodSindy::predict(const Trajectory& traj, double dt) const {
  if (traj.param_dim() != n_mu || traj.forcing_dim() != n_f) {
    throw Error(ErrorCode::dimension_mismatch, "trajectory parameters or forcing do not match the model");
  }
  if (dt <= 0.0) dt = traj.length() > 1 ? 0.25 * (traj.times(1) - traj.times(0)) : 1.0;
  const Eigen::Index d = pod.modes.cols();
  Eigen::VectorXd x(d + n_mu + n_f);
  if (n_mu > 0) x.segment(d, n_mu) = traj.params;
  Eigen::MatrixXd Z(traj.length(), d);
  Eigen::VectorXd z = pod.project(traj.states.row(0)).transpose();
  Z.row(0) = z.transpose();
  auto eval = [&](const Eigen::VectorXd& zz, double t) -> Eigen::VectorXd {
    x.head(d) = zz;
    if (n_f > 0) x.tail(n_f) = interpolate_forcing(traj, t);
    return sindy.rhs(x);
  };
  const double limit = 1e6 * std::max(1.0, z.cwiseAbs().maxCoeff());
  long step = 0;
  for (Eigen::Index j = 1; j < traj.length(); ++j) {
    double t = traj.times(j - 1);
    const double t_end = traj.times(j);
    while (t < t_end - 1e-12 * std::abs(t_end)) {
      const double h = std::min(dt, t_end - t);
      const Eigen::VectorXd k1 = eval(z, t);
      const Eigen::VectorXd k2 = eval(z + 0.5 * h * k1, t + 0.5 * h);
      const Eigen::VectorXd k3 = eval(z + 0.5 * h * k2, t + 0.5 * h);
      const Eigen::VectorXd k4 = eval(z + h * k3, t + h);
      z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t += h;
      ++step;
      if (!z.allFinite() || z.cwiseAbs().maxCoeff() > limit) {
        throw Error(ErrorCode::diverged_integration, "SINDy model diverged at step " + std::to_string(step));
      }
    }
    Z.row(j) = z.transpose();
  }
  return pod.lift(Z);
}

PodSindy pod_sindy_fit(const Dataset& train, int d, int order, double threshold) {
  PodSindy m;
  m.pod = pod_fit(stack_snapshots(train), d);
  m.n_mu = static_cast<int>(train.param_dim());
  m.n_f = static_cast<int>(train.forcing_dim());
  std::vector<Eigen::MatrixXd> xs, dzs;
  Eigen::Index rows = 0;
  for (const auto& tr : train.trajectories) {
    Eigen::MatrixXd Z = m.pod.project(tr.states);
    dzs.push_back(numerical_time_derivative(Z, tr.times));
    xs.push_back(sindy_inputs(Z, tr));
    rows += tr.length();
  }
  Eigen::MatrixXd X(rows, xs.front().cols()), dZ(rows, d);
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    X.middleRows(r, xs[i].rows()) = xs[i];
    dZ.middleRows(r, xs[i].rows()) = dzs[i];
    r += xs[i].rows();
  }
  m.sindy = stlsq_fit(X, dZ, order, threshold);
  return m;
}

TestMetrics pod_sindy_evaluate(const PodSindy& model, const Dataset& test) {
  if (test.trajectories.empty()) throw Error(ErrorCode::invalid_dataset, "test set is empty");
  std::vector<Eigen::VectorXd> eps;
  for (const auto& tr : test.trajectories) eps.push_back(error_metric(tr.states, model.predict(tr)));
  return aggregate_errors(std::move(eps));
}

GridSearchResult pod_sindy_grid_search(const Dataset& train, const Dataset& val, int d, const std::vector<int>& orders,
                                       const std::vector<double>& thresholds) {
  GridSearchResult res;
  res.best.val_eps_mu = std::numeric_limits<double>::infinity();
  bool found = false;
  for (int order : orders) {
    for (double thr : thresholds) {
      GridCell cell{order, thr, std::numeric_limits<double>::infinity()};
      PodSindy model;
      try {
        model = pod_sindy_fit(train, d, order, thr);
        cell.val_eps_mu = pod_sindy_evaluate(model, val).eps_mu;
        if (!std::isfinite(cell.val_eps_mu)) cell.val_eps_mu = std::numeric_limits<double>::infinity();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::diverged_integration && e.code() != ErrorCode::ill_conditioned_library &&
            e.code() != ErrorCode::invalid_argument) {
          throw;
        }
      }
      res.cells.push_back(cell);
      if (cell.val_eps_mu < res.best.val_eps_mu) {
        res.best = cell;
        res.model = model;
        found = true;
      }
    }
  }
  if (!found) throw Error(ErrorCode::diverged_integration, "every POD-SINDy grid cell was unstable on validation");
  return res;
}

// ---------------------------------------------------------------------------
// PNSDE likelihood
// ---------------------------------------------------------------------------

double pnsde_em_loglik(const LatentDynamics& dyn, const Eigen::MatrixXd& z_path, const Eigen::VectorXd& times) {
  if (z_path.rows() != times.size() || z_path.rows() < 2) {
    throw Error(ErrorCode::dimension_mismatch, "path needs one row per time and at least two rows");
  }
  if (z_path.cols() != dyn.latent_dim()) throw Error(ErrorCode::dimension_mismatch, "path has the wrong latent dim");
  const Eigen::VectorXd psi2 = dyn.dispersion().array().square().matrix();
  if ((psi2.array() <= 0.0).any()) throw Error(ErrorCode::degenerate_density, "dispersion has a zero entry");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (Eigen::Index j = 1; j < z_path.rows(); ++j) {
    const double h = times(j) - times(j - 1);
    if (!(h > 0.0)) throw Error(ErrorCode::invalid_argument, "times must increase");
    const Eigen::RowVectorXd prev = z_path.row(j - 1);
    const Eigen::RowVectorXd mean = prev + dyn.drift(prev, times(j - 1)) * h;
    for (Eigen::Index i = 0; i < z_path.cols(); ++i) {
      const double var = psi2(i) * h;
      const double r = z_path(j, i) - mean(i);
      total += -0.5 * (r * r / var + std::log(var) + log2pi);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// PNODE / PNSDE
// ---------------------------------------------------------------------------

namespace {

const std::string kPbEnc = "pb.enc";
const std::string kPbDec = "pb.dec";
const std::string kPbDrift = "pb.drift";
const std::string kPbDecLogvar = "pb.dec.logvar";
const std::string kPbDisp = "pb.disp.log_diag";

MLPConfig widths(int in, const std::vector<int>& hidden, int out, bool time) {
  MLPConfig c;
  c.layer_widths.push_back(in);
  c.layer_widths.insert(c.layer_widths.end(), hidden.begin(), hidden.end());
  c.layer_widths.push_back(out);
  c.input_has_time_encoding = time;
  return c;
}

// Forcing signal of a trajectory flattened row-major, scaled to RMS units.
Eigen::RowVectorXd forcing_signal(const Trajectory& tr) {
  Eigen::MatrixXd f = tr.forcing_samples.transpose();
  return Eigen::Map<const Eigen::RowVectorXd>(f.data(), f.size()) / std::sqrt(static_cast<double>(tr.length()));
}

}  // namespace

SolverBaselineModel::SolverBaselineModel(SolverBaselineConfig cfg, int D, int n_mu, std::optional<PODBasis> forcing_pod)
    : cfg_(std::move(cfg)), D_(D), n_mu_(n_mu), forcing_pod_(std::move(forcing_pod)) {
  if (cfg_.d < 1 || D < 1) throw Error(ErrorCode::invalid_argument, "dimensions must be positive");
  if (cfg_.substeps < 1) throw Error(ErrorCode::invalid_argument, "substeps must be positive");
  forcing_modes_ = forcing_pod_ ? static_cast<int>(forcing_pod_->modes.cols()) : 0;
  const int n_aug = augmented_mu_dim();
  enc_cfg_ = widths(D + n_aug, cfg_.encoder_hidden, 2 * cfg_.d, false);
  dec_cfg_ = widths(cfg_.d, cfg_.decoder_hidden, D, false);
  drift_cfg_ = widths(cfg_.d + n_aug, cfg_.drift_hidden, cfg_.d, true);
  register_mlp(params.layout, kPbEnc, enc_cfg_);
  register_mlp(params.layout, kPbDec, dec_cfg_);
  params.layout.add(kPbDecLogvar, 1, D);
  register_mlp(params.layout, kPbDrift, drift_cfg_);
  params.layout.add(kPbDisp, 1, cfg_.d);
  params.values = Eigen::VectorXd::Zero(params.layout.size());
}

Eigen::VectorXd SolverBaselineModel::augmented_mu(const Trajectory& traj) const {
  if (traj.param_dim() != n_mu_) throw Error(ErrorCode::dimension_mismatch, "trajectory mu has the wrong size");
  Eigen::VectorXd mu(augmented_mu_dim());
  mu.head(n_mu_) = traj.params;
  if (forcing_modes_ > 0) {
    const Eigen::RowVectorXd sig = forcing_signal(traj);
    if (sig.size() != forcing_pod_->modes.rows()) {
      throw Error(ErrorCode::dimension_mismatch, "forcing signal length differs from the training trajectories");
    }
    mu.tail(forcing_modes_) = forcing_pod_->project(sig).transpose();
  }
  return mu;
}

ad::Var SolverBaselineModel::drift(BlockSource& src, const ad::Var& z, double t, const Eigen::VectorXd& mu) const {
  ad::Tape& tape = src.tape();
  std::array<ad::Var, 2> parts{z, tape.constant(mu.transpose())};
  ad::Var x = mu.size() > 0 ? ad::hcat(parts) : z;
  const Eigen::VectorXd times = Eigen::VectorXd::Constant(1, t);
  return mlp_forward(src, kPbDrift, drift_cfg_, x, &times);
}

std::vector<double> SolverBaselineModel::step_sizes(const Trajectory& traj) const {
  std::vector<double> h;
  for (Eigen::Index j = 1; j < traj.length(); ++j) {
    h.push_back((traj.times(j) - traj.times(j - 1)) / cfg_.substeps);
  }
  return h;
}

ad::Var SolverBaselineModel::elbo(BlockSource& src, const Trajectory& traj, std::mt19937_64& rng,
                                  Eigen::MatrixXd* latent) const {
  ad::Tape& tape = src.tape();
  if (traj.state_dim() != D_) throw Error(ErrorCode::dimension_mismatch, "trajectory D does not match the model");
  const Eigen::VectorXd mu = augmented_mu(traj);
  const int d = cfg_.d;
  Eigen::RowVectorXd x0(D_ + mu.size());
  x0 << traj.states.row(0), mu.transpose();
  ad::Var enc = mlp_forward(src, kPbEnc, enc_cfg_, tape.constant(x0));
  ad::Var m0 = ad::cols(enc, 0, d);
  ad::Var lv0 = ad::cols(enc, d, d);
  std::normal_distribution<double> normal;
  const bool stochastic = cfg_.kind == SolverBaseline::pnsde;
  ad::Var z = m0;
  if (stochastic) {
    Eigen::MatrixXd e(1, d);
    for (int i = 0; i < d; ++i) e(0, i) = normal(rng);
    z = m0 + ad::exp(lv0 * 0.5) * tape.constant(e);
  }
  ad::Var disp = ad::exp(src.block(kPbDisp));
  std::vector<ad::Var> rows{z};
  const std::vector<double> h = step_sizes(traj);
  long step = 0;
  for (std::size_t j = 0; j < h.size(); ++j) {
    double t = traj.times(static_cast<Eigen::Index>(j)) - traj.times(0);
    for (int s = 0; s < cfg_.substeps; ++s, t += h[j]) {
      const double dt = h[j];
      if (stochastic) {
        Eigen::MatrixXd e(1, d);
        for (int i = 0; i < d; ++i) e(0, i) = normal(rng) * std::sqrt(dt);
        z = z + drift(src, z, t, mu) * dt + ad::mul(disp, tape.constant(e));
      } else if (cfg_.pnode_scheme == FixedStepScheme::euler) {
        z = z + drift(src, z, t, mu) * dt;
      } else {
        ad::Var k1 = drift(src, z, t, mu);
        ad::Var k2 = drift(src, z + k1 * (0.5 * dt), t + 0.5 * dt, mu);
        ad::Var k3 = drift(src, z + k2 * (0.5 * dt), t + 0.5 * dt, mu);
        ad::Var k4 = drift(src, z + k3 * dt, t + dt, mu);
        z = z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
      }
      ++step;
      if (!z.value().allFinite()) {
        throw Error(ErrorCode::diverged_integration, "baseline forward solve diverged at step " + std::to_string(step));
      }
    }
    rows.push_back(z);
  }
  ad::Var Z = ad::vcat(rows);
  if (latent) *latent = Z.value();
  ad::Var mean = mlp_forward(src, kPbDec, dec_cfg_, Z);
  ad::Var loglik = gaussian_loglik(tape.constant(traj.states), mean, src.block(kPbDecLogvar));
  return loglik - kl_gaussian_diag(m0, lv0, 0.0, 0.0);
}

Eigen::MatrixXd SolverBaselineModel::predict(const Trajectory& traj, std::mt19937_64& rng) const {
  ad::Tape tape(false);
  FlatBlocks src(tape, params.layout, params.values);
  Eigen::MatrixXd Z;
  elbo(src, traj, rng, &Z);
  return mlp_forward(src, kPbDec, dec_cfg_, tape.constant(Z)).value();
}

SolverBaselineModel pnode_pnsde_train(const SolverBaselineConfig& cfg, const Dataset& train, SolverBaselineLog* log) {
  train.validate();
  std::optional<PODBasis> forcing_pod;
  if (train.forcing_dim() > 0 && cfg.forcing_modes > 0) {
    Eigen::MatrixXd signals(static_cast<Eigen::Index>(train.trajectories.size()),
                            forcing_signal(train.trajectories.front()).size());
    for (std::size_t i = 0; i < train.trajectories.size(); ++i) {
      const Eigen::RowVectorXd s = forcing_signal(train.trajectories[i]);
      if (s.size() != signals.cols()) {
        throw Error(ErrorCode::invalid_dataset, "forcing summaries need trajectories of equal length");
      }
      signals.row(static_cast<Eigen::Index>(i)) = s;
    }
    // Identical forcing across trajectories leaves nothing to summarize.
    const Eigen::MatrixXd centered = signals.rowwise() - signals.colwise().mean();
    const Eigen::VectorXd sv = Eigen::BDCSVD<Eigen::MatrixXd>(centered).singularValues();
    const double tol = sv.size() > 0 ? 1e-10 * std::max(sv(0), 1e-300) : 0.0;
    int rank = 0;
    while (rank < sv.size() && sv(rank) > tol) ++rank;
    const int k = std::min(cfg.forcing_modes, rank);
    if (k > 0) forcing_pod = pod_fit(signals, k);
  }
  SolverBaselineModel model(cfg, static_cast<int>(train.state_dim()), static_cast<int>(train.param_dim()),
                            forcing_pod);
  std::mt19937_64 rng(cfg.seed);
  model.init(rng);
  AdamState adam = AdamState::zeros(model.params.values.size());
  const long n_traj = static_cast<long>(train.trajectories.size());
  const long steps_per_epoch = (n_traj + cfg.batch_size - 1) / cfg.batch_size;
  const long total = steps_per_epoch * cfg.epochs;
  std::uniform_int_distribution<long> pick(0, n_traj - 1);
  for (long step = 0; step < total; ++step) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.params.values.size());
    double elbo_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Trajectory& tr = train.trajectories[static_cast<std::size_t>(pick(rng))];
      ad::Tape tape;
      FlatBlocks src(tape, model.params.layout, model.params.values);
      ad::Var e = model.elbo(src, tr, rng);
      if (!std::isfinite(e.scalar())) {
        throw Error(ErrorCode::non_finite_elbo, "baseline ELBO is not finite at step " + std::to_string(step));
      }
      tape.backward(e);
      grad += tape.grad(src.flat()).col(0);
      elbo_sum += e.scalar();
    }
    grad /= cfg.batch_size;
    if (!grad.allFinite()) {
      throw Error(ErrorCode::non_finite_gradient, "baseline gradient is not finite at step " + std::to_string(step));
    }
    adam_step(adam, model.params.values, -grad, lr_schedule(step, cfg.lr0, cfg.schedule));
    if (log) log->elbo.push_back(elbo_sum / cfg.batch_size);
  }
  return model;
}

TestMetrics solver_baseline_evaluate(const SolverBaselineModel& model, const Dataset& test, std::uint64_t seed) {
  if (test.trajectories.empty()) throw Error(ErrorCode::invalid_dataset, "test set is empty");
  const int paths = model.config().kind == SolverBaseline::pnsde ? 16 : 1;
  std::vector<Eigen::VectorXd> eps;
  for (std::size_t i = 0; i < test.trajectories.size(); ++i) {
    const Trajectory& tr = test.trajectories[i];
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(tr.length(), tr.state_dim());
    for (int k = 0; k < paths; ++k) {
      std::mt19937_64 rng = member_rng(seed, i, static_cast<std::uint64_t>(k));
      mean += model.predict(tr, rng);
    }
    eps.push_back(error_metric(tr.states, mean / paths));
  }
  return aggregate_errors(std::move(eps));
}

}  // namespace sdrom
