#pragma once

#include "sdrom/core.hpp"
#include "sdrom/encdec.hpp"
#include "sdrom/model.hpp"
#include "sdrom/netcore.hpp"
#include "sdrom/predictor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace sdrom {

// ---------------------------------------------------------------------------
// POD
// ---------------------------------------------------------------------------

struct PODBasis {
  Eigen::MatrixXd modes;            // D x d, orthonormal columns
  Eigen::VectorXd singular_values;  // all singular values of the centered snapshots
  Eigen::VectorXd mean_snapshot;    // D

  Eigen::MatrixXd project(const Eigen::MatrixXd& snapshots) const;  // N x D -> N x d
  Eigen::MatrixXd lift(const Eigen::MatrixXd& coeffs) const;         // N x d -> N x D
  // Fraction of the centered snapshot energy captured by the first k modes.
  double energy_fraction(int k) const;
  Projection as_projection() const { return {modes, mean_snapshot.transpose()}; }
};

// Mean-centered truncated SVD of an N x D snapshot matrix.
PODBasis pod_fit(const Eigen::MatrixXd& snapshots, int d);

// All states of a dataset stacked row-wise.
Eigen::MatrixXd stack_snapshots(const Dataset& data);

// ---------------------------------------------------------------------------
// SINDy
// ---------------------------------------------------------------------------

// Second-order accurate derivative on a possibly non-uniform grid: centered
// three-point formula inside, one-sided three-point formulas at the ends.
Eigen::MatrixXd numerical_time_derivative(const Eigen::MatrixXd& series, const Eigen::VectorXd& times);

struct SINDyModel {
  int order = 1;
  Eigen::MatrixXd coefficients;  // n_features x d
  double threshold = 0.0;

  // dz/dt for one library input x (features are polynomial in x; the first
  // coefficients.cols() entries of x are the state).
  Eigen::VectorXd rhs(const Eigen::VectorXd& x) const;
};

// Sequentially thresholded least squares on a polynomial library of Z.
// X may carry extra inputs beyond the state (parameters, forcing); dZ has
// one column per predicted state component.
SINDyModel stlsq_fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& dZ, int order, double threshold,
                     int max_iterations = 20);

// Linear POD encoder, SINDy latent dynamics over [z, mu, f(t)], POD decoder.
struct PodSindy {
  PODBasis pod;
  SINDyModel sindy;
  int n_mu = 0;
  int n_f = 0;

  // RK4 prediction from the trajectory's first snapshot on its time grid,
  // with steps of at most dt (<= 0: a quarter of the sampling interval).
  Eigen::MatrixXd predict(const Trajectory& traj, double dt = 0.0) const;
};

PodSindy pod_sindy_fit(const Dataset& train, int d, int order, double threshold);

struct GridCell {
  int order = 0;
  double threshold = 0.0;
  double val_eps_mu = 0.0;  // +inf when the model diverged on validation
};

struct GridSearchResult {
  std::vector<GridCell> cells;
  GridCell best;
  PodSindy model;
};

inline const std::vector<int> kSindyOrders{1, 2, 3};
inline const std::vector<double> kSindyThresholds{0.001, 0.003, 0.01, 0.03, 0.1};

// Test-set errors of a POD-SINDy model; a diverged trajectory throws.
TestMetrics pod_sindy_evaluate(const PodSindy& model, const Dataset& test);

GridSearchResult pod_sindy_grid_search(const Dataset& train, const Dataset& val, int d,
                                       const std::vector<int>& orders = kSindyOrders,
                                       const std::vector<double>& thresholds = kSindyThresholds);

// ---------------------------------------------------------------------------
// PNODE / PNSDE
// ---------------------------------------------------------------------------

// Euler-Maruyama transition log-density of a latent path under the model's
// drift and diagonal dispersion: sum_j log N(z_j; z_{j-1} + psi dt, Psi^2 dt).
double pnsde_em_loglik(const LatentDynamics& dyn, const Eigen::MatrixXd& z_path, const Eigen::VectorXd& times);

enum class SolverBaseline { pnode, pnsde };
enum class FixedStepScheme { rk4, euler };

struct SolverBaselineConfig {
  SolverBaseline kind = SolverBaseline::pnode;
  // Defaults to RK4 for PNODE; PNSDE always steps with Euler-Maruyama.
  FixedStepScheme pnode_scheme = FixedStepScheme::rk4;
  int d = 2;
  std::vector<int> encoder_hidden{64};
  std::vector<int> decoder_hidden{64};
  std::vector<int> drift_hidden{64, 64};
  double init_decoder_logvar = -4.0;
  double init_dispersion = 0.1;
  // Forcing is summarized by this many POD coefficients appended to mu.
  int forcing_modes = 6;
  int substeps = 1;  // solver steps per sampling interval
  int epochs = 50;
  int batch_size = 1;  // trajectories per step
  double lr0 = 1e-3;
  LrSchedule schedule;
  std::uint64_t seed = 0;
};

// Encoder (u0, mu_aug) -> N(z0; m, s), MLP drift over (z, mu_aug, time),
// decoder z -> N(u; m_u, s_u) with constant variance, diagonal dispersion.
class SolverBaselineModel {
 public:
  SolverBaselineModel() = default;
  SolverBaselineModel(SolverBaselineConfig cfg, int D, int n_mu, std::optional<PODBasis> forcing_pod);

  const SolverBaselineConfig& config() const { return cfg_; }
  int state_dim() const { return D_; }
  int augmented_mu_dim() const { return n_mu_ + forcing_modes_; }
  Eigen::VectorXd augmented_mu(const Trajectory& traj) const;

  template <class Rng>
  void init(Rng& rng);

  // Returns the trajectory ELBO on the tape: decoder log-likelihood summed over
  // all samples minus KL(p_enc(z0) || N(0, I)). For PNSDE the initial state and
  // Brownian increments are drawn from rng; PNODE uses the encoder mean.
  ad::Var elbo(BlockSource& src, const Trajectory& traj, std::mt19937_64& rng,
               Eigen::MatrixXd* latent = nullptr) const;

  // Decoded mean trajectory (single path).
  Eigen::MatrixXd predict(const Trajectory& traj, std::mt19937_64& rng) const;

  ParamVector params;

 private:
  ad::Var drift(BlockSource& src, const ad::Var& z, double t, const Eigen::VectorXd& mu) const;
  std::vector<double> step_sizes(const Trajectory& traj) const;

  SolverBaselineConfig cfg_;
  int D_ = 0;
  int n_mu_ = 0;
  int forcing_modes_ = 0;
  std::optional<PODBasis> forcing_pod_;
  MLPConfig enc_cfg_, dec_cfg_, drift_cfg_;
};

struct SolverBaselineLog {
  std::vector<double> elbo;  // per step
};

SolverBaselineModel pnode_pnsde_train(const SolverBaselineConfig& cfg, const Dataset& train,
                                      SolverBaselineLog* log = nullptr);

TestMetrics solver_baseline_evaluate(const SolverBaselineModel& model, const Dataset& test, std::uint64_t seed);

// ---------------------------------------------------------------------------

template <class Rng>
void SolverBaselineModel::init(Rng& rng) {
  params.values = Eigen::VectorXd::Zero(params.layout.size());
  init_mlp(params, "pb.enc", enc_cfg_, rng);
  init_mlp(params, "pb.dec", dec_cfg_, rng);
  init_mlp(params, "pb.drift", drift_cfg_, rng, 0.1);
  params.block("pb.dec.logvar").setConstant(cfg_.init_decoder_logvar);
  params.block("pb.disp.log_diag").setConstant(std::log(cfg_.init_dispersion));
}

}  // namespace sdrom
