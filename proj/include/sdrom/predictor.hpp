#pragma once

#include "sdrom/core.hpp"
#include "sdrom/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace sdrom {

// Drift and dispersion of a trained model evaluated at the posterior mean of
// theta. forcing may be null when the model has no forcing inputs.
class LatentDynamics {
 public:
  LatentDynamics(const LatentSDEModel& model, const Eigen::VectorXd& values, Eigen::VectorXd mu,
                 const Trajectory* forcing);

  // Rows of z are independent states at time t.
  Eigen::MatrixXd drift(const Eigen::MatrixXd& z, double t) const;
  const Eigen::VectorXd& dispersion() const { return dispersion_; }
  int latent_dim() const { return model_.config().d; }

 private:
  const LatentSDEModel& model_;
  ParamVector drift_params_;
  Eigen::VectorXd mu_;
  const Trajectory* forcing_;
  Eigen::VectorXd dispersion_;
};

struct LatentPath {
  Eigen::VectorXd times;  // steps + 1
  Eigen::MatrixXd states;  // (steps + 1) x d
};

// z(t + h) = z + psi(z, t) h + Psi dbeta, dbeta ~ N(0, h I), with steps of dt
// and a shortened last step so the path ends exactly at T.
LatentPath euler_maruyama(const LatentDynamics& dyn, const Eigen::VectorXd& z0, double T, double dt,
                          std::mt19937_64& rng);

// Advances every row of z from t0 to t1 with steps of at most dt. Row k draws
// its Brownian increments from rngs[k].
void euler_maruyama_advance(const LatentDynamics& dyn, Eigen::MatrixXd& z, double t0, double t1, double dt,
                            std::vector<std::mt19937_64>& rngs);

struct PredictionEnsemble {
  Eigen::VectorXd times;                   // N
  std::vector<Eigen::MatrixXd> latent_paths;  // n_samples of N x d
  Eigen::MatrixXd qoi_mean;                // N x D
  Eigen::MatrixXd qoi_std;                 // N x D (zeros when n_samples < 2)
  bool std_defined = false;
  Eigen::VectorXd eps;                     // N, empty unless truth was given
};

struct PredictOptions {
  int n_samples = 64;
  // Integration step; <= 0 selects a quarter of the first sampling interval.
  double dt = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr std::uint64_t kPredictionDomain = 3;

// Generator for ensemble member `member` of prediction stream `stream`.
std::mt19937_64 member_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t member);

PredictionEnsemble predict_ensemble(const LatentSDEModel& model, const Eigen::VectorXd& values,
                                    const Eigen::VectorXd& u0, const Eigen::VectorXd& mu, const Trajectory* forcing,
                                    const Eigen::VectorXd& times, const PredictOptions& opts,
                                    std::uint64_t stream = 0);

// Ensemble for a trajectory: starts from its first snapshot, uses its mu and
// forcing, and fills eps against its states.
PredictionEnsemble predict_trajectory(const LatentSDEModel& model, const Eigen::VectorXd& values,
                                      const Trajectory& traj, const PredictOptions& opts, std::uint64_t stream = 0);

struct TestMetrics {
  double eps_mu = 0.0;     // mean of eps over all trajectories and times
  double eps_sigma = 0.0;  // std over trajectories of per-trajectory mean eps
  std::vector<Eigen::VectorXd> eps;  // per trajectory eps(t)
};

// Aggregates per-trajectory error curves.
TestMetrics aggregate_errors(std::vector<Eigen::VectorXd> eps);

// max_length > 0 truncates every trajectory to its first max_length samples.
TestMetrics evaluate_testset(const LatentSDEModel& model, const Eigen::VectorXd& values, const Dataset& test,
                             const PredictOptions& opts, int max_length = 0);

// Container with arrays times, qoi_mean, qoi_std and (if present) eps.
void write_prediction(const std::filesystem::path& path, const PredictionEnsemble& ens);

}  // namespace sdrom
