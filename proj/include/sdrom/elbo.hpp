#pragma once

#include "sdrom/core.hpp"
#include "sdrom/model.hpp"

#include <Eigen/Dense>

#include <random>

namespace sdrom {

struct SamplingConfig {
  int R = 1;   // latent samples gamma per window
  int L = 16;  // uniform time samples for the residual integral
};

// All randomness of one window estimate: gamma (R x d), tau (L, inside the
// window span) and xi (one draw over the variational blocks, possibly empty).
struct WindowDraws {
  Eigen::MatrixXd gamma;
  Eigen::VectorXd tau;
  Eigen::VectorXd xi;
};

WindowDraws draw_window(const LatentSDEModel& model, const Trajectory& traj, const Window& w,
                        const SamplingConfig& sampling, std::mt19937_64& rng);

// B_ii = (psi2_i - ds_i) / (2 s_i) for diagonal S, dS/dt and Psi Psi^T.
Eigen::VectorXd b_matrix_diag(const Eigen::VectorXd& s, const Eigen::VectorXd& ds, const Eigen::VectorXd& psi2);

// r = B (m - z) + dm - psi(z, t; mu, f) row-wise. at must carry derivatives.
// z, times and f have one row per evaluation point.
ad::Var drift_residual(BlockSource& src, const LatentSDEModel& model, const PosteriorAt& at, const ad::Var& z,
                       const Eigen::VectorXd& times, const Eigen::VectorXd& mu, const Eigen::MatrixXd& f);

// Single-point residual from explicit posterior moments.
Eigen::VectorXd drift_residual(const LatentSDEModel& model, const Eigen::VectorXd& values, const Eigen::VectorXd& m,
                               const Eigen::VectorXd& s, const Eigen::VectorXd& dm, const Eigen::VectorXd& ds,
                               const Eigen::VectorXd& z, double t, const Eigen::VectorXd& mu,
                               const Eigen::VectorXd& f_t);

// sum_i C_ii r_i^2.
double residual_penalty(const Eigen::VectorXd& r, const Eigen::VectorXd& C);

struct ElboTerms {
  double loglik = 0.0;    // (1/R) sum_r sum_j log p_dec(u_j | z_jr)
  double residual = 0.0;  // (t_M - t_1)/(2 L R) sum_r sum_l ||r||_C^2
  double kl = 0.0;        // kl_weight * KL(q || p)
  double elbo = 0.0;      // loglik - residual - kl
};

// Window ELBO on a tape. kl_weight is the window's share of the single KL
// term (1 / total number of windows). Throws non_finite_elbo naming the
// offending term.
ad::Var elbo_window(ModelBlocks& src, const LatentSDEModel& model, const Trajectory& traj, const Window& w,
                    const WindowDraws& draws, double kl_weight, ElboTerms* terms = nullptr);

ElboTerms elbo_window_estimate(const LatentSDEModel& model, const Eigen::VectorXd& values, const Trajectory& traj,
                               const Window& w, const WindowDraws& draws, double kl_weight);

struct WindowGradient {
  ElboTerms terms;
  Eigen::VectorXd grad;  // d ELBO / d params (ascent direction)
};

WindowGradient elbo_window_gradient(const LatentSDEModel& model, const Eigen::VectorXd& values,
                                    const Trajectory& traj, const Window& w, const WindowDraws& draws,
                                    double kl_weight);

// Samples one window uniformly from `windows`, draws its randomness and
// returns the gradient of its estimate.
struct SampledGradient {
  std::size_t window = 0;
  WindowGradient gradient;
};

SampledGradient elbo_gradient_estimate(const LatentSDEModel& model, const Eigen::VectorXd& values,
                                       const Dataset& data, const std::vector<Window>& windows,
                                       const SamplingConfig& sampling, std::mt19937_64& rng);

}  // namespace sdrom
