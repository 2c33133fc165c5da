#pragma once

#include "sdrom/core.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sdrom {

enum class GeneratorKind { ou, oscillator_embedding, burgers };

std::string to_string(GeneratorKind kind);
GeneratorKind generator_kind_from_string(const std::string& s);

struct SplitCounts {
  int train = 20;
  int validation = 5;
  int test = 5;
};

struct OUParams {
  int d = 2;
  double rate = 1.0;   // a in dz = -a z dt + c dbeta
  double noise = 0.5;  // c
  bool stationary_start = true;
  double z0 = 1.0;  // every component's start when not stationary
};

struct OscillatorParams {
  double omega = 1.0;
  double radius_min = 1.0;
  double radius_max = 1.0;
};

struct BurgersParams {
  double nu_min = 0.05;
  double nu_max = 0.1;
  double omega_min = 0.8;
  double omega_max = 1.0;
  double alpha1 = 5.0;
  double alpha2 = 0.001;
  // When false the left boundary is held at zero instead of the forcing.
  bool forced = true;
  // Explicit solver step; <= 0 picks half the stability limit.
  double solver_dt = 0.0;
};

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::ou;
  SplitCounts counts;
  double noise_std = 0.0;  // observation noise
  std::uint64_t seed = 0;
  int D = 16;
  int n_times = 101;  // samples per trajectory
  double t_end = 10.0;
  OUParams ou;
  OscillatorParams oscillator;
  BurgersParams burgers;

  // Throws schema_violation on out-of-range settings.
  void validate() const;
};

// Latent ground truth (one matrix per trajectory) when the generator has one.
using LatentTruth = std::vector<Eigen::MatrixXd>;

// d-dimensional OU paths from the exact AR(1) transition, observed through a
// fixed random linear map to R^D plus observation noise.
Dataset gen_ou(const GeneratorSpec& spec, SplitTag split, LatentTruth* latent = nullptr);

// Rotation z' = omega (-z2, z1) embedded by u = tanh(W z), W: D x 2.
Dataset gen_oscillator_embedding(const GeneratorSpec& spec, SplitTag split, LatentTruth* latent = nullptr);

// Viscous Burgers on [0, 1] with v(0, t) = alpha1 cos(2 pi omega t), v(1, t) = 0,
// v(x, 0) = alpha1 exp(-x^2 / alpha2); centered differences, forward Euler.
// mu = (nu), forcing = f(t) sampled at the snapshot times.
Dataset gen_burgers(const GeneratorSpec& spec, SplitTag split);

// Stable explicit step for the Burgers scheme on the spec's grid and viscosity;
// throws unstable_solver when no step satisfies the cell-Reynolds bound.
double burgers_stable_dt(int D, double nu, double vmax);

// Single Burgers trajectory (used by the generator and refinement checks).
Trajectory burgers_trajectory(int D, double nu, double omega, const BurgersParams& p, int n_times, double t_end);

Dataset generate_split(const GeneratorSpec& spec, SplitTag split);
std::array<Dataset, 3> generate_all(const GeneratorSpec& spec);

}  // namespace sdrom
