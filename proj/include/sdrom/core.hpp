#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace sdrom {

// One observed trajectory: states u(t_j) and forcing samples f(t_j) at
// strictly increasing times, plus the trajectory's parameter vector mu.
struct Trajectory {
  Eigen::VectorXd times;            // N
  Eigen::MatrixXd states;           // N x D
  Eigen::VectorXd params;           // N_mu
  Eigen::MatrixXd forcing_samples;  // N x N_f

  Eigen::Index length() const { return times.size(); }
  Eigen::Index state_dim() const { return states.cols(); }
  Eigen::Index forcing_dim() const { return forcing_samples.cols(); }
  Eigen::Index param_dim() const { return params.size(); }

  // Throws invalid_dataset / dimension_mismatch when the invariants fail.
  void validate() const;
};

enum class SplitTag { train, validation, test };

std::string to_string(SplitTag tag);
SplitTag split_from_string(const std::string& s);

struct Dataset {
  std::vector<Trajectory> trajectories;
  SplitTag split_tag = SplitTag::train;

  Eigen::Index state_dim() const { return trajectories.front().state_dim(); }
  Eigen::Index forcing_dim() const { return trajectories.front().forcing_dim(); }
  Eigen::Index param_dim() const { return trajectories.front().param_dim(); }

  // Non-empty and dimension-consistent across trajectories.
  void validate() const;
};

// M contiguous sample indices of one trajectory.
struct Window {
  int trajectory_index = 0;
  int window_index = 0;
  std::vector<int> sample_indices;

  int first() const { return sample_indices.front(); }
  int last() const { return sample_indices.back(); }
  int size() const { return static_cast<int>(sample_indices.size()); }
};

// Piecewise-linear interpolation of the forcing samples, clamped to the end
// values outside [times.front(), times.back()].
Eigen::VectorXd interpolate_forcing(const Trajectory& traj, double t);

// Windows of M samples with stride M-1: consecutive windows share their
// boundary sample, and the last window is shorter when samples run out.
std::vector<Window> partition_trajectory(const Trajectory& traj, int window_size, int trajectory_index = 0);
std::vector<Window> partition_dataset(const Dataset& data, int window_size);
std::size_t count_windows(Eigen::Index length, int window_size);

// Relative error ||u - u_hat|| / ||u|| per row. Throws undefined_metric if a
// true row has zero norm.
Eigen::VectorXd error_metric(const Eigen::MatrixXd& u_true, const Eigen::MatrixXd& u_pred_mean);

// Independent generator for (domain, stream, index) under one seed, so every
// random draw can be reproduced without replaying earlier ones.
std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t domain, std::uint64_t stream, std::uint64_t index);

void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace sdrom
