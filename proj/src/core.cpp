#include "sdrom/core.hpp"

#include "sdrom/container.hpp"
#include "sdrom/error.hpp"

#include <algorithm>
#include <cmath>

namespace sdrom {

void Trajectory::validate() const {
  const Eigen::Index n = times.size();
  if (n == 0) throw Error(ErrorCode::invalid_dataset, "trajectory has no samples");
  for (Eigen::Index j = 1; j < n; ++j) {
    if (!(times(j) > times(j - 1))) throw Error(ErrorCode::invalid_dataset, "times are not strictly increasing");
  }
  if (states.rows() != n) {
    throw Error(ErrorCode::dimension_mismatch, "states have " + std::to_string(states.rows()) + " rows for " +
                                                   std::to_string(n) + " times");
  }
  if (forcing_samples.rows() != n) {
    throw Error(ErrorCode::dimension_mismatch, "forcing has " + std::to_string(forcing_samples.rows()) +
                                                   " rows for " + std::to_string(n) + " times");
  }
}

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::validation: return "validation";
    case SplitTag::test: return "test";
  }
  return "train";
}

SplitTag split_from_string(const std::string& s) {
  if (s == "train") return SplitTag::train;
  if (s == "validation") return SplitTag::validation;
  if (s == "test") return SplitTag::test;
  throw Error(ErrorCode::malformed_manifest, "unknown split tag '" + s + "'");
}

void Dataset::validate() const {
  if (trajectories.empty()) throw Error(ErrorCode::invalid_dataset, "dataset has no trajectories");
  const auto& first = trajectories.front();
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& tr = trajectories[i];
    tr.validate();
    if (tr.state_dim() != first.state_dim() || tr.forcing_dim() != first.forcing_dim() ||
        tr.param_dim() != first.param_dim()) {
      throw Error(ErrorCode::dimension_mismatch, "trajectory " + std::to_string(i) + " has inconsistent dimensions");
    }
  }
}

Eigen::VectorXd interpolate_forcing(const Trajectory& traj, double t) {
  const Eigen::Index n = traj.times.size();
  if (n == 0 || traj.forcing_samples.rows() != n) {
    throw Error(ErrorCode::invalid_argument, "interpolate_forcing needs one forcing sample per time");
  }
  if (t <= traj.times(0)) return traj.forcing_samples.row(0).transpose();
  if (t >= traj.times(n - 1)) return traj.forcing_samples.row(n - 1).transpose();
  const double* begin = traj.times.data();
  const Eigen::Index hi = std::upper_bound(begin, begin + n, t) - begin;
  const Eigen::Index lo = hi - 1;
  const double w = (t - traj.times(lo)) / (traj.times(hi) - traj.times(lo));
  return ((1.0 - w) * traj.forcing_samples.row(lo) + w * traj.forcing_samples.row(hi)).transpose();
}

std::size_t count_windows(Eigen::Index length, int window_size) {
  if (window_size < 2 || length < window_size) return 0;
  const Eigen::Index stride = window_size - 1;
  return static_cast<std::size_t>((length - 2) / stride + 1);
}

std::vector<Window> partition_trajectory(const Trajectory& traj, int window_size, int trajectory_index) {
  const Eigen::Index n = traj.length();
  if (window_size < 2 || window_size > n) {
    throw Error(ErrorCode::invalid_window_size, "window size " + std::to_string(window_size) +
                                                    " for a trajectory of length " + std::to_string(n));
  }
  std::vector<Window> out;
  const int stride = window_size - 1;
  for (int start = 0; start < n - 1; start += stride) {
    Window w;
    w.trajectory_index = trajectory_index;
    w.window_index = static_cast<int>(out.size());
    const int stop = static_cast<int>(std::min<Eigen::Index>(start + window_size, n));
    for (int j = start; j < stop; ++j) w.sample_indices.push_back(j);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Window> partition_dataset(const Dataset& data, int window_size) {
  std::vector<Window> out;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    auto ws = partition_trajectory(data.trajectories[i], window_size, static_cast<int>(i));
    out.insert(out.end(), ws.begin(), ws.end());
  }
  return out;
}

Eigen::VectorXd error_metric(const Eigen::MatrixXd& u_true, const Eigen::MatrixXd& u_pred_mean) {
  if (u_true.rows() != u_pred_mean.rows() || u_true.cols() != u_pred_mean.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "error_metric: shapes differ");
  }
  Eigen::VectorXd eps(u_true.rows());
  for (Eigen::Index j = 0; j < u_true.rows(); ++j) {
    const double denom = u_true.row(j).norm();
    if (denom == 0.0) throw Error(ErrorCode::undefined_metric, "true state has zero norm at row " + std::to_string(j));
    eps(j) = (u_true.row(j) - u_pred_mean.row(j)).norm() / denom;
  }
  return eps;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  Container c;
  nlohmann::json lengths = nlohmann::json::array();
  for (const auto& tr : data.trajectories) lengths.push_back(tr.length());
  c.meta = {{"kind", "dataset"},
            {"version", 1},
            {"D", data.state_dim()},
            {"N_f", data.forcing_dim()},
            {"N_mu", data.param_dim()},
            {"split_tag", to_string(data.split_tag)},
            {"trajectory_lengths", lengths}};
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const auto& tr = data.trajectories[i];
    const std::string p = "traj" + std::to_string(i) + "/";
    c.arrays.push_back({p + "times", tr.times});
    c.arrays.push_back({p + "states", tr.states});
    c.arrays.push_back({p + "params", tr.params.transpose()});
    c.arrays.push_back({p + "forcing", tr.forcing_samples});
  }
  write_container(path, c);
}

Dataset read_dataset(const std::filesystem::path& path) {
  Container c = read_container(path);
  Dataset data;
  Eigen::Index D = 0, nf = 0, nmu = 0;
  std::vector<Eigen::Index> lengths;
  try {
    if (c.meta.at("kind").get<std::string>() != "dataset") {
      throw Error(ErrorCode::malformed_manifest, path.string() + " is not a dataset container");
    }
    D = c.meta.at("D").get<Eigen::Index>();
    nf = c.meta.at("N_f").get<Eigen::Index>();
    nmu = c.meta.at("N_mu").get<Eigen::Index>();
    data.split_tag = split_from_string(c.meta.at("split_tag").get<std::string>());
    lengths = c.meta.at("trajectory_lengths").get<std::vector<Eigen::Index>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_manifest, path.string() + ": " + e.what());
  }
  auto expect = [&](const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols) {
      throw Error(ErrorCode::dimension_mismatch, what + " is " + std::to_string(m.rows()) + "x" +
                                                     std::to_string(m.cols()) + ", manifest implies " +
                                                     std::to_string(rows) + "x" + std::to_string(cols));
    }
  };
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const std::string p = "traj" + std::to_string(i) + "/";
    const Eigen::Index n = lengths[i];
    Trajectory tr;
    const auto& times = c.array(p + "times");
    const auto& states = c.array(p + "states");
    const auto& params = c.array(p + "params");
    const auto& forcing = c.array(p + "forcing");
    expect(times, n, 1, p + "times");
    expect(states, n, D, p + "states");
    expect(params, 1, nmu, p + "params");
    expect(forcing, n, nf, p + "forcing");
    tr.times = times.col(0);
    tr.states = states;
    tr.params = params.row(0).transpose();
    tr.forcing_samples = forcing;
    data.trajectories.push_back(std::move(tr));
  }
  data.validate();
  return data;
}

std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t domain, std::uint64_t stream, std::uint64_t index) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(domain), hi(domain), lo(stream), hi(stream), lo(index), hi(index)};
  return std::mt19937_64(seq);
}

}  // namespace sdrom
