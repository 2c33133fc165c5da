#pragma once

#include "sdrom/core.hpp"
#include "sdrom/elbo.hpp"
#include "sdrom/model.hpp"
#include "sdrom/netcore.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace sdrom {

struct ValidationConfig {
  int every_epochs = 1;  // 0 disables periodic validation
  int n_samples = 16;
  int max_length = 0;  // horizon cap in samples; 0 uses the full trajectory
  double dt = 0.0;     // integration step; <= 0 uses a quarter sampling interval
};

struct TrainConfig {
  ModelConfig model;
  ThetaTreatment treatment;
  SamplingConfig sampling;
  int M = 16;
  int epochs = 50;
  int batch_size = 64;  // windows per step
  long max_steps = 0;   // overrides epochs when positive
  double lr0 = 1e-3;
  LrSchedule schedule;
  std::uint64_t seed = 0;
  ValidationConfig validation;
  // Wall-clock timings make logs differ between runs, so they are opt-in.
  bool record_timing = false;

  // Throws schema_violation when a setting is out of range.
  void validate() const;
};

struct TrainLogRow {
  long step = 0;
  double elbo_estimate = 0.0;  // batch mean of window ELBO estimates
  double lr = 0.0;
  double wall_ms = 0.0;
  double val_eps_mu = std::numeric_limits<double>::quiet_NaN();  // NaN when not validated at this step
};

struct TrainState {
  LatentSDEModel model;
  AdamState adam;
  long step = 0;  // completed steps
  Eigen::VectorXd best_values;
  double best_val_eps_mu = std::numeric_limits<double>::infinity();
  long best_step = -1;
};

// Builds the model for a training set: dimensions from the data, optional
// POD projection, initialization from the seed.
LatentSDEModel build_model(const TrainConfig& cfg, const Dataset& train);

long steps_per_epoch(const TrainConfig& cfg, std::size_t total_windows);
long total_steps(const TrainConfig& cfg, std::size_t total_windows);

struct BatchGradient {
  std::vector<std::size_t> windows;  // indices into the window list
  double elbo_estimate = 0.0;
  Eigen::VectorXd grad;  // mean of the window gradients (ascent direction)
};

// Generator for the random draws of batch member `member` at `step`.
std::mt19937_64 window_draw_rng(std::uint64_t seed, long step, int member);

// Gradient of one training step: batch_size windows drawn uniformly with
// replacement, each with its own derived random stream.
BatchGradient batch_gradient(const LatentSDEModel& model, const Eigen::VectorXd& values, const Dataset& train,
                             const std::vector<Window>& windows, const TrainConfig& cfg, long step);

using LogCallback = std::function<void(const TrainLogRow&, const TrainState&)>;

// Runs (or resumes) training until total_steps. val may be null.
void train(const TrainConfig& cfg, const Dataset& train_set, const Dataset* val_set, TrainState& state,
           std::vector<TrainLogRow>* log = nullptr, const LogCallback& on_log = {});

// Fresh state plus full run.
TrainState train(const TrainConfig& cfg, const Dataset& train_set, const Dataset* val_set,
                 std::vector<TrainLogRow>* log = nullptr);

void write_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState read_checkpoint(const std::filesystem::path& path);

// CSV with header step,elbo_estimate,lr,wall_ms,val_eps_mu.
void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows, bool append = false);

}  // namespace sdrom
