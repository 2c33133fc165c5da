#include "sdrom/trainer.hpp"

#include "sdrom/baselines.hpp"
#include "sdrom/config.hpp"
#include "sdrom/container.hpp"
#include "sdrom/error.hpp"
#include "sdrom/predictor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace sdrom {

namespace {

constexpr std::uint64_t kBatchDomain = 11;
constexpr std::uint64_t kWindowDomain = 12;
constexpr std::uint64_t kInitDomain = 13;

void check_data(const TrainConfig& cfg, const Dataset& data, const char* what) {
  data.validate();
  const ModelConfig& m = cfg.model;
  auto mismatch = [&](const char* field, Eigen::Index got, int want) {
    if (want > 0 && got != want) {
      throw Error(ErrorCode::dimension_mismatch, std::string(what) + " has " + field + " = " + std::to_string(got) +
                                                     " but the model expects " + std::to_string(want));
    }
  };
  mismatch("D", data.state_dim(), m.D);
  mismatch("n_mu", data.param_dim(), m.n_mu);
  mismatch("n_f", data.forcing_dim(), m.n_f);
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::schema_violation, msg); };
  if (M < 2) bad("M must be at least 2");
  if (epochs < 1 && max_steps <= 0) bad("epochs must be positive");
  if (batch_size < 1) bad("batch_size must be positive");
  if (max_steps < 0) bad("max_steps must be non-negative");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) bad("lr0 must be positive");
  if (!(schedule.decay > 0.0) || schedule.every < 1) bad("schedule needs decay > 0 and every >= 1");
  if (sampling.R < 1 || sampling.L < 1) bad("sampling.R and sampling.L must be at least 1");
  if (model.d < 1) bad("model.d must be positive");
  if (validation.every_epochs < 0) bad("validation.every_epochs must be non-negative");
  if (validation.n_samples < 1) bad("validation.n_samples must be positive");
  if (validation.max_length < 0 || validation.max_length == 1) bad("validation.max_length must be 0 or at least 2");
}

LatentSDEModel build_model(const TrainConfig& cfg, const Dataset& train) {
  cfg.validate();
  check_data(cfg, train, "training set");
  ModelConfig mc = cfg.model;
  mc.D = static_cast<int>(train.state_dim());
  mc.n_mu = static_cast<int>(train.param_dim());
  mc.n_f = static_cast<int>(train.forcing_dim());

  std::optional<Projection> proj;
  const int k = std::max(mc.encoder.pod_modes, mc.decoder.pod_modes);
  if (k > 0) proj = pod_fit(stack_snapshots(train), k).as_projection();

  LatentSDEModel model(mc, cfg.treatment, proj);
  const std::vector<Window> first = partition_trajectory(train.trajectories.front(), cfg.M);
  const Window& w = first.front();
  Eigen::VectorXd wt(w.size());
  for (int j = 0; j < w.size(); ++j) wt(j) = train.trajectories.front().times(w.sample_indices[j]);
  auto rng = derive_rng(cfg.seed, kInitDomain, 0, 0);
  model.init(rng, wt);
  return model;
}

long steps_per_epoch(const TrainConfig& cfg, std::size_t total_windows) {
  const long n = static_cast<long>(total_windows);
  return std::max(1L, (n + cfg.batch_size - 1) / cfg.batch_size);
}

long total_steps(const TrainConfig& cfg, std::size_t total_windows) {
  if (cfg.max_steps > 0) return cfg.max_steps;
  return steps_per_epoch(cfg, total_windows) * cfg.epochs;
}

std::mt19937_64 window_draw_rng(std::uint64_t seed, long step, int member) {
  return derive_rng(seed, kWindowDomain, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(member));
}

BatchGradient batch_gradient(const LatentSDEModel& model, const Eigen::VectorXd& values, const Dataset& train,
                             const std::vector<Window>& windows, const TrainConfig& cfg, long step) {
  if (windows.empty()) throw Error(ErrorCode::invalid_dataset, "no training windows");
  BatchGradient out;
  out.grad = Eigen::VectorXd::Zero(values.size());
  auto pick = derive_rng(cfg.seed, kBatchDomain, static_cast<std::uint64_t>(step), 0);
  std::uniform_int_distribution<std::size_t> uniform(0, windows.size() - 1);
  const double kl_weight = 1.0 / static_cast<double>(windows.size());
  for (int b = 0; b < cfg.batch_size; ++b) out.windows.push_back(uniform(pick));
  for (int b = 0; b < cfg.batch_size; ++b) {
    const Window& w = windows[out.windows[b]];
    const Trajectory& traj = train.trajectories[w.trajectory_index];
    auto rng = window_draw_rng(cfg.seed, step, b);
    const WindowDraws draws = draw_window(model, traj, w, cfg.sampling, rng);
    const WindowGradient g = elbo_window_gradient(model, values, traj, w, draws, kl_weight);
    out.grad += g.grad;
    out.elbo_estimate += g.terms.elbo;
  }
  out.grad /= static_cast<double>(cfg.batch_size);
  out.elbo_estimate /= static_cast<double>(cfg.batch_size);
  return out;
}

void train(const TrainConfig& cfg, const Dataset& train_set, const Dataset* val_set, TrainState& state,
           std::vector<TrainLogRow>* log, const LogCallback& on_log) {
  cfg.validate();
  check_data(cfg, train_set, "training set");
  if (val_set != nullptr) check_data(cfg, *val_set, "validation set");
  const std::vector<Window> windows = partition_dataset(train_set, cfg.M);
  const long n_steps = total_steps(cfg, windows.size());
  const long per_epoch = steps_per_epoch(cfg, windows.size());
  Eigen::VectorXd& values = state.model.params.values;
  if (state.adam.m.size() != values.size()) state.adam = AdamState::zeros(values.size());
  if (state.best_values.size() == 0) state.best_values = values;

  PredictOptions vopts;
  vopts.n_samples = cfg.validation.n_samples;
  vopts.dt = cfg.validation.dt;
  vopts.seed = cfg.seed;

  using clock = std::chrono::steady_clock;
  while (state.step < n_steps) {
    const long step = state.step;
    const auto start = clock::now();
    BatchGradient bg;
    try {
      bg = batch_gradient(state.model, values, train_set, windows, cfg, step);
      for (Eigen::Index i = 0; i < bg.grad.size(); ++i) {
        if (!std::isfinite(bg.grad(i))) {
          throw Error(ErrorCode::non_finite_gradient, "gradient entry " + std::to_string(i) + " is not finite");
        }
      }
    } catch (const Error& e) {
      std::string msg = e.what();
      const auto colon = msg.find(": ");
      if (colon != std::string::npos) msg = msg.substr(colon + 2);
      throw Error(e.code(), "step " + std::to_string(step) + ": " + msg);
    }
    const double lr = lr_schedule(step, cfg.lr0, cfg.schedule);
    Eigen::VectorXd descent = -bg.grad;
    adam_step(state.adam, values, descent, lr);
    state.step = step + 1;

    TrainLogRow row;
    row.step = state.step;
    row.elbo_estimate = bg.elbo_estimate;
    row.lr = lr;
    const bool epoch_end = state.step % per_epoch == 0;
    const bool last = state.step == n_steps;
    const bool periodic =
        cfg.validation.every_epochs > 0 && epoch_end && (state.step / per_epoch) % cfg.validation.every_epochs == 0;
    if (val_set != nullptr && (periodic || last)) {
      double eps_mu = std::numeric_limits<double>::infinity();
      try {
        eps_mu = evaluate_testset(state.model, values, *val_set, vopts, cfg.validation.max_length).eps_mu;
      } catch (const Error& e) {
        // A diverging validation rollout counts as the worst possible score.
        if (e.code() != ErrorCode::diverged_integration) throw;
      }
      row.val_eps_mu = eps_mu;
      if (eps_mu < state.best_val_eps_mu) {
        state.best_val_eps_mu = eps_mu;
        state.best_values = values;
        state.best_step = state.step;
      }
    } else if (val_set == nullptr) {
      state.best_values = values;
      state.best_step = state.step;
    }
    if (cfg.record_timing) {
      row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    }
    if (log != nullptr) log->push_back(row);
    if (on_log) on_log(row, state);
  }
}

TrainState train(const TrainConfig& cfg, const Dataset& train_set, const Dataset* val_set,
                 std::vector<TrainLogRow>* log) {
  TrainState state;
  state.model = build_model(cfg, train_set);
  state.adam = AdamState::zeros(state.model.params.values.size());
  state.best_values = state.model.params.values;
  train(cfg, train_set, val_set, state, log);
  return state;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void write_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const LatentSDEModel& model = state.model;
  if (model.config().drift.physics) {
    throw Error(ErrorCode::invalid_argument, "models with a custom physics callback cannot be checkpointed");
  }
  Container c;
  c.meta["kind"] = "checkpoint";
  c.meta["model"] = to_json(model.config());
  c.meta["treatment"] = to_json(model.treatment());
  c.meta["step"] = state.step;
  c.meta["adam_step"] = state.adam.step;
  c.meta["best_step"] = state.best_step;
  c.meta["best_val_eps_mu"] =
      std::isfinite(state.best_val_eps_mu) ? nlohmann::json(state.best_val_eps_mu) : nlohmann::json(nullptr);
  c.meta["has_projection"] = model.projection().has_value();
  c.arrays.push_back({"values", model.params.values});
  c.arrays.push_back({"adam_m", state.adam.m});
  c.arrays.push_back({"adam_v", state.adam.v});
  c.arrays.push_back({"best_values", state.best_values});
  if (model.projection()) {
    c.arrays.push_back({"proj_modes", model.projection()->modes});
    c.arrays.push_back({"proj_mean", model.projection()->mean});
  }
  write_container(path, c);
}

TrainState read_checkpoint(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.meta.value("kind", std::string()) != "checkpoint") {
    throw Error(ErrorCode::malformed_manifest, path.string() + " is not a checkpoint");
  }
  try {
    std::optional<Projection> proj;
    if (c.meta.at("has_projection").get<bool>()) {
      proj = Projection{c.array("proj_modes"), c.array("proj_mean")};
    }
    TrainState s;
    s.model = LatentSDEModel(model_config_from_json(c.meta.at("model")), treatment_from_json(c.meta.at("treatment")),
                             proj);
    const Eigen::MatrixXd& values = c.array("values");
    if (values.size() != s.model.params.values.size()) {
      throw Error(ErrorCode::dimension_mismatch, "checkpoint parameter count does not match its model");
    }
    auto vec = [](const Eigen::MatrixXd& m) { return Eigen::VectorXd(m.reshaped()); };
    s.model.params.values = vec(values);
    s.adam = AdamState::zeros(values.size());
    s.adam.m = vec(c.array("adam_m"));
    s.adam.v = vec(c.array("adam_v"));
    s.adam.step = c.meta.at("adam_step").get<long>();
    s.step = c.meta.at("step").get<long>();
    s.best_values = vec(c.array("best_values"));
    s.best_step = c.meta.at("best_step").get<long>();
    const auto& bv = c.meta.at("best_val_eps_mu");
    s.best_val_eps_mu = bv.is_null() ? std::numeric_limits<double>::infinity() : bv.get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_manifest, path.string() + ": " + e.what());
  }
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows, bool append) {
  const bool header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out << std::setprecision(17);
  if (header) out << "step,elbo_estimate,lr,wall_ms,val_eps_mu\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.elbo_estimate << ',' << r.lr << ',' << r.wall_ms << ',';
    if (!std::isnan(r.val_eps_mu)) out << r.val_eps_mu;
    out << '\n';
  }
}

}  // namespace sdrom
