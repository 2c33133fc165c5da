#include "sdrom/baselines.hpp"
#include "sdrom/config.hpp"
#include "sdrom/container.hpp"
#include "sdrom/core.hpp"
#include "sdrom/datagen.hpp"
#include "sdrom/error.hpp"
#include "sdrom/predictor.hpp"
#include "sdrom/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fs = std::filesystem;
using namespace sdrom;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kUsage = 2, kMissingInput = 3, kNonFinite = 4, kDimension = 5 };

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema_violation:
    case ErrorCode::invalid_argument:
    case ErrorCode::invalid_window_size:
    case ErrorCode::unsupported_order:
      return kUsage;
    case ErrorCode::missing_input:
      return kMissingInput;
    case ErrorCode::non_finite_gradient:
    case ErrorCode::non_finite_elbo:
    case ErrorCode::numerically_singular_kernel:
    case ErrorCode::diverged_integration:
    case ErrorCode::unstable_solver:
      return kNonFinite;
    case ErrorCode::dimension_mismatch:
      return kDimension;
    default:
      return kOther;
  }
}

struct CommonOptions {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
};

// Relative paths in a config resolve against the config file's directory.
fs::path resolve(const CommonOptions& opts, const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute()) return path;
  return fs::path(opts.config).parent_path() / path;
}

fs::path out_dir(const CommonOptions& opts) {
  fs::create_directories(opts.out);
  return fs::path(opts.out);
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

// Writes rows as CSV and prints them as an aligned table.
void report(const fs::path& path, const std::vector<std::string>& header,
            const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  auto csv_line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  };
  csv_line(header);
  for (const auto& r : rows) csv_line(r);

  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  auto table_line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) std::cout << (i ? "  " : "") << std::left << std::setw(width[i]) << r[i];
    std::cout << '\n';
  };
  table_line(header);
  for (const auto& r : rows) table_line(r);
}

std::vector<std::vector<std::string>> metric_rows(const TestMetrics& m) {
  return {{"eps_mu", fmt(m.eps_mu)},
          {"eps_sigma", fmt(m.eps_sigma)},
          {"n_trajectories", std::to_string(m.eps.size())}};
}

void write_eps(const fs::path& path, const TestMetrics& m) {
  Container c;
  c.meta["kind"] = "eps";
  c.meta["eps_mu"] = m.eps_mu;
  c.meta["eps_sigma"] = m.eps_sigma;
  for (std::size_t i = 0; i < m.eps.size(); ++i) c.arrays.push_back({"eps_" + std::to_string(i), m.eps[i]});
  write_container(path, c);
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------

int cmd_generate(const CommonOptions& opts) {
  GeneratorSpec spec = generator_spec_from_json(read_json_file(opts.config));
  if (opts.seed) spec.seed = *opts.seed;
  const fs::path dir = out_dir(opts);
  const auto splits = generate_all(spec);
  std::vector<std::vector<std::string>> rows;
  for (const auto& data : splits) {
    const std::string name = to_string(data.split_tag);
    write_dataset(dir / (name + ".sdrom"), data);
    rows.push_back({name, std::to_string(data.trajectories.size()), std::to_string(data.state_dim()),
                    std::to_string(data.param_dim()), std::to_string(data.forcing_dim()),
                    std::to_string(data.trajectories.front().length())});
  }
  report(dir / "generate.csv", {"split", "trajectories", "D", "n_mu", "n_f", "n_times"}, rows);
  return kOk;
}

struct DataPaths {
  std::string train, validation, test;
};

DataPaths read_data_paths(JsonReader r) {
  DataPaths p;
  r.get("train", p.train);
  r.get("validation", p.validation);
  r.get("test", p.test);
  r.finish();
  return p;
}

int cmd_train(const CommonOptions& opts, bool resume) {
  const json j = read_json_file(opts.config);
  JsonReader r(j, "");
  DataPaths paths;
  if (r.has("data")) paths = read_data_paths(r.child("data"));
  long checkpoint_every = 0;
  r.get("checkpoint_every", checkpoint_every);
  TrainConfig cfg = r.has("train") ? train_config_from_json(r.at("train")) : TrainConfig{};
  r.finish();
  if (paths.train.empty()) throw Error(ErrorCode::schema_violation, "data.train is required");
  if (opts.seed) cfg.seed = *opts.seed;
  cfg.validate();

  const Dataset train_set = read_dataset(resolve(opts, paths.train));
  std::optional<Dataset> val_set;
  if (!paths.validation.empty()) val_set = read_dataset(resolve(opts, paths.validation));
  const fs::path dir = out_dir(opts);
  const fs::path ckpt = dir / "checkpoint.sdrom";
  const fs::path log_path = dir / "train_log.csv";

  TrainState state;
  const bool resuming = resume && fs::exists(ckpt);
  if (resuming) {
    state = read_checkpoint(ckpt);
  } else {
    state.model = build_model(cfg, train_set);
    state.adam = AdamState::zeros(state.model.params.values.size());
    state.best_values = state.model.params.values;
  }
  const long first_step = state.step;
  std::vector<TrainLogRow> rows;
  LogCallback on_log;
  if (checkpoint_every > 0) {
    on_log = [&](const TrainLogRow& row, const TrainState& s) {
      if (row.step % checkpoint_every == 0) write_checkpoint(ckpt, s);
    };
  }
  train(cfg, train_set, val_set ? &*val_set : nullptr, state, &rows, on_log);
  write_checkpoint(ckpt, state);
  write_train_log(log_path, rows, resuming);

  std::vector<std::vector<std::string>> out_rows{
      {"first_step", std::to_string(first_step)},
      {"steps", std::to_string(state.step)},
      {"final_elbo_estimate", rows.empty() ? "" : fmt(rows.back().elbo_estimate)},
      {"best_step", std::to_string(state.best_step)},
      {"best_val_eps_mu", std::isfinite(state.best_val_eps_mu) ? fmt(state.best_val_eps_mu) : ""}};
  report(dir / "train_summary.csv", {"quantity", "value"}, out_rows);
  return kOk;
}

struct PredictSettings {
  std::string checkpoint;
  std::string data;
  int trajectory = 0;
  int max_length = 0;
  bool use_best = true;
  bool record_timing = false;
  PredictOptions options;
};

PredictSettings read_predict_settings(const CommonOptions& opts, bool single) {
  const json j = read_json_file(opts.config);
  JsonReader r(j, "");
  PredictSettings s;
  r.get("checkpoint", s.checkpoint);
  r.get("data", s.data);
  r.get("use_best", s.use_best);
  r.get("n_samples", s.options.n_samples);
  r.get("dt", s.options.dt);
  r.get("seed", s.options.seed);
  if (single) {
    r.get("trajectory", s.trajectory);
  } else {
    r.get("max_length", s.max_length);
    r.get("record_timing", s.record_timing);
  }
  r.finish();
  if (s.checkpoint.empty()) r.fail("checkpoint", "a checkpoint path is required");
  if (s.data.empty()) r.fail("data", "a dataset path is required");
  if (s.options.n_samples < 1) r.fail("n_samples", "must be at least 1");
  if (s.max_length < 0) r.fail("max_length", "must be non-negative");
  if (opts.seed) s.options.seed = *opts.seed;
  return s;
}

const Eigen::VectorXd& chosen_values(const TrainState& state, bool use_best) {
  return use_best && state.best_values.size() == state.model.params.values.size() ? state.best_values
                                                                                   : state.model.params.values;
}

int cmd_evaluate(const CommonOptions& opts) {
  const PredictSettings s = read_predict_settings(opts, false);
  const TrainState state = read_checkpoint(resolve(opts, s.checkpoint));
  const Dataset test = read_dataset(resolve(opts, s.data));
  const auto start = std::chrono::steady_clock::now();
  const TestMetrics m =
      evaluate_testset(state.model, chosen_values(state, s.use_best), test, s.options, s.max_length);
  const double wall = elapsed_ms(start);
  const fs::path dir = out_dir(opts);
  auto rows = metric_rows(m);
  if (s.record_timing) rows.push_back({"wall_ms", fmt(wall)});
  report(dir / "metrics.csv", {"metric", "value"}, rows);
  write_eps(dir / "eps.sdrom", m);
  return kOk;
}

int cmd_predict(const CommonOptions& opts) {
  const PredictSettings s = read_predict_settings(opts, true);
  const TrainState state = read_checkpoint(resolve(opts, s.checkpoint));
  const Dataset data = read_dataset(resolve(opts, s.data));
  if (s.trajectory < 0 || s.trajectory >= static_cast<int>(data.trajectories.size())) {
    throw Error(ErrorCode::schema_violation, "trajectory index " + std::to_string(s.trajectory) + " out of range");
  }
  const PredictionEnsemble ens = predict_trajectory(state.model, chosen_values(state, s.use_best),
                                                    data.trajectories[s.trajectory], s.options);
  const fs::path dir = out_dir(opts);
  write_prediction(dir / "prediction.sdrom", ens);
  const double mean_eps = ens.eps.size() ? ens.eps.mean() : 0.0;
  report(dir / "predict.csv", {"quantity", "value"},
         {{"trajectory", std::to_string(s.trajectory)},
          {"n_times", std::to_string(ens.times.size())},
          {"mean_eps", fmt(mean_eps)},
          {"final_eps", ens.eps.size() ? fmt(ens.eps(ens.eps.size() - 1)) : ""}});
  return kOk;
}

int cmd_baseline(const CommonOptions& opts) {
  const json j = read_json_file(opts.config);
  JsonReader r(j, "");
  std::string method = "pod_sindy";
  r.get("method", method);
  DataPaths paths;
  if (r.has("data")) paths = read_data_paths(r.child("data"));
  int d = 2;
  std::vector<int> orders = kSindyOrders;
  std::vector<double> thresholds = kSindyThresholds;
  SolverBaselineConfig solver;
  std::uint64_t eval_seed = 0;
  r.get("seed", eval_seed);
  if (method == "pod_sindy") {
    r.get("d", d);
    r.get("orders", orders);
    r.get("thresholds", thresholds);
  } else if (method == "pnode" || method == "pnsde") {
    if (r.has("solver")) solver = solver_baseline_config_from_json(r.at("solver"));
    solver.kind = method == "pnode" ? SolverBaseline::pnode : SolverBaseline::pnsde;
  } else {
    r.fail("method", "expected pod_sindy, pnode or pnsde");
  }
  r.finish();
  if (paths.train.empty() || paths.test.empty()) {
    throw Error(ErrorCode::schema_violation, "data.train and data.test are required");
  }
  if (opts.seed) {
    eval_seed = *opts.seed;
    solver.seed = *opts.seed;
  }
  const Dataset train_set = read_dataset(resolve(opts, paths.train));
  const Dataset test = read_dataset(resolve(opts, paths.test));
  const fs::path dir = out_dir(opts);

  if (method == "pod_sindy") {
    if (paths.validation.empty()) throw Error(ErrorCode::schema_violation, "data.validation is required");
    const Dataset val = read_dataset(resolve(opts, paths.validation));
    const GridSearchResult g = pod_sindy_grid_search(train_set, val, d, orders, thresholds);
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : g.cells) rows.push_back({std::to_string(c.order), fmt(c.threshold), fmt(c.val_eps_mu)});
    report(dir / "grid.csv", {"order", "threshold", "val_eps_mu"}, rows);
    std::cout << '\n';
    auto m_rows = metric_rows(pod_sindy_evaluate(g.model, test));
    m_rows.push_back({"best_order", std::to_string(g.best.order)});
    m_rows.push_back({"best_threshold", fmt(g.best.threshold)});
    report(dir / "metrics.csv", {"metric", "value"}, m_rows);
    return kOk;
  }

  SolverBaselineLog log;
  const SolverBaselineModel model = pnode_pnsde_train(solver, train_set, &log);
  std::ofstream lf(dir / "train_log.csv", std::ios::trunc);
  lf << std::setprecision(17) << "step,elbo\n";
  for (std::size_t i = 0; i < log.elbo.size(); ++i) lf << i << ',' << log.elbo[i] << '\n';
  report(dir / "metrics.csv", {"metric", "value"}, metric_rows(solver_baseline_evaluate(model, test, eval_seed)));
  return kOk;
}

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("--config", opts.config, "JSON configuration file")->required();
  sub->add_option("--out", opts.out, "Output directory (created if absent)");
  sub->add_option("--seed", opts.seed, "Overrides the seed in the configuration");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic reduced-order models from latent SDEs"};
  app.require_subcommand(1);
  CommonOptions opts;
  bool resume = false;
  auto* gen = app.add_subcommand("generate", "Generate train/validation/test datasets");
  auto* tr = app.add_subcommand("train", "Train a latent SDE model");
  auto* ev = app.add_subcommand("evaluate", "Test-set error metrics of a checkpoint");
  auto* pr = app.add_subcommand("predict", "Prediction ensemble for one trajectory");
  auto* bl = app.add_subcommand("baseline", "POD-SINDy grid search or PNODE/PNSDE baselines");
  for (auto* sub : {gen, tr, ev, pr, bl}) add_common(sub, opts);
  tr->add_flag("--resume", resume, "Continue from <out>/checkpoint.sdrom when present");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(opts);
    if (*tr) return cmd_train(opts, resume);
    if (*ev) return cmd_evaluate(opts);
    if (*pr) return cmd_predict(opts);
    if (*bl) return cmd_baseline(opts);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kUsage;
}
