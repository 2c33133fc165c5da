#include "sdrom/baselines.hpp"
#include "sdrom/config.hpp"
#include "sdrom/core.hpp"
#include "sdrom/datagen.hpp"
#include "sdrom/elbo.hpp"
#include "sdrom/error.hpp"
#include "sdrom/predictor.hpp"
#include "sdrom/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace sdrom;

namespace {

PredictOptions predict_options(int n_samples, double dt, std::uint64_t seed) {
  PredictOptions o;
  o.n_samples = n_samples;
  o.dt = dt;
  o.seed = seed;
  return o;
}

const Eigen::VectorXd& chosen_values(const TrainState& s, bool use_best) {
  return use_best && s.best_values.size() == s.model.params.values.size() ? s.best_values : s.model.params.values;
}

py::dict metrics_dict(const TestMetrics& m) {
  py::dict d;
  d["eps_mu"] = m.eps_mu;
  d["eps_sigma"] = m.eps_sigma;
  d["eps"] = m.eps;
  return d;
}

}  // namespace

PYBIND11_MODULE(_sdrom, m) {
  m.doc() = "Stochastic reduced-order models from latent SDEs";

  static py::exception<Error> error_type(m, "SdromError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = error_type;
      py::object inst = err(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), inst.ptr());
    }
  });

  py::enum_<SplitTag>(m, "SplitTag")
      .value("train", SplitTag::train)
      .value("validation", SplitTag::validation)
      .value("test", SplitTag::test);

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<>())
      .def(py::init([](Eigen::VectorXd times, Eigen::MatrixXd states, Eigen::VectorXd params,
                       Eigen::MatrixXd forcing) {
             Trajectory t{std::move(times), std::move(states), std::move(params), std::move(forcing)};
             if (t.forcing_samples.size() == 0) t.forcing_samples.resize(t.times.size(), 0);
             t.validate();
             return t;
           }),
           py::arg("times"), py::arg("states"), py::arg("params") = Eigen::VectorXd(),
           py::arg("forcing") = Eigen::MatrixXd())
      .def_readwrite("times", &Trajectory::times)
      .def_readwrite("states", &Trajectory::states)
      .def_readwrite("params", &Trajectory::params)
      .def_readwrite("forcing", &Trajectory::forcing_samples)
      .def("__len__", &Trajectory::length);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def(py::init([](std::vector<Trajectory> trajs, SplitTag tag) {
             Dataset d{std::move(trajs), tag};
             d.validate();
             return d;
           }),
           py::arg("trajectories"), py::arg("split") = SplitTag::train)
      .def_readwrite("trajectories", &Dataset::trajectories)
      .def_readwrite("split", &Dataset::split_tag)
      .def_property_readonly("state_dim", &Dataset::state_dim)
      .def_property_readonly("param_dim", &Dataset::param_dim)
      .def_property_readonly("forcing_dim", &Dataset::forcing_dim)
      .def("__len__", [](const Dataset& d) { return d.trajectories.size(); });

  m.def("read_dataset", &read_dataset, py::arg("path"));
  m.def("write_dataset", &write_dataset, py::arg("path"), py::arg("dataset"));
  m.def("error_metric", &error_metric, py::arg("u_true"), py::arg("u_pred_mean"),
        "Relative error ||u - u_hat|| / ||u|| per time row.");

  m.def(
      "_generate",
      [](const std::string& spec_json) {
        const auto all = generate_all(generator_spec_from_json(json::parse(spec_json)));
        return py::make_tuple(all[0], all[1], all[2]);
      },
      py::arg("spec_json"));

  py::class_<TrainState>(m, "TrainState")
      .def_readonly("step", &TrainState::step)
      .def_readonly("best_step", &TrainState::best_step)
      .def_readonly("best_val_eps_mu", &TrainState::best_val_eps_mu)
      .def_property_readonly("values", [](const TrainState& s) { return s.model.params.values; })
      .def_readonly("best_values", &TrainState::best_values)
      .def_property_readonly("dispersion",
                             [](const TrainState& s) { return s.model.dispersion_diag(s.model.params.values); })
      .def(
          "block",
          [](const TrainState& s, const std::string& name, bool use_best) -> Eigen::MatrixXd {
            ParamVector p = s.model.params;
            p.values = chosen_values(s, use_best);
            return p.block(name);
          },
          py::arg("name"), py::arg("use_best") = true, "A named parameter block, e.g. 'drift.coef'.")
      .def_property_readonly("block_names", [](const TrainState& s) {
        std::vector<std::string> names;
        for (const auto& b : s.model.layout().blocks()) names.push_back(b.name);
        return names;
      });

  m.def(
      "_train",
      [](const std::string& cfg_json, const Dataset& train_set, const Dataset* val_set) {
        const TrainConfig cfg = train_config_from_json(json::parse(cfg_json));
        std::vector<TrainLogRow> log;
        TrainState state;
        {
          py::gil_scoped_release release;
          state = train(cfg, train_set, val_set, &log);
        }
        std::vector<double> elbo, val;
        for (const auto& r : log) {
          elbo.push_back(r.elbo_estimate);
          val.push_back(r.val_eps_mu);
        }
        return py::make_tuple(state, elbo, val);
      },
      py::arg("config_json"), py::arg("train"), py::arg("validation") = nullptr);

  m.def("write_checkpoint", &write_checkpoint, py::arg("path"), py::arg("state"));
  m.def("read_checkpoint", &read_checkpoint, py::arg("path"));

  m.def(
      "evaluate",
      [](const TrainState& s, const Dataset& test, int n_samples, double dt, std::uint64_t seed, int max_length,
         bool use_best) {
        return metrics_dict(
            evaluate_testset(s.model, chosen_values(s, use_best), test, predict_options(n_samples, dt, seed), max_length));
      },
      py::arg("state"), py::arg("test"), py::arg("n_samples") = 64, py::arg("dt") = 0.0, py::arg("seed") = 0,
      py::arg("max_length") = 0, py::arg("use_best") = true);

  m.def(
      "predict",
      [](const TrainState& s, const Trajectory& traj, int n_samples, double dt, std::uint64_t seed, bool use_best) {
        const PredictionEnsemble e =
            predict_trajectory(s.model, chosen_values(s, use_best), traj, predict_options(n_samples, dt, seed));
        py::dict d;
        d["times"] = e.times;
        d["qoi_mean"] = e.qoi_mean;
        d["qoi_std"] = e.qoi_std;
        d["eps"] = e.eps;
        d["latent_paths"] = e.latent_paths;
        return d;
      },
      py::arg("state"), py::arg("trajectory"), py::arg("n_samples") = 64, py::arg("dt") = 0.0, py::arg("seed") = 0,
      py::arg("use_best") = true);

  m.def("b_matrix_diag", &b_matrix_diag, py::arg("s"), py::arg("ds"), py::arg("psi2"));
  m.def("polynomial_features", py::overload_cast<const Eigen::VectorXd&, int>(&polynomial_features), py::arg("z"),
        py::arg("order"));

  py::class_<PODBasis>(m, "PODBasis")
      .def_readonly("modes", &PODBasis::modes)
      .def_readonly("singular_values", &PODBasis::singular_values)
      .def_readonly("mean", &PODBasis::mean_snapshot);
  m.def("pod_fit", &pod_fit, py::arg("snapshots"), py::arg("d"));
  m.def("numerical_time_derivative", &numerical_time_derivative, py::arg("series"), py::arg("times"));

  py::class_<SINDyModel>(m, "SINDyModel")
      .def_readonly("order", &SINDyModel::order)
      .def_readonly("threshold", &SINDyModel::threshold)
      .def_readonly("coefficients", &SINDyModel::coefficients);
  m.def("stlsq_fit", &stlsq_fit, py::arg("X"), py::arg("dZ"), py::arg("order"), py::arg("threshold"),
        py::arg("max_iterations") = 20);

  m.def(
      "pod_sindy_grid_search",
      [](const Dataset& train_set, const Dataset& val, const Dataset& test, int d, std::vector<int> orders,
         std::vector<double> thresholds) {
        const GridSearchResult g = pod_sindy_grid_search(train_set, val, d, orders, thresholds);
        py::list cells;
        for (const auto& c : g.cells) cells.append(py::make_tuple(c.order, c.threshold, c.val_eps_mu));
        py::dict out;
        out["grid"] = cells;
        out["best_order"] = g.best.order;
        out["best_threshold"] = g.best.threshold;
        out["test"] = metrics_dict(pod_sindy_evaluate(g.model, test));
        return out;
      },
      py::arg("train"), py::arg("validation"), py::arg("test"), py::arg("d"), py::arg("orders") = kSindyOrders,
      py::arg("thresholds") = kSindyThresholds);
}
