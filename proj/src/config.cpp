#include "sdrom/config.hpp"

#include "sdrom/error.hpp"

#include <fstream>
#include <sstream>

namespace sdrom {

JsonReader::JsonReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
  if (!j_.is_object()) {
    throw Error(ErrorCode::schema_violation, (context_.empty() ? "config" : context_) + " must be a JSON object");
  }
}

const json& JsonReader::at(const std::string& key) {
  seen_.insert(key);
  return j_.at(key);
}

JsonReader JsonReader::child(const std::string& key) {
  seen_.insert(key);
  return JsonReader(j_.at(key), context_.empty() ? key : context_ + "." + key);
}

void JsonReader::finish() const {
  for (auto it = j_.begin(); it != j_.end(); ++it) {
    if (!seen_.count(it.key())) {
      const std::string where = context_.empty() ? it.key() : context_ + "." + it.key();
      throw Error(ErrorCode::schema_violation, "unknown key \"" + where + "\"");
    }
  }
}

void JsonReader::fail(const std::string& key, const std::string& why) const {
  const std::string where = context_.empty() ? key : context_ + "." + key;
  throw Error(ErrorCode::schema_violation, "bad value for \"" + where + "\": " + why);
}

namespace {

json prior_json(const GaussianPrior& p) { return {{"mean", p.mean}, {"logvar", p.logvar}}; }

GaussianPrior read_prior(JsonReader r) {
  GaussianPrior p;
  r.get("mean", p.mean);
  r.get("logvar", p.logvar);
  r.finish();
  return p;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd read_matrix(JsonReader& r, const std::string& key) {
  std::vector<std::vector<double>> rows;
  r.get(key, rows);
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = n > 0 ? static_cast<Eigen::Index>(rows.front().size()) : 0;
  Eigen::MatrixXd m(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != c) r.fail(key, "rows have different lengths");
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

json to_json(const ModelConfig& cfg) {
  json drift = {{"kind", to_string(cfg.drift.kind)},
                {"hidden", cfg.drift.hidden},
                {"poly_order", cfg.drift.poly_order},
                {"time_encoding", cfg.drift.time_encoding}};
  if (cfg.drift.linear_physics) {
    drift["linear_physics"] = {{"A", matrix_json(cfg.drift.linear_physics->A)},
                               {"b", std::vector<double>(cfg.drift.linear_physics->b.data(),
                                                         cfg.drift.linear_physics->b.data() +
                                                             cfg.drift.linear_physics->b.size())}};
  }
  return {{"D", cfg.D},
          {"d", cfg.d},
          {"n_mu", cfg.n_mu},
          {"n_f", cfg.n_f},
          {"encoder",
           {{"hidden", cfg.encoder.hidden},
            {"logvar_head", cfg.encoder.logvar_head},
            {"init_logvar", cfg.encoder.init_logvar},
            {"pod_modes", cfg.encoder.pod_modes}}},
          {"decoder",
           {{"hidden", cfg.decoder.hidden},
            {"init_logvar", cfg.decoder.init_logvar},
            {"pod_modes", cfg.decoder.pod_modes}}},
          {"drift", drift},
          {"kernel",
           {{"hidden", cfg.kernel.hidden},
            {"init_sigma_f", cfg.kernel.init_sigma_f},
            {"init_sigma", cfg.kernel.init_sigma},
            {"init_ell", cfg.kernel.init_ell}}},
          {"init_dispersion", cfg.init_dispersion}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  JsonReader r(j, "model");
  r.get("D", cfg.D);
  r.get("d", cfg.d);
  r.get("n_mu", cfg.n_mu);
  r.get("n_f", cfg.n_f);
  r.get("init_dispersion", cfg.init_dispersion);
  if (r.has("encoder")) {
    JsonReader e = r.child("encoder");
    e.get("hidden", cfg.encoder.hidden);
    e.get("logvar_head", cfg.encoder.logvar_head);
    e.get("init_logvar", cfg.encoder.init_logvar);
    e.get("pod_modes", cfg.encoder.pod_modes);
    e.finish();
  }
  if (r.has("decoder")) {
    JsonReader e = r.child("decoder");
    e.get("hidden", cfg.decoder.hidden);
    e.get("init_logvar", cfg.decoder.init_logvar);
    e.get("pod_modes", cfg.decoder.pod_modes);
    e.finish();
  }
  if (r.has("drift")) {
    JsonReader e = r.child("drift");
    std::string kind = to_string(cfg.drift.kind);
    e.get("kind", kind);
    cfg.drift.kind = drift_kind_from_string(kind);
    e.get("hidden", cfg.drift.hidden);
    e.get("poly_order", cfg.drift.poly_order);
    e.get("time_encoding", cfg.drift.time_encoding);
    if (e.has("linear_physics")) {
      JsonReader p = e.child("linear_physics");
      LinearPhysics lp;
      lp.A = read_matrix(p, "A");
      std::vector<double> b;
      p.get("b", b);
      lp.b = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
      p.finish();
      cfg.drift.linear_physics = lp;
    }
    e.finish();
  }
  if (r.has("kernel")) {
    JsonReader e = r.child("kernel");
    e.get("hidden", cfg.kernel.hidden);
    e.get("init_sigma_f", cfg.kernel.init_sigma_f);
    e.get("init_sigma", cfg.kernel.init_sigma);
    e.get("init_ell", cfg.kernel.init_ell);
    e.finish();
  }
  r.finish();
  if (cfg.d < 1) r.fail("d", "must be positive");
  return cfg;
}

json to_json(const ThetaTreatment& t) {
  return {{"mode", to_string(t.mode)},
          {"mixed_groups", t.mixed_groups},
          {"init_q_logvar", t.init_q_logvar},
          {"default_prior", prior_json(t.default_prior)},
          {"decoder_logvar_prior", prior_json(t.decoder_logvar_prior)}};
}

ThetaTreatment treatment_from_json(const json& j) {
  ThetaTreatment t;
  JsonReader r(j, "treatment");
  std::string mode = to_string(t.mode);
  r.get("mode", mode);
  t.mode = treatment_mode_from_string(mode);
  r.get("mixed_groups", t.mixed_groups);
  r.get("init_q_logvar", t.init_q_logvar);
  if (r.has("default_prior")) t.default_prior = read_prior(r.child("default_prior"));
  if (r.has("decoder_logvar_prior")) t.decoder_logvar_prior = read_prior(r.child("decoder_logvar_prior"));
  r.finish();
  for (const auto& g : t.mixed_groups) {
    bool known = false;
    for (const auto& k : kThetaGroups) known = known || k == g;
    if (!known) r.fail("mixed_groups", "unknown group \"" + g + "\"");
  }
  return t;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

json to_json(const TrainConfig& cfg) {
  return {{"model", to_json(cfg.model)},
          {"treatment", to_json(cfg.treatment)},
          {"sampling", {{"R", cfg.sampling.R}, {"L", cfg.sampling.L}}},
          {"M", cfg.M},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"max_steps", cfg.max_steps},
          {"lr0", cfg.lr0},
          {"schedule", {{"decay", cfg.schedule.decay}, {"every", cfg.schedule.every}}},
          {"seed", cfg.seed},
          {"validation",
           {{"every_epochs", cfg.validation.every_epochs},
            {"n_samples", cfg.validation.n_samples},
            {"max_length", cfg.validation.max_length},
            {"dt", cfg.validation.dt}}},
          {"record_timing", cfg.record_timing}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  JsonReader r(j, "train");
  if (r.has("model")) cfg.model = model_config_from_json(r.at("model"));
  if (r.has("treatment")) cfg.treatment = treatment_from_json(r.at("treatment"));
  if (r.has("sampling")) {
    JsonReader s = r.child("sampling");
    s.get("R", cfg.sampling.R);
    s.get("L", cfg.sampling.L);
    s.finish();
  }
  r.get("M", cfg.M);
  r.get("epochs", cfg.epochs);
  r.get("batch_size", cfg.batch_size);
  r.get("max_steps", cfg.max_steps);
  r.get("lr0", cfg.lr0);
  if (r.has("schedule")) {
    JsonReader s = r.child("schedule");
    s.get("decay", cfg.schedule.decay);
    s.get("every", cfg.schedule.every);
    s.finish();
  }
  r.get("seed", cfg.seed);
  if (r.has("validation")) {
    JsonReader s = r.child("validation");
    s.get("every_epochs", cfg.validation.every_epochs);
    s.get("n_samples", cfg.validation.n_samples);
    s.get("max_length", cfg.validation.max_length);
    s.get("dt", cfg.validation.dt);
    s.finish();
  }
  r.get("record_timing", cfg.record_timing);
  r.finish();
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

json to_json(const GeneratorSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"counts", {{"train", s.counts.train}, {"validation", s.counts.validation}, {"test", s.counts.test}}},
          {"noise_std", s.noise_std},
          {"seed", s.seed},
          {"D", s.D},
          {"n_times", s.n_times},
          {"t_end", s.t_end},
          {"ou",
           {{"d", s.ou.d},
            {"rate", s.ou.rate},
            {"noise", s.ou.noise},
            {"stationary_start", s.ou.stationary_start},
            {"z0", s.ou.z0}}},
          {"oscillator",
           {{"omega", s.oscillator.omega},
            {"radius_min", s.oscillator.radius_min},
            {"radius_max", s.oscillator.radius_max}}},
          {"burgers",
           {{"nu_min", s.burgers.nu_min},
            {"nu_max", s.burgers.nu_max},
            {"omega_min", s.burgers.omega_min},
            {"omega_max", s.burgers.omega_max},
            {"alpha1", s.burgers.alpha1},
            {"alpha2", s.burgers.alpha2},
            {"forced", s.burgers.forced},
            {"solver_dt", s.burgers.solver_dt}}}};
}

GeneratorSpec generator_spec_from_json(const json& j) {
  GeneratorSpec s;
  JsonReader r(j, "generate");
  std::string kind = to_string(s.kind);
  r.get("kind", kind);
  s.kind = generator_kind_from_string(kind);
  if (s.kind == GeneratorKind::burgers) {
    s.D = 64;
    s.n_times = 151;
    s.t_end = 3.0;
  }
  if (r.has("counts")) {
    JsonReader c = r.child("counts");
    c.get("train", s.counts.train);
    c.get("validation", s.counts.validation);
    c.get("test", s.counts.test);
    c.finish();
  }
  r.get("noise_std", s.noise_std);
  r.get("seed", s.seed);
  r.get("D", s.D);
  r.get("n_times", s.n_times);
  r.get("t_end", s.t_end);
  if (r.has("ou")) {
    JsonReader c = r.child("ou");
    c.get("d", s.ou.d);
    c.get("rate", s.ou.rate);
    c.get("noise", s.ou.noise);
    c.get("stationary_start", s.ou.stationary_start);
    c.get("z0", s.ou.z0);
    c.finish();
  }
  if (r.has("oscillator")) {
    JsonReader c = r.child("oscillator");
    c.get("omega", s.oscillator.omega);
    c.get("radius_min", s.oscillator.radius_min);
    c.get("radius_max", s.oscillator.radius_max);
    c.finish();
  }
  if (r.has("burgers")) {
    JsonReader c = r.child("burgers");
    c.get("nu_min", s.burgers.nu_min);
    c.get("nu_max", s.burgers.nu_max);
    c.get("omega_min", s.burgers.omega_min);
    c.get("omega_max", s.burgers.omega_max);
    c.get("alpha1", s.burgers.alpha1);
    c.get("alpha2", s.burgers.alpha2);
    c.get("forced", s.burgers.forced);
    c.get("solver_dt", s.burgers.solver_dt);
    c.finish();
  }
  r.finish();
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Solver-based baselines
// ---------------------------------------------------------------------------

json to_json(const SolverBaselineConfig& c) {
  return {{"kind", c.kind == SolverBaseline::pnode ? "pnode" : "pnsde"},
          {"pnode_scheme", c.pnode_scheme == FixedStepScheme::rk4 ? "rk4" : "euler"},
          {"d", c.d},
          {"encoder_hidden", c.encoder_hidden},
          {"decoder_hidden", c.decoder_hidden},
          {"drift_hidden", c.drift_hidden},
          {"init_decoder_logvar", c.init_decoder_logvar},
          {"init_dispersion", c.init_dispersion},
          {"forcing_modes", c.forcing_modes},
          {"substeps", c.substeps},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr0", c.lr0},
          {"schedule", {{"decay", c.schedule.decay}, {"every", c.schedule.every}}},
          {"seed", c.seed}};
}

SolverBaselineConfig solver_baseline_config_from_json(const json& j) {
  SolverBaselineConfig c;
  JsonReader r(j, "baseline");
  std::string kind = "pnode", scheme = "rk4";
  r.get("kind", kind);
  if (kind == "pnode") {
    c.kind = SolverBaseline::pnode;
  } else if (kind == "pnsde") {
    c.kind = SolverBaseline::pnsde;
  } else {
    r.fail("kind", "expected pnode or pnsde");
  }
  r.get("pnode_scheme", scheme);
  if (scheme == "rk4") {
    c.pnode_scheme = FixedStepScheme::rk4;
  } else if (scheme == "euler") {
    c.pnode_scheme = FixedStepScheme::euler;
  } else {
    r.fail("pnode_scheme", "expected rk4 or euler");
  }
  r.get("d", c.d);
  r.get("encoder_hidden", c.encoder_hidden);
  r.get("decoder_hidden", c.decoder_hidden);
  r.get("drift_hidden", c.drift_hidden);
  r.get("init_decoder_logvar", c.init_decoder_logvar);
  r.get("init_dispersion", c.init_dispersion);
  r.get("forcing_modes", c.forcing_modes);
  r.get("substeps", c.substeps);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr0", c.lr0);
  if (r.has("schedule")) {
    JsonReader s = r.child("schedule");
    s.get("decay", c.schedule.decay);
    s.get("every", c.schedule.every);
    s.finish();
  }
  r.get("seed", c.seed);
  r.finish();
  if (c.d < 1 || c.epochs < 1 || c.batch_size < 1 || c.substeps < 1 || !(c.lr0 > 0.0)) {
    throw Error(ErrorCode::schema_violation, "baseline: d, epochs, batch_size, substeps and lr0 must be positive");
  }
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::missing_input, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::schema_violation, path.string() + ": " + e.what());
  }
}

}  // namespace sdrom
