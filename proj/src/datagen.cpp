#include "sdrom/datagen.hpp"

#include "sdrom/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace sdrom {

namespace {

constexpr std::uint64_t kGeneratorDomain = 7;
constexpr std::uint64_t kFixedMapStream = 0;

std::uint64_t split_stream(SplitTag split) { return 1 + static_cast<std::uint64_t>(split); }

int split_count(const GeneratorSpec& spec, SplitTag split) {
  switch (split) {
    case SplitTag::train:
      return spec.counts.train;
    case SplitTag::validation:
      return spec.counts.validation;
    case SplitTag::test:
      return spec.counts.test;
  }
  return 0;
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> normal(0.0, sd);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  return m;
}

void add_noise(Eigen::MatrixXd& u, double sd, std::mt19937_64& rng) {
  if (sd <= 0.0) return;
  u += gaussian_matrix(u.rows(), u.cols(), rng, sd);
}

Eigen::VectorXd time_grid(const GeneratorSpec& spec) {
  return Eigen::VectorXd::LinSpaced(spec.n_times, 0.0, spec.t_end);
}

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::schema_violation, what); }

}  // namespace

std::string to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::ou:
      return "ou";
    case GeneratorKind::oscillator_embedding:
      return "oscillator_embedding";
    case GeneratorKind::burgers:
      return "burgers";
  }
  return "unknown";
}

GeneratorKind generator_kind_from_string(const std::string& s) {
  if (s == "ou") return GeneratorKind::ou;
  if (s == "oscillator_embedding") return GeneratorKind::oscillator_embedding;
  if (s == "burgers") return GeneratorKind::burgers;
  bad("unknown generator kind \"" + s + "\"");
}

void GeneratorSpec::validate() const {
  if (counts.train < 1 || counts.validation < 1 || counts.test < 1) bad("trajectory counts must be positive");
  if (noise_std < 0.0) bad("noise_std must be non-negative");
  if (n_times < 2) bad("n_times must be at least 2");
  if (!(t_end > 0.0)) bad("t_end must be positive");
  if (D < 1) bad("D must be positive");
  switch (kind) {
    case GeneratorKind::ou:
      if (ou.d < 1) bad("ou.d must be positive");
      if (!(ou.rate > 0.0)) bad("ou.rate must be positive");
      if (ou.noise < 0.0) bad("ou.noise must be non-negative");
      break;
    case GeneratorKind::oscillator_embedding:
      if (D < 16) bad("oscillator_embedding needs D >= 16");
      if (oscillator.radius_min <= 0.0 || oscillator.radius_max < oscillator.radius_min) {
        bad("oscillator radius range is invalid");
      }
      break;
    case GeneratorKind::burgers:
      if (D < 4) bad("burgers needs D >= 4");
      if (!(burgers.nu_min > 0.0) || burgers.nu_max < burgers.nu_min) bad("burgers viscosity range is invalid");
      if (burgers.omega_max < burgers.omega_min) bad("burgers omega range is invalid");
      if (!(burgers.alpha2 > 0.0)) bad("burgers.alpha2 must be positive");
      break;
  }
}

Dataset gen_ou(const GeneratorSpec& spec, SplitTag split, LatentTruth* latent) {
  spec.validate();
  const int d = spec.ou.d;
  const double a = spec.ou.rate, c = spec.ou.noise;
  std::mt19937_64 map_rng = derive_rng(spec.seed, kGeneratorDomain, kFixedMapStream, 0);
  const Eigen::MatrixXd A = gaussian_matrix(spec.D, d, map_rng, 1.0 / std::sqrt(static_cast<double>(d)));
  const Eigen::VectorXd times = time_grid(spec);
  const double var_stat = c * c / (2.0 * a);
  Dataset data;
  data.split_tag = split;
  if (latent) latent->clear();
  for (int i = 0; i < split_count(spec, split); ++i) {
    std::mt19937_64 rng = derive_rng(spec.seed, kGeneratorDomain, split_stream(split), static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal;
    Eigen::MatrixXd z(spec.n_times, d);
    for (int k = 0; k < d; ++k) z(0, k) = spec.ou.stationary_start ? std::sqrt(var_stat) * normal(rng) : spec.ou.z0;
    for (int j = 1; j < spec.n_times; ++j) {
      const double h = times(j) - times(j - 1);
      const double decay = std::exp(-a * h);
      const double sd = std::sqrt(var_stat * (1.0 - decay * decay));
      for (int k = 0; k < d; ++k) z(j, k) = decay * z(j - 1, k) + sd * normal(rng);
    }
    Trajectory tr;
    tr.times = times;
    tr.states = z * A.transpose();
    add_noise(tr.states, spec.noise_std, rng);
    tr.params.resize(0);
    tr.forcing_samples.resize(spec.n_times, 0);
    data.trajectories.push_back(std::move(tr));
    if (latent) latent->push_back(z);
  }
  return data;
}

Dataset gen_oscillator_embedding(const GeneratorSpec& spec, SplitTag split, LatentTruth* latent) {
  spec.validate();
  std::mt19937_64 map_rng = derive_rng(spec.seed, kGeneratorDomain, kFixedMapStream, 0);
  const Eigen::MatrixXd W = gaussian_matrix(spec.D, 2, map_rng, 1.0);
  const Eigen::VectorXd times = time_grid(spec);
  const double omega = spec.oscillator.omega;
  Dataset data;
  data.split_tag = split;
  if (latent) latent->clear();
  for (int i = 0; i < split_count(spec, split); ++i) {
    std::mt19937_64 rng = derive_rng(spec.seed, kGeneratorDomain, split_stream(split), static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> radius(spec.oscillator.radius_min, spec.oscillator.radius_max);
    const double th0 = angle(rng);
    const double r = spec.oscillator.radius_min == spec.oscillator.radius_max ? spec.oscillator.radius_min : radius(rng);
    Eigen::MatrixXd z(spec.n_times, 2);
    for (int j = 0; j < spec.n_times; ++j) {
      const double th = th0 + omega * times(j);
      z(j, 0) = r * std::cos(th);
      z(j, 1) = r * std::sin(th);
    }
    Trajectory tr;
    tr.times = times;
    tr.states = (z * W.transpose()).array().tanh().matrix();
    add_noise(tr.states, spec.noise_std, rng);
    tr.params.resize(0);
    tr.forcing_samples.resize(spec.n_times, 0);
    data.trajectories.push_back(std::move(tr));
    if (latent) latent->push_back(z);
  }
  return data;
}

double burgers_stable_dt(int D, double nu, double vmax) {
  const double dx = 1.0 / (D - 1);
  if (vmax * dx / nu > 2.0) {
    throw Error(ErrorCode::unstable_solver, "cell Reynolds number " + std::to_string(vmax * dx / nu) +
                                                " exceeds 2; refine the grid or raise the viscosity");
  }
  double limit = dx * dx / (2.0 * nu);
  if (vmax > 0.0) limit = std::min(limit, 2.0 * nu / (vmax * vmax));
  return limit;
}

Trajectory burgers_trajectory(int D, double nu, double omega, const BurgersParams& p, int n_times, double t_end) {
  const double vmax = std::abs(p.alpha1);
  const double limit = burgers_stable_dt(D, nu, vmax);
  double dt = p.solver_dt > 0.0 ? p.solver_dt : 0.5 * limit;
  if (dt > limit) {
    throw Error(ErrorCode::unstable_solver,
                "solver_dt " + std::to_string(dt) + " exceeds the stability limit " + std::to_string(limit));
  }
  const double dx = 1.0 / (D - 1);
  auto forcing = [&](double t) { return p.forced ? p.alpha1 * std::cos(2.0 * std::numbers::pi * omega * t) : 0.0; };
  Trajectory tr;
  tr.times = Eigen::VectorXd::LinSpaced(n_times, 0.0, t_end);
  tr.states.resize(n_times, D);
  tr.params = Eigen::VectorXd::Constant(1, nu);
  tr.forcing_samples.resize(n_times, 1);
  Eigen::VectorXd v(D), next(D);
  for (int i = 0; i < D; ++i) {
    const double x = i * dx;
    v(i) = p.alpha1 * std::exp(-x * x / p.alpha2);
  }
  v(0) = forcing(0.0);
  v(D - 1) = 0.0;
  tr.states.row(0) = v.transpose();
  tr.forcing_samples(0, 0) = v(0);
  const double inv2dx = 1.0 / (2.0 * dx), invdx2 = 1.0 / (dx * dx);
  for (int j = 1; j < n_times; ++j) {
    const double t0 = tr.times(j - 1);
    const double span = tr.times(j) - t0;
    const int sub = static_cast<int>(std::ceil(span / dt - 1e-12));
    const double h = span / sub;
    for (int s = 0; s < sub; ++s) {
      for (int i = 1; i + 1 < D; ++i) {
        next(i) = v(i) + h * (-v(i) * (v(i + 1) - v(i - 1)) * inv2dx + nu * (v(i + 1) - 2.0 * v(i) + v(i - 1)) * invdx2);
      }
      next(0) = s + 1 == sub ? forcing(tr.times(j)) : forcing(t0 + (s + 1) * h);
      next(D - 1) = 0.0;
      v.swap(next);
    }
    if (!v.allFinite()) throw Error(ErrorCode::unstable_solver, "Burgers solution blew up");
    tr.states.row(j) = v.transpose();
    tr.forcing_samples(j, 0) = v(0);
  }
  return tr;
}

Dataset gen_burgers(const GeneratorSpec& spec, SplitTag split) {
  spec.validate();
  // A priori stability check over the viscosity range; the limit is smallest
  // at one of its ends.
  const double vmax = std::abs(spec.burgers.alpha1);
  const double limit = std::min(burgers_stable_dt(spec.D, spec.burgers.nu_min, vmax),
                                burgers_stable_dt(spec.D, spec.burgers.nu_max, vmax));
  if (spec.burgers.solver_dt > limit) {
    throw Error(ErrorCode::unstable_solver, "solver_dt " + std::to_string(spec.burgers.solver_dt) +
                                                " exceeds the stability limit " + std::to_string(limit));
  }
  Dataset data;
  data.split_tag = split;
  for (int i = 0; i < split_count(spec, split); ++i) {
    std::mt19937_64 rng = derive_rng(spec.seed, kGeneratorDomain, split_stream(split), static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> nu(spec.burgers.nu_min, spec.burgers.nu_max);
    std::uniform_real_distribution<double> om(spec.burgers.omega_min, spec.burgers.omega_max);
    const double nu_i = nu(rng);
    const double om_i = om(rng);
    BurgersParams p = spec.burgers;
    if (p.solver_dt <= 0.0) p.solver_dt = 0.5 * limit;
    Trajectory tr = burgers_trajectory(spec.D, nu_i, om_i, p, spec.n_times, spec.t_end);
    add_noise(tr.states, spec.noise_std, rng);
    data.trajectories.push_back(std::move(tr));
  }
  return data;
}

Dataset generate_split(const GeneratorSpec& spec, SplitTag split) {
  switch (spec.kind) {
    case GeneratorKind::ou:
      return gen_ou(spec, split);
    case GeneratorKind::oscillator_embedding:
      return gen_oscillator_embedding(spec, split);
    case GeneratorKind::burgers:
      return gen_burgers(spec, split);
  }
  throw Error(ErrorCode::schema_violation, "unknown generator kind");
}

std::array<Dataset, 3> generate_all(const GeneratorSpec& spec) {
  return {generate_split(spec, SplitTag::train), generate_split(spec, SplitTag::validation),
          generate_split(spec, SplitTag::test)};
}

}  // namespace sdrom
