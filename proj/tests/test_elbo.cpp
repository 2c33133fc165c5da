#include "sdrom/elbo.hpp"
#include "sdrom/encdec.hpp"
#include "sdrom/error.hpp"

#include "model_fixtures.hpp"
#include "quadrature.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace sdrom;

namespace {

// Dense reference: vec^{-1}((S (+) S)^{-1} vec(P - dS)) with S, dS, P diagonal.
Eigen::MatrixXd kronecker_sum_oracle(const Eigen::VectorXd& s, const Eigen::VectorXd& ds, const Eigen::VectorXd& psi2) {
  const Eigen::Index d = s.size();
  Eigen::MatrixXd S = s.asDiagonal();
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd ksum = Eigen::MatrixXd::Zero(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      ksum.block(i * d, j * d, d, d) += S(i, j) * I;
      ksum.block(i * d, j * d, d, d) += I(i, j) * S;
    }
  Eigen::MatrixXd rhs = psi2.asDiagonal();
  rhs -= Eigen::MatrixXd(ds.asDiagonal());
  Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(rhs.data(), d * d);
  Eigen::VectorXd x = ksum.fullPivLu().solve(v);
  return Eigen::Map<Eigen::MatrixXd>(x.data(), d, d);
}

ThetaTreatment treatment(TreatmentMode mode) {
  ThetaTreatment t;
  t.mode = mode;
  return t;
}

Window whole_window(const Trajectory& tr) {
  Window w;
  for (int j = 0; j < tr.length(); ++j) w.sample_indices.push_back(j);
  return w;
}

}  // namespace

TEST(BMatrix, Examples) {
  EXPECT_DOUBLE_EQ(b_matrix_diag(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Zero(1),
                                 Eigen::VectorXd::Constant(1, 4.0))(0),
                   1.0);
  EXPECT_DOUBLE_EQ(b_matrix_diag(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1))(0),
                   0.5);
  Eigen::VectorXd b = b_matrix_diag(Eigen::Vector2d(1, 2), Eigen::Vector2d(0.1, -0.2), Eigen::Vector2d(0.5, 0.4));
  EXPECT_NEAR(b(0), 0.2, 1e-15);
  EXPECT_NEAR(b(1), 0.15, 1e-15);
  Eigen::MatrixXd dense = kronecker_sum_oracle(Eigen::Vector2d(1, 2), Eigen::Vector2d(0.1, -0.2),
                                               Eigen::Vector2d(0.5, 0.4));
  EXPECT_NEAR(dense(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(dense(1, 1), 0.15, 1e-15);
}

TEST(BMatrix, MatchesDenseKroneckerSum) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> dim(1, 5);
  std::uniform_real_distribution<double> pos(0.1, 3.0);
  for (int k = 0; k < 50; ++k) {
    const int d = dim(rng);
    Eigen::VectorXd s(d), psi2(d);
    for (int i = 0; i < d; ++i) {
      s(i) = pos(rng);
      psi2(i) = pos(rng);
    }
    Eigen::VectorXd ds = testutil::randn(d, 1, rng);
    Eigen::MatrixXd dense = kronecker_sum_oracle(s, ds, psi2);
    Eigen::VectorXd b = b_matrix_diag(s, ds, psi2);
    EXPECT_LT((dense - Eigen::MatrixXd(b.asDiagonal())).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(BMatrix, RejectsNonPositiveVariance) {
  EXPECT_THROW(b_matrix_diag(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)), Error);
}

TEST(DriftResidual, VanishesForMomentConsistentLinearDrift) {
  const int d = 3;
  auto cfg = testutil::tiny_config(4, d);
  auto model = testutil::make_model(cfg, {}, Eigen::VectorXd::LinSpaced(4, 0, 0.3), 1);
  std::mt19937_64 rng(2);
  Eigen::VectorXd a = (testutil::randn(d, 1, rng).array().abs() + 0.2).matrix();
  Eigen::VectorXd b = testutil::randn(d, 1, rng);
  auto coef = model.params.block(kDriftCoef);
  coef.setZero();
  coef.col(0) = b;
  for (int i = 0; i < d; ++i) coef(i, 1 + i) = -a(i);
  const Eigen::VectorXd psi2 = model.dispersion_diag(model.params.values).array().square().matrix();
  std::uniform_real_distribution<double> pos(0.1, 2.0);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd m = testutil::randn(d, 1, rng);
    Eigen::VectorXd s(d);
    for (int i = 0; i < d; ++i) s(i) = pos(rng);
    Eigen::VectorXd dm = (-a.array() * m.array() + b.array()).matrix();
    Eigen::VectorXd ds = (-2.0 * a.array() * s.array() + psi2.array()).matrix();
    Eigen::VectorXd z = testutil::randn(d, 1, rng, 2.0);
    Eigen::VectorXd r = drift_residual(model, model.params.values, m, s, dm, ds, z, 0.3, {}, {});
    EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-10);
  }
  // Scalar OU: B reduces to the drift rate.
  Eigen::VectorXd s1 = Eigen::VectorXd::Constant(1, 0.8);
  const double a1 = 0.5, p1 = 1.0;
  EXPECT_NEAR(b_matrix_diag(s1, Eigen::VectorXd::Constant(1, -2 * a1 * 0.8 + p1), Eigen::VectorXd::Constant(1, p1))(0),
              a1, 1e-15);
}

TEST(DriftResidual, MeanSampleGivesDerivativeMinusDrift) {
  auto cfg = testutil::tiny_config(3, 2);
  auto model = testutil::make_model(cfg, {}, Eigen::VectorXd::LinSpaced(4, 0, 0.3), 3);
  Eigen::Vector2d m(0.3, -0.4), s(0.5, 1.5), dm(0.1, 0.2), ds(-0.3, 0.05);
  Eigen::VectorXd r = drift_residual(model, model.params.values, m, s, dm, ds, m, 0.0, {}, {});
  Eigen::MatrixXd coef = model.params.block(kDriftCoef);
  Eigen::VectorXd psi = coef.col(0) + coef.rightCols(2) * m;
  EXPECT_TRUE(r.isApprox(dm - psi, 1e-14));
}

TEST(DriftResidual, PiecewiseAssembly) {
  auto cfg = testutil::tiny_config(3, 2, 1, 1);
  cfg.drift.kind = DriftKind::mlp;
  cfg.drift.hidden = {7};
  auto model = testutil::make_model(cfg, {}, Eigen::VectorXd::LinSpaced(4, 0, 0.3), 4);
  std::mt19937_64 rng(5);
  Eigen::Vector2d m(0.3, -0.4), s(0.5, 1.5), dm(0.1, 0.2), ds(-0.3, 0.05), z(1.0, 0.2);
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(1, 0.7), f = Eigen::VectorXd::Constant(1, -0.2);
  Eigen::VectorXd r = drift_residual(model, model.params.values, m, s, dm, ds, z, 0.4, mu, f);
  Eigen::VectorXd x(1 + 2 + 1 + 2);
  x << z, mu, f, positional_time_encoding(0.4);
  // Manual 1-hidden-layer forward pass.
  Eigen::MatrixXd W0 = model.params.block("drift.L0.W"), W1 = model.params.block("drift.L1.W");
  Eigen::VectorXd b0 = model.params.block("drift.L0.b").transpose(), b1 = model.params.block("drift.L1.b").transpose();
  Eigen::VectorXd h = (W0 * x + b0).cwiseMax(0.0);
  Eigen::VectorXd psi = W1 * h + b1;
  Eigen::VectorXd psi2 = model.dispersion_diag(model.params.values).array().square().matrix();
  Eigen::VectorXd B = b_matrix_diag(s, ds, psi2);
  Eigen::VectorXd ref = B.cwiseProduct(m - z) + dm - psi;
  EXPECT_TRUE(r.isApprox(ref, 1e-13));
}

TEST(ResidualPenalty, Examples) {
  EXPECT_EQ(residual_penalty(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)), 0.0);
  Eigen::Vector3d r(1, 2, 3);
  EXPECT_DOUBLE_EQ(residual_penalty(r, Eigen::VectorXd::Ones(3)), 14.0);
  EXPECT_DOUBLE_EQ(residual_penalty(Eigen::Vector2d(1, 2), Eigen::Vector2d(4, 0.25)), 5.0);
}

// Step-by-step scalar trace of the window estimate for d = D = 1, M = 2,
// R = L = 1.
struct HandTrace {
  double we = 0.8, be = 0.1, lve = -1.0;
  double wphi = 1.5, bphi = 0.2, sf = 1.2, ell = 0.5, sig = 0.3;
  double wd = 1.3, bd = -0.2, lvd = -0.5;
  double c0 = 0.05, c1 = -0.7, disp = 0.4;
  double t1 = 0.1, t2 = 0.3, u1 = 0.6, u2 = 0.9;
  double gamma = 0.35, tau = 0.17;

  void apply(LatentSDEModel& m) const {
    m.params.values.setZero();
    m.params.block("enc.L0.W") << we;
    m.params.block("enc.L0.b") << be;
    m.params.block(kEncoderLogvar) << lve;
    m.params.block("kernel.phi.L0.W") << wphi;
    m.params.block("kernel.phi.L0.b") << bphi;
    m.params.block(kKernelLogSigmaF) << std::log(sf);
    m.params.block(kKernelLogEll) << std::log(ell);
    m.params.block(kKernelLogSigma) << std::log(sig);
    m.params.block("dec.L0.W") << wd;
    m.params.block("dec.L0.b") << bd;
    m.params.block(kDecoderLogvar) << lvd;
    m.params.block(kDriftCoef) << c0, c1;
    m.params.block(kDispersionLogDiag) << std::log(disp);
  }

  // Returns {loglik, residual} with the decoder log-variance given explicitly.
  std::pair<double, double> evaluate(double dec_logvar) const {
    const double p1 = wphi * t1 + bphi, p2 = wphi * t2 + bphi;
    auto k = [&](double a, double b) { return sf * std::exp(-(a - b) * (a - b) / (2 * ell * ell)); };
    const double a11 = k(p1, p1) + sig * sig, a22 = k(p2, p2) + sig * sig, a12 = k(p1, p2);
    const double det = a11 * a22 - a12 * a12;
    const double h1 = we * u1 + be, h2 = we * u2 + be;
    const double am1 = (a22 * h1 - a12 * h2) / det, am2 = (-a12 * h1 + a11 * h2) / det;
    const double as1 = (a22 * lve - a12 * lve) / det, as2 = (-a12 * lve + a11 * lve) / det;
    auto at = [&](double t, double& m, double& s, double& dm, double& ds) {
      const double p = wphi * t + bphi;
      const double k1 = k(p, p1), k2 = k(p, p2);
      const double kd1 = k1 * (-(p - p1) / (ell * ell)) * wphi, kd2 = k2 * (-(p - p2) / (ell * ell)) * wphi;
      m = k1 * am1 + k2 * am2;
      s = std::exp(k1 * as1 + k2 * as2);
      dm = kd1 * am1 + kd2 * am2;
      ds = s * (kd1 * as1 + kd2 * as2);
    };
    double loglik = 0.0;
    for (auto [t, u] : {std::pair{t1, u1}, std::pair{t2, u2}}) {
      double m, s, dm, ds;
      at(t, m, s, dm, ds);
      const double z = m + std::sqrt(s) * gamma;
      const double mean = wd * z + bd;
      loglik += -0.5 * ((u - mean) * (u - mean) / std::exp(dec_logvar) + dec_logvar +
                        std::log(2 * std::numbers::pi));
    }
    double m, s, dm, ds;
    at(tau, m, s, dm, ds);
    const double z = m + std::sqrt(s) * gamma;
    const double B = (disp * disp - ds) / (2 * s);
    const double r = B * (m - z) + dm - (c0 + c1 * z);
    const double residual = (t2 - t1) / 2.0 * r * r / (disp * disp);
    return {loglik, residual};
  }

  Trajectory trajectory() const {
    Trajectory tr;
    tr.times = Eigen::Vector2d(t1, t2);
    tr.states = Eigen::Vector2d(u1, u2);
    tr.params.resize(0);
    tr.forcing_samples.resize(2, 0);
    return tr;
  }

  WindowDraws draws(Eigen::Index n_xi, double xi) const {
    WindowDraws dr;
    dr.gamma = Eigen::MatrixXd::Constant(1, 1, gamma);
    dr.tau = Eigen::VectorXd::Constant(1, tau);
    dr.xi = Eigen::VectorXd::Constant(n_xi, xi);
    return dr;
  }
};

TEST(ElboWindow, MatchesHandTracePointEstimate) {
  HandTrace h;
  auto cfg = testutil::tiny_config(1, 1);
  LatentSDEModel model(cfg, treatment(TreatmentMode::point_estimate));
  h.apply(model);
  Trajectory tr = h.trajectory();
  ElboTerms terms = elbo_window_estimate(model, model.params.values, tr, whole_window(tr), h.draws(0, 0.0), 0.25);
  auto [ll, res] = h.evaluate(h.lvd);
  EXPECT_NEAR(terms.loglik, ll, 1e-12);
  EXPECT_NEAR(terms.residual, res, 1e-12);
  EXPECT_EQ(terms.kl, 0.0);
  EXPECT_NEAR(terms.elbo, ll - res, 1e-12);
}

TEST(ElboWindow, MatchesHandTraceMixedDecoderVariance) {
  HandTrace h;
  auto cfg = testutil::tiny_config(1, 1);
  ThetaTreatment tt = treatment(TreatmentMode::mixed);
  LatentSDEModel model(cfg, tt);
  ASSERT_EQ(model.variational_blocks(), std::vector<std::string>{kDecoderLogvar});
  h.apply(model);
  const double q_lv = -1.3, xi = 0.8, klw = 0.25;
  model.params.block(kDecoderLogvar + kQLogvarSuffix) << q_lv;
  Trajectory tr = h.trajectory();
  ElboTerms terms = elbo_window_estimate(model, model.params.values, tr, whole_window(tr), h.draws(1, xi), klw);
  const double lvd_tilde = h.lvd + std::exp(0.5 * q_lv) * xi;
  auto [ll, res] = h.evaluate(lvd_tilde);
  const double p_mean = std::log(1e-2), p_lv = 0.0;
  const double kl = 0.5 * (std::exp(q_lv - p_lv) + (h.lvd - p_mean) * (h.lvd - p_mean) / std::exp(p_lv) - 1.0 -
                           (q_lv - p_lv));
  EXPECT_NEAR(terms.loglik, ll, 1e-12);
  EXPECT_NEAR(terms.residual, res, 1e-12);
  EXPECT_NEAR(terms.kl, klw * kl, 1e-12);
  EXPECT_NEAR(terms.elbo, ll - res - klw * kl, 1e-12);
}

TEST(ElboWindow, PointEstimateHasNoKlTerm) {
  auto cfg = testutil::tiny_config(4, 2);
  Trajectory tr = testutil::smooth_trajectory(6, 4, 0, 0, 0.05, 2);
  auto model = testutil::make_model(cfg, treatment(TreatmentMode::point_estimate), tr.times.head(6), 3);
  std::mt19937_64 rng(4);
  Window w = whole_window(tr);
  WindowDraws dr = draw_window(model, tr, w, {2, 3}, rng);
  ElboTerms terms = elbo_window_estimate(model, model.params.values, tr, w, dr, 0.5);
  EXPECT_EQ(terms.kl, 0.0);
  EXPECT_NEAR(terms.elbo, terms.loglik - terms.residual, 1e-12);
}

TEST(ElboWindow, DispersionScalingOnlyChangesResidualTerm) {
  auto cfg = testutil::tiny_config(4, 2);
  Trajectory tr = testutil::smooth_trajectory(6, 4, 0, 0, 0.05, 5);
  auto model = testutil::make_model(cfg, treatment(TreatmentMode::point_estimate), tr.times, 6);
  std::mt19937_64 rng(7);
  Window w = whole_window(tr);
  WindowDraws dr = draw_window(model, tr, w, {2, 4}, rng);
  WindowGradient g1 = elbo_window_gradient(model, model.params.values, tr, w, dr, 1.0);
  Eigen::VectorXd shifted = model.params.values;
  const ParamBlock& disp = model.layout().at(kDispersionLogDiag);
  shifted.segment(disp.offset, disp.size()).array() += std::log(3.0);
  WindowGradient g2 = elbo_window_gradient(model, shifted, tr, w, dr, 1.0);
  EXPECT_EQ(g1.terms.loglik, g2.terms.loglik);
  EXPECT_NE(g1.terms.residual, g2.terms.residual);
  for (const auto& b : model.layout().blocks()) {
    if (theta_group_of(b.name) != "dec.mean" && b.name != kDecoderLogvar) continue;
    EXPECT_TRUE(g1.grad.segment(b.offset, b.size()).isApprox(g2.grad.segment(b.offset, b.size()), 1e-14)) << b.name;
  }
}

TEST(ElboWindow, DeltaPosteriorApproachesPointEstimate) {
  auto cfg = testutil::tiny_config(4, 2);
  cfg.drift.kind = DriftKind::mlp;
  cfg.drift.hidden = {6};
  cfg.decoder.hidden = {5};
  Trajectory tr = testutil::smooth_trajectory(7, 4, 0, 0, 0.05, 8);
  auto full = testutil::make_model(cfg, treatment(TreatmentMode::full_variational), tr.times, 9);
  LatentSDEModel point(cfg, treatment(TreatmentMode::point_estimate));
  point.params.values.resize(point.layout().size());
  for (const auto& b : point.layout().blocks()) point.params.block(b.name) = full.params.block(b.name);
  for (const auto& name : full.variational_blocks()) full.params.block(name + kQLogvarSuffix).setConstant(std::log(1e-12));
  std::mt19937_64 rng(10);
  Window w = whole_window(tr);
  WindowDraws dr = draw_window(full, tr, w, {3, 5}, rng);
  ElboTerms tf = elbo_window_estimate(full, full.params.values, tr, w, dr, 0.1);
  ElboTerms tp = elbo_window_estimate(point, point.params.values, tr, w, dr, 0.1);
  EXPECT_NEAR(tf.elbo + tf.kl, tp.elbo, 1e-4 * (1.0 + std::abs(tp.elbo)));
}

TEST(ElboWindow, NonFiniteTermIsNamed) {
  auto cfg = testutil::tiny_config(2, 1);
  Trajectory tr = testutil::smooth_trajectory(4, 2, 0, 0, 0.1, 11);
  auto model = testutil::make_model(cfg, {}, tr.times, 12);
  model.params.block(kDecoderLogvar).setConstant(-1e6);
  std::mt19937_64 rng(13);
  Window w = whole_window(tr);
  WindowDraws dr = draw_window(model, tr, w, {1, 1}, rng);
  try {
    elbo_window_estimate(model, model.params.values, tr, w, dr, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_finite_elbo);
    EXPECT_NE(std::string(e.what()).find("log-likelihood"), std::string::npos);
  }
}

TEST(ElboWindow, DrawsStayInsideWindowSpan) {
  auto cfg = testutil::tiny_config(2, 2);
  Trajectory tr = testutil::smooth_trajectory(20, 2, 0, 0, 0.1, 14);
  auto model = testutil::make_model(cfg, treatment(TreatmentMode::full_variational), tr.times.head(5), 15);
  auto windows = partition_trajectory(tr, 5);
  std::mt19937_64 rng(16);
  for (const auto& w : windows) {
    WindowDraws dr = draw_window(model, tr, w, {2, 50}, rng);
    EXPECT_GE(dr.tau.minCoeff(), tr.times(w.first()));
    EXPECT_LE(dr.tau.maxCoeff(), tr.times(w.last()));
    EXPECT_EQ(dr.xi.size(), model.variational_size());
    EXPECT_EQ(dr.gamma.rows(), 2);
  }
}

// Finite-difference agreement under common random numbers, all modes.
class ElboGradient : public ::testing::TestWithParam<TreatmentMode> {};

TEST_P(ElboGradient, MatchesFiniteDifferences) {
  auto cfg = testutil::tiny_config(5, 2, 1, 1);
  cfg.encoder.hidden = {6};
  cfg.decoder.hidden = {6};
  cfg.kernel.hidden = {5};
  cfg.drift.kind = DriftKind::mlp;
  cfg.drift.hidden = {6};
  ThetaTreatment tt = treatment(GetParam());
  tt.mixed_groups = {"dec.logvar", "disp"};
  Trajectory tr = testutil::smooth_trajectory(9, 5, 1, 1, 0.05, 21);
  auto model = testutil::make_model(cfg, tt, tr.times.head(5), 22);
  auto windows = partition_trajectory(tr, 5);
  std::mt19937_64 rng(23);
  for (const auto& w : windows) {
    WindowDraws dr = draw_window(model, tr, w, {2, 3}, rng);
    WindowGradient g = elbo_window_gradient(model, model.params.values, tr, w, dr, 0.3);
    Eigen::VectorXd fd = testutil::fd_gradient(
        [&](const Eigen::VectorXd& v) { return elbo_window_estimate(model, v, tr, w, dr, 0.3).elbo; },
        model.params.values);
    EXPECT_LT(testutil::scaled_err(g.grad, fd), 1e-5);
  }
}

INSTANTIATE_TEST_SUITE_P(AllModes, ElboGradient,
                         ::testing::Values(TreatmentMode::point_estimate, TreatmentMode::full_variational,
                                           TreatmentMode::mixed),
                         [](const auto& info) { return to_string(info.param); });

// Monte Carlo mean of the window estimate versus a quadrature reference:
// Gauss-Hermite over gamma and composite Simpson over tau.
TEST(ElboEstimator, ConvergesToQuadratureReference) {
  auto cfg = testutil::tiny_config(2, 1);
  cfg.drift.poly_order = 2;
  Trajectory tr = testutil::smooth_trajectory(5, 2, 0, 0, 0.1, 31);
  auto model = testutil::make_model(cfg, {}, tr.times, 32);
  Window w = whole_window(tr);
  const double t0 = tr.times(0), t1 = tr.times(4);

  auto gh = testutil::gauss_hermite(40);
  const int n_tau = 400;
  double ref_value = 0.0;
  Eigen::VectorXd ref_grad = Eigen::VectorXd::Zero(model.layout().size());
  for (std::size_t g = 0; g < gh.nodes.size(); ++g) {
    for (int k = 0; k <= n_tau; ++k) {
      const double tau = t0 + (t1 - t0) * k / n_tau;
      const double sw = (k == 0 || k == n_tau) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
      const double weight = gh.weights[g] * sw / (3.0 * n_tau);
      WindowDraws dr;
      dr.gamma = Eigen::MatrixXd::Constant(1, 1, gh.nodes[g]);
      dr.tau = Eigen::VectorXd::Constant(1, tau);
      WindowGradient wg = elbo_window_gradient(model, model.params.values, tr, w, dr, 1.0);
      ref_value += weight * wg.terms.elbo;
      ref_grad += weight * wg.grad;
    }
  }

  std::mt19937_64 rng(33);
  const int n = 10000;
  std::vector<double> vals;
  Eigen::VectorXd gsum = Eigen::VectorXd::Zero(ref_grad.size());
  Eigen::VectorXd gsq = Eigen::VectorXd::Zero(ref_grad.size());
  for (int k = 0; k < n; ++k) {
    WindowDraws dr = draw_window(model, tr, w, {1, 1}, rng);
    WindowGradient wg = elbo_window_gradient(model, model.params.values, tr, w, dr, 1.0);
    vals.push_back(wg.terms.elbo);
    gsum += wg.grad;
    gsq += wg.grad.cwiseProduct(wg.grad);
  }
  auto mean_se = [](const std::vector<double>& v, std::size_t count) {
    double m = 0, q = 0;
    for (std::size_t i = 0; i < count; ++i) m += v[i];
    m /= count;
    for (std::size_t i = 0; i < count; ++i) q += (v[i] - m) * (v[i] - m);
    return std::pair{m, std::sqrt(q / (count - 1) / count)};
  };
  auto [m_all, se_all] = mean_se(vals, n);
  auto [m_q, se_q] = mean_se(vals, n / 4);
  EXPECT_LT(std::abs(m_all - ref_value), 4.0 * se_all) << m_all << " vs " << ref_value;
  EXPECT_NEAR(se_q / se_all, 2.0, 0.3);

  Eigen::VectorXd gmean = gsum / n;
  Eigen::VectorXd gse = ((gsq / n - gmean.cwiseProduct(gmean)) / (n - 1)).cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < gmean.size(); ++i) {
    EXPECT_LE(std::abs(gmean(i) - ref_grad(i)), 4.5 * gse(i) + 1e-10) << "component " << i;
  }
}
