#include "sdrom/error.hpp"
#include "sdrom/netcore.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sdrom;

namespace {

ParamVector make_net(const MLPConfig& cfg, std::uint64_t seed) {
  ParamVector p;
  register_mlp(p.layout, "net", cfg);
  p.values = Eigen::VectorXd::Zero(p.layout.size());
  std::mt19937_64 rng(seed);
  init_mlp(p, "net", cfg, rng);
  // Random biases too, so kinks are not aligned with the origin.
  for (const auto& b : p.layout.blocks()) {
    if (b.name.back() == 'b') p.block(b.name) = testutil::randn(b.rows, b.cols, rng, 0.3);
  }
  return p;
}

}  // namespace

TEST(TimeEncoding, KnownValues) {
  auto e0 = positional_time_encoding(0.0);
  auto e1 = positional_time_encoding(0.25);
  auto e2 = positional_time_encoding(0.5);
  EXPECT_NEAR(e0(0), 0.0, 1e-15);
  EXPECT_NEAR(e0(1), 1.0, 1e-15);
  EXPECT_NEAR(e1(0), 1.0, 1e-15);
  EXPECT_NEAR(e1(1), 0.0, 1e-15);
  EXPECT_NEAR(e2(0), 0.0, 1e-15);
  EXPECT_NEAR(e2(1), -1.0, 1e-15);
}

TEST(MlpForward, ZeroWeightsGiveZero) {
  MLPConfig cfg{{3, 5, 2}};
  ParamVector p;
  register_mlp(p.layout, "net", cfg);
  p.values = Eigen::VectorXd::Zero(p.layout.size());
  EXPECT_TRUE(mlp_forward(p, "net", cfg, Eigen::Vector3d(1, 2, 3)).isZero());
}

TEST(MlpForward, IdentityLinearLayer) {
  MLPConfig cfg{{3, 3}};
  ParamVector p;
  register_mlp(p.layout, "net", cfg);
  p.values = Eigen::VectorXd::Zero(p.layout.size());
  p.block("net.L0.W") = Eigen::Matrix3d::Identity();
  Eigen::Vector3d x(0.5, -1.0, 2.0);
  EXPECT_EQ(mlp_forward(p, "net", cfg, x), Eigen::VectorXd(x));
}

TEST(MlpForward, HandEvaluatedOneTwoOne) {
  MLPConfig cfg{{1, 2, 1}};
  ParamVector p;
  register_mlp(p.layout, "net", cfg);
  p.values = Eigen::VectorXd::Zero(p.layout.size());
  p.block("net.L0.W") << 2.0, -1.0;
  p.block("net.L0.b") << 0.5, 0.25;
  p.block("net.L1.W") << 3.0, 4.0;
  p.block("net.L1.b") << -1.0;
  // hidden = relu(2*1+0.5, -1+0.25) = (2.5, 0); out = 3*2.5 + 0 - 1 = 6.5
  EXPECT_DOUBLE_EQ(mlp_forward(p, "net", cfg, Eigen::VectorXd::Ones(1))(0), 6.5);
}

TEST(MlpForward, TimeEncodingAppendsTwoInputs) {
  MLPConfig cfg{{2, 4, 1}};
  cfg.input_has_time_encoding = true;
  ParamVector p;
  register_mlp(p.layout, "net", cfg);
  EXPECT_EQ(p.layout.at("net.L0.W").cols, 4);
  p.values = Eigen::VectorXd::Zero(p.layout.size());
  std::mt19937_64 rng(1);
  init_mlp(p, "net", cfg, rng);
  Eigen::Vector2d x(0.3, -0.2);
  // Periodic in t with period 1.
  EXPECT_NEAR((mlp_forward(p, "net", cfg, x, 0.3) - mlp_forward(p, "net", cfg, x, 1.3)).norm(), 0.0, 1e-12);
}

TEST(MlpForward, ShapeMismatchThrows) {
  MLPConfig cfg{{3, 2}};
  ParamVector p;
  register_mlp(p.layout, "net", cfg);
  p.values = Eigen::VectorXd::Zero(p.layout.size());
  EXPECT_THROW(mlp_forward(p, "net", cfg, Eigen::Vector2d(1, 2)), Error);
}

TEST(MlpForward, PiecewiseLinearAlongDirection) {
  MLPConfig cfg{{4, 16, 16, 3}};
  ParamVector p = make_net(cfg, 11);
  std::mt19937_64 rng(12);
  Eigen::VectorXd x = testutil::randn(4, 1, rng);
  Eigen::VectorXd dir = testutil::randn(4, 1, rng);
  const double eps = 1e-7;
  Eigen::VectorXd f0 = mlp_forward(p, "net", cfg, x);
  Eigen::VectorXd d1 = mlp_forward(p, "net", cfg, x + eps * dir) - f0;
  Eigen::VectorXd d2 = mlp_forward(p, "net", cfg, x + 2 * eps * dir) - f0;
  EXPECT_LT((d2 - 2.0 * d1).norm(), 1e-12 * (1.0 + d2.norm()) + 1e-14);
}

TEST(MlpForward, LayoutRoundTripPreservesOutputs) {
  MLPConfig cfg{{3, 8, 2}};
  ParamVector p = make_net(cfg, 21);
  ParamVector q;
  register_mlp(q.layout, "net", cfg);
  q.values = Eigen::VectorXd::Zero(q.layout.size());
  for (const auto& b : p.layout.blocks()) q.block(b.name) = p.block(b.name);
  EXPECT_EQ(p.values, q.values);
  Eigen::Vector3d x(0.1, 0.2, -0.7);
  EXPECT_EQ(mlp_forward(p, "net", cfg, x), mlp_forward(q, "net", cfg, x));
  EXPECT_EQ(p.layout.size(), mlp_param_count(cfg));
}

TEST(MlpSlope, MatchesFiniteDifferences) {
  MLPConfig cfg{{1, 12, 12, 1}};
  ParamVector p = make_net(cfg, 31);
  ad::Tape tape(false);
  FlatBlocks src(tape, p.layout, p.values);
  Eigen::VectorXd ts = Eigen::VectorXd::LinSpaced(7, -1.0, 2.0);
  auto vs = mlp_forward_with_slope(src, "net", cfg, tape.constant(ts));
  for (Eigen::Index i = 0; i < ts.size(); ++i) {
    const double h = 1e-6;
    const double fp = mlp_forward(p, "net", cfg, Eigen::VectorXd::Constant(1, ts(i) + h))(0);
    const double fm = mlp_forward(p, "net", cfg, Eigen::VectorXd::Constant(1, ts(i) - h))(0);
    EXPECT_NEAR(vs.slope.value()(i, 0), (fp - fm) / (2 * h), 1e-6);
  }
}

TEST(GradScalar, SquaredNorm) {
  Eigen::VectorXd p(3);
  p << 1.0, 2.0, -3.0;
  auto r = grad_scalar([](ad::Tape&, const ad::Var& v) { return ad::sum(ad::square(v)); }, p);
  EXPECT_DOUBLE_EQ(r.value, 14.0);
  EXPECT_TRUE(r.grad.isApprox(2.0 * p));
}

TEST(GradScalar, Product) {
  Eigen::VectorXd p(2);
  p << 2.0, 3.0;
  auto r = grad_scalar([](ad::Tape&, const ad::Var& v) { return ad::rows(v, 0, 1) * ad::rows(v, 1, 1); }, p);
  EXPECT_DOUBLE_EQ(r.grad(0), 3.0);
  EXPECT_DOUBLE_EQ(r.grad(1), 2.0);
}

TEST(GradScalar, NonFiniteLossThrows) {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(1, -1.0);
  try {
    grad_scalar([](ad::Tape&, const ad::Var& v) { return ad::sum(ad::log(v)); }, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_finite_gradient);
  }
}

// Finite-difference agreement on random small networks, 20 seeds.
TEST(GradScalar, RandomNetsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    MLPConfig cfg{{3, 6, 5, 2}};
    cfg.input_has_time_encoding = seed % 2 == 0;
    ParamVector p = make_net(cfg, seed + 100);
    ASSERT_LE(p.layout.size(), 200);
    Eigen::MatrixXd x = testutil::randn(4, 3, rng);
    Eigen::VectorXd t = testutil::randn(4, 1, rng);
    Eigen::MatrixXd y = testutil::randn(4, 2, rng);
    auto eval = [&](ad::Tape& tape, const Eigen::VectorXd& values, ad::Var* flat) {
      FlatBlocks src(tape, p.layout, values);
      if (flat != nullptr) *flat = src.flat();
      ad::Var out = mlp_forward(src, "net", cfg, tape.constant(x), &t);
      return ad::sum(ad::square(out - tape.constant(y)));
    };
    ad::Tape tape;
    ad::Var flat;
    ad::Var out = eval(tape, p.values, &flat);
    tape.backward(out);
    Eigen::VectorXd g = tape.grad(flat).col(0);
    Eigen::VectorXd fd = testutil::fd_gradient(
        [&](const Eigen::VectorXd& v) {
          ad::Tape t2(false);
          return eval(t2, v, nullptr).scalar();
        },
        p.values);
    EXPECT_LT(testutil::max_rel_err(g, fd), 1e-5) << "seed " << seed;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState s = AdamState::zeros(1);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  adam_step(s, p, Eigen::VectorXd::Ones(1), 1e-3);
  EXPECT_NEAR(p(0), -1e-3, 1e-10);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  AdamState s = AdamState::zeros(3);
  Eigen::VectorXd p(3);
  p << 1, 2, 3;
  Eigen::VectorXd p0 = p;
  for (int k = 0; k < 5; ++k) adam_step(s, p, Eigen::VectorXd::Zero(3), 1e-2);
  EXPECT_EQ(p, p0);
}

// Three steps on f(p) = p^2 / 2 from p = 1; the reference re-derives the
// bias-corrected recurrences in scalar form.
TEST(Adam, MatchesHandSteppedTrace) {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0, x = 1.0;
  std::vector<double> expected;
  for (int k = 1; k <= 3; ++k) {
    double g = x;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mh = m / (1 - std::pow(b1, k));
    double vh = v / (1 - std::pow(b2, k));
    x -= lr * mh / (std::sqrt(vh) + eps);
    expected.push_back(x);
  }
  EXPECT_NEAR(expected[0], 0.9, 1e-9);
  AdamState s = AdamState::zeros(1);
  Eigen::VectorXd p = Eigen::VectorXd::Ones(1);
  for (int k = 0; k < 3; ++k) {
    adam_step(s, p, p, lr);
    EXPECT_NEAR(p(0), expected[k], 1e-14);
  }
}

TEST(Adam, NonFiniteGradientRejected) {
  AdamState s = AdamState::zeros(1);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  EXPECT_THROW(adam_step(s, p, Eigen::VectorXd::Constant(1, NAN), 1e-3), Error);
}

TEST(LrSchedule, DecaysEveryTwoThousandIterations) {
  EXPECT_DOUBLE_EQ(lr_schedule(0, 1e-3), 1e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(1999, 1e-3), 1e-3);
  EXPECT_NEAR(lr_schedule(2000, 1e-3), 0.9e-3, 1e-18);
  EXPECT_NEAR(lr_schedule(4000, 1e-3), 0.81e-3, 1e-18);
}
