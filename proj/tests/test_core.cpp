#include "sdrom/container.hpp"
#include "sdrom/core.hpp"
#include "sdrom/error.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace sdrom;

namespace {

Trajectory make_traj(int n, int D, int nf, int nmu, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Trajectory tr;
  tr.times = Eigen::VectorXd::LinSpaced(n, 0.0, 0.1 * (n - 1));
  tr.states = testutil::randn(n, D, rng);
  tr.params = testutil::randn(nmu, 1, rng);
  tr.forcing_samples = testutil::randn(n, nf, rng);
  return tr;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST(InterpolateForcing, ReproducesNodes) {
  Trajectory tr = make_traj(6, 2, 3, 1, 1);
  EXPECT_TRUE(interpolate_forcing(tr, tr.times(3)).isApprox(tr.forcing_samples.row(3).transpose()));
}

TEST(InterpolateForcing, MidpointIsAverage) {
  Trajectory tr = make_traj(6, 2, 3, 1, 2);
  Eigen::VectorXd mid = 0.5 * (tr.forcing_samples.row(0) + tr.forcing_samples.row(1)).transpose();
  EXPECT_TRUE(interpolate_forcing(tr, 0.5 * (tr.times(0) + tr.times(1))).isApprox(mid));
}

TEST(InterpolateForcing, ClampsOutsideRange) {
  Trajectory tr = make_traj(6, 2, 3, 1, 3);
  EXPECT_EQ(interpolate_forcing(tr, tr.times(5) + 1.0), tr.forcing_samples.row(5).transpose());
  EXPECT_EQ(interpolate_forcing(tr, -4.0), tr.forcing_samples.row(0).transpose());
}

TEST(InterpolateForcing, ContinuousAcrossNodes) {
  Trajectory tr = make_traj(8, 1, 2, 0, 4);
  for (int j = 1; j < 7; ++j) {
    const double t = tr.times(j);
    Eigen::VectorXd left = interpolate_forcing(tr, t - 1e-10);
    Eigen::VectorXd right = interpolate_forcing(tr, t + 1e-10);
    EXPECT_LT((left - right).norm(), 1e-7);
  }
}

TEST(Partition, FiveSamplesWindowThree) {
  Trajectory tr = make_traj(5, 1, 0, 0, 5);
  auto ws = partition_trajectory(tr, 3);
  ASSERT_EQ(ws.size(), 2u);
  EXPECT_EQ(ws[0].sample_indices, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(ws[1].sample_indices, (std::vector<int>{2, 3, 4}));
}

TEST(Partition, ShortLastWindow) {
  Trajectory tr = make_traj(4, 1, 0, 0, 6);
  auto ws = partition_trajectory(tr, 3);
  ASSERT_EQ(ws.size(), 2u);
  EXPECT_EQ(ws[1].sample_indices, (std::vector<int>{2, 3}));
}

TEST(Partition, SingleWindow) {
  Trajectory tr = make_traj(3, 1, 0, 0, 7);
  auto ws = partition_trajectory(tr, 3);
  ASSERT_EQ(ws.size(), 1u);
  EXPECT_EQ(ws[0].sample_indices, (std::vector<int>{0, 1, 2}));
}

TEST(Partition, RejectsBadWindowSize) {
  Trajectory tr = make_traj(4, 1, 0, 0, 8);
  EXPECT_EQ(code_of([&] { partition_trajectory(tr, 1); }), ErrorCode::invalid_window_size);
  EXPECT_EQ(code_of([&] { partition_trajectory(tr, 5); }), ErrorCode::invalid_window_size);
}

TEST(Partition, CoverageProperty) {
  for (int n = 2; n <= 40; ++n) {
    for (int M = 2; M <= n; ++M) {
      Trajectory tr = make_traj(n, 1, 0, 0, 9);
      auto ws = partition_trajectory(tr, M);
      ASSERT_EQ(ws.size(), count_windows(n, M));
      std::vector<int> hits(n, 0);
      for (std::size_t k = 0; k < ws.size(); ++k) {
        const auto& idx = ws[k].sample_indices;
        ASSERT_LE(ws[k].size(), M);
        ASSERT_GE(ws[k].size(), 2);
        for (std::size_t j = 1; j < idx.size(); ++j) ASSERT_EQ(idx[j], idx[j - 1] + 1);
        if (k > 0) ASSERT_EQ(ws[k - 1].last(), ws[k].first());
        for (int i : idx) ++hits[i];
      }
      for (int i = 0; i < n; ++i) {
        const bool boundary = i > 0 && i < n - 1 && i % (M - 1) == 0;
        EXPECT_EQ(hits[i], boundary ? 2 : 1) << "n=" << n << " M=" << M << " i=" << i;
      }
    }
  }
}

TEST(ErrorMetric, IdentityIsZero) {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd u = testutil::randn(5, 4, rng);
  EXPECT_TRUE(error_metric(u, u).isZero());
}

TEST(ErrorMetric, ZeroPredictionIsOne) {
  std::mt19937_64 rng(2);
  Eigen::MatrixXd u = testutil::randn(5, 4, rng);
  EXPECT_TRUE(error_metric(u, Eigen::MatrixXd::Zero(5, 4)).isApprox(Eigen::VectorXd::Ones(5)));
}

TEST(ErrorMetric, HandComputedNorms) {
  Eigen::MatrixXd truth(2, 2), pred(2, 2);
  truth << 3, 4, 3, 4;
  pred << 0, 0, 3, 0;
  Eigen::VectorXd eps = error_metric(truth, pred);
  EXPECT_DOUBLE_EQ(eps(0), 1.0);
  EXPECT_DOUBLE_EQ(eps(1), 0.8);
}

TEST(ErrorMetric, ZeroTrueRowIsUndefined) {
  Eigen::MatrixXd truth = Eigen::MatrixXd::Ones(2, 3);
  truth.row(1).setZero();
  EXPECT_EQ(code_of([&] { error_metric(truth, truth); }), ErrorCode::undefined_metric);
}

TEST(ErrorMetric, NumeratorLinearInPerturbationScale) {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd u = testutil::randn(4, 6, rng);
  Eigen::MatrixXd delta = testutil::randn(4, 6, rng);
  Eigen::VectorXd e1 = error_metric(u, u + delta);
  for (double c : {-3.0, 0.5, 2.0}) {
    EXPECT_TRUE(error_metric(u, u + c * delta).isApprox(std::abs(c) * e1, 1e-12));
  }
}

TEST(DatasetIo, RoundTripIsBitExact) {
  Dataset data;
  data.split_tag = SplitTag::validation;
  data.trajectories.push_back(make_traj(7, 5, 2, 3, 10));
  data.trajectories.push_back(make_traj(4, 5, 2, 3, 11));
  auto path = testutil::temp_path("roundtrip.sdc");
  write_dataset(path, data);
  Dataset back = read_dataset(path);
  ASSERT_EQ(back.trajectories.size(), 2u);
  EXPECT_EQ(back.split_tag, SplitTag::validation);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = data.trajectories[i];
    const auto& b = back.trajectories[i];
    EXPECT_TRUE(a.times == b.times);
    EXPECT_TRUE(a.states == b.states);
    EXPECT_TRUE(a.params == b.params);
    EXPECT_TRUE(a.forcing_samples == b.forcing_samples);
  }
  // Second round trip writes the same bytes.
  auto path2 = testutil::temp_path("roundtrip2.sdc");
  write_dataset(path2, back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
}

TEST(DatasetIo, ZeroForcingAndParamsRoundTrip) {
  Dataset data;
  data.trajectories.push_back(make_traj(5, 3, 0, 0, 12));
  auto path = testutil::temp_path("noforcing.sdc");
  write_dataset(path, data);
  Dataset back = read_dataset(path);
  EXPECT_EQ(back.forcing_dim(), 0);
  EXPECT_EQ(back.param_dim(), 0);
}

TEST(DatasetIo, ManifestDimensionMismatchDetected) {
  Dataset data;
  data.trajectories.push_back(make_traj(5, 9, 1, 1, 13));
  Container c;
  auto path = testutil::temp_path("mismatch.sdc");
  write_dataset(path, data);
  c = read_container(path);
  c.meta["D"] = 10;
  write_container(path, c);
  EXPECT_EQ(code_of([&] { read_dataset(path); }), ErrorCode::dimension_mismatch);
}

TEST(DatasetIo, TruncatedPayloadDetected) {
  Dataset data;
  data.trajectories.push_back(make_traj(5, 4, 1, 1, 14));
  auto path = testutil::temp_path("truncated.sdc");
  write_dataset(path, data);
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 16);
  EXPECT_EQ(code_of([&] { read_dataset(path); }), ErrorCode::truncated_payload);
}

TEST(DatasetIo, MalformedManifestDetected) {
  auto path = testutil::temp_path("garbage.sdc");
  {
    std::ofstream f(path, std::ios::binary);
    f << "{not json\n";
  }
  EXPECT_EQ(code_of([&] { read_dataset(path); }), ErrorCode::malformed_manifest);
}

TEST(DatasetIo, EmptyDatasetRejectedOnWrite) {
  Dataset data;
  EXPECT_EQ(code_of([&] { write_dataset(testutil::temp_path("empty.sdc"), data); }), ErrorCode::invalid_dataset);
}

TEST(DatasetIo, MissingFileIsMissingInput) {
  EXPECT_EQ(code_of([&] { read_dataset(testutil::temp_path("does_not_exist.sdc")); }), ErrorCode::missing_input);
}

TEST(Trajectory, NonIncreasingTimesRejected) {
  Trajectory tr = make_traj(4, 2, 0, 0, 15);
  tr.times(2) = tr.times(1);
  EXPECT_EQ(code_of([&] { tr.validate(); }), ErrorCode::invalid_dataset);
}
