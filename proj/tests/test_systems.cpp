#include <gtest/gtest.h>

#include <cmath>

#include "bnode/systems.hpp"

using namespace bnode;

namespace {

SystemSpec make_spec(SystemKind kind, Vector u0, TimeGrid grid, double noise = 0.0) {
  SystemSpec s;
  s.kind = kind;
  s.params = SystemSpec::default_params(kind);
  s.u0 = std::move(u0);
  s.grid = std::move(grid);
  s.noise_sigma = noise;
  return s;
}

}  // namespace

TEST(Spiral, RhsExamples) {
  const SpiralParams p{0.1, 2.0};
  const Vector a = rhs_spiral(p, pack({1.0, 0.0}));
  EXPECT_DOUBLE_EQ(a[0], -0.1);
  EXPECT_DOUBLE_EQ(a[1], -2.0);
  EXPECT_EQ(rhs_spiral(p, pack({0.0, 0.0})), Vector::Zero(2));
  const Vector b = rhs_spiral(p, pack({0.0, 1.0}));
  EXPECT_DOUBLE_EQ(b[0], 2.0);
  EXPECT_DOUBLE_EQ(b[1], -0.1);
}

TEST(LotkaVolterra, RhsExamples) {
  const LotkaVolterraParams p{1.5, 1.0, 3.0, 1.0};
  const Vector a = rhs_lotka_volterra(p, pack({1.0, 1.0}));
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 2.0);
  EXPECT_EQ(rhs_lotka_volterra(p, pack({0.0, 0.0})), Vector::Zero(2));
  EXPECT_NEAR(rhs_lotka_volterra(p, pack({1.0 / 3.0, 1.5})).norm(), 0.0, 1e-15);
}

TEST(Seir, RhsExamples) {
  const SeirParams p{0.5, 0.1, 0.1};
  EXPECT_EQ(rhs_seir(p, pack({0.7, 0.0, 0.0, 0.3})), Vector::Zero(4));
  const Vector d = rhs_seir(p, pack({0.99, 0.01, 0.0, 0.0}));
  EXPECT_NEAR(d[0], 0.0, 1e-18);
  EXPECT_NEAR(d[1], -0.001, 1e-15);
  EXPECT_NEAR(d[2], 0.001, 1e-15);
  EXPECT_NEAR(d[3], 0.0, 1e-18);
  for (int k = 0; k < 20; ++k) {
    const Vector u = Vector::Random(4).cwiseAbs();
    EXPECT_NEAR(rhs_seir(p, u).sum(), 0.0, 1e-15);
  }
}

TEST(Seir, TrajectoryConservesPopulation) {
  const Dataset d = generate_dataset(
      make_spec(SystemKind::Seir, pack({0.99, 0.01, 0.0, 0.0}), TimeGrid::uniform(0, 100, 200, 101)),
      1);
  for (const Vector& u : d.truth.states) EXPECT_NEAR(u.sum(), 1.0, 1e-8);
}

TEST(LotkaVolterra, TrajectoryStaysPositive) {
  const Dataset d = generate_dataset(
      make_spec(SystemKind::LotkaVolterra, pack({1.0, 1.0}), TimeGrid::uniform(0, 10, 400, 401)), 1);
  for (const Vector& u : d.truth.states) EXPECT_GT(u.minCoeff(), 0.0);
}

TEST(LotkaVolterra, OrbitMeanNearEquilibrium) {
  const Dataset d = generate_dataset(
      make_spec(SystemKind::LotkaVolterra, pack({1.0, 1.0}), TimeGrid::uniform(0, 10, 1000, 1001)),
      1);
  const auto& s = d.truth.states;
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < s.size(); ++i)
    if (s[i][0] > s[i - 1][0] && s[i][0] >= s[i + 1][0]) peaks.push_back(i);
  ASSERT_GE(peaks.size(), 2u);
  double mean = 0.0;
  for (std::size_t i = peaks[0]; i < peaks[1]; ++i) mean += s[i][0];
  mean /= static_cast<double>(peaks[1] - peaks[0]);
  EXPECT_NEAR(mean, 1.0 / 3.0, 0.2 / 3.0);
}

TEST(Spiral, MovesInwardOverARevolution) {
  const Dataset d = generate_dataset(
      make_spec(SystemKind::Spiral, pack({2.0, 0.0}), TimeGrid::uniform(0, 25, 2500, 2501)), 1);
  const auto& s = d.truth.states;
  // First return to the positive u1 axis.
  std::size_t back = 0;
  for (std::size_t i = 1; i < s.size() && back == 0; ++i)
    if (s[i - 1][1] < 0.0 && s[i][1] >= 0.0) back = i;
  ASSERT_GT(back, 0u);
  EXPECT_LT(s[back].norm(), s.front().norm());
}

TEST(Dataset, NoiseFreeObservedEqualsTruth) {
  const Dataset d = generate_dataset(
      make_spec(SystemKind::Spiral, pack({2.0, 0.0}), TimeGrid::uniform(0, 1.5, 60, 31)), 3);
  ASSERT_EQ(d.truth.states.size(), 31u);
  for (std::size_t i = 0; i < d.truth.states.size(); ++i)
    EXPECT_EQ(d.truth.states[i], d.observed.states[i]);
  EXPECT_EQ(d.truth.grid, d.observed.grid);
}

TEST(Dataset, SeededNoise) {
  const SystemSpec spec =
      make_spec(SystemKind::LotkaVolterra, pack({1.0, 1.0}), TimeGrid::uniform(0, 10, 200, 101), 0.05);
  const Dataset a = generate_dataset(spec, 4);
  const Dataset b = generate_dataset(spec, 4);
  const Dataset c = generate_dataset(spec, 5);
  double sq = 0.0;
  for (std::size_t i = 0; i < a.observed.states.size(); ++i) {
    EXPECT_EQ(a.observed.states[i], b.observed.states[i]);
    sq += (a.observed.states[i] - a.truth.states[i]).squaredNorm();
  }
  EXPECT_NE(a.observed.states[5], c.observed.states[5]);
  EXPECT_NEAR(std::sqrt(sq / 202.0), 0.05, 0.01);
}

TEST(Dataset, TruthUsesRefinedGrid) {
  SystemSpec spec =
      make_spec(SystemKind::LotkaVolterra, pack({1.0, 1.0}), TimeGrid::uniform(0, 10, 20, 11));
  const Dataset coarse_refined = generate_dataset(spec, 1);
  spec.grid = TimeGrid::uniform(0, 10, 200, 11);
  spec.refine = 1;
  const Dataset fine = generate_dataset(spec, 1);
  for (std::size_t i = 0; i < fine.truth.states.size(); ++i)
    EXPECT_EQ(coarse_refined.truth.states[i], fine.truth.states[i]);
}

TEST(SystemSpec, Validation) {
  SystemSpec s = make_spec(SystemKind::Seir, pack({0.99, 0.01, 0.0}), TimeGrid::uniform(0, 1, 2, 2));
  EXPECT_THROW(s.validate(), ConfigError);
  s.u0 = pack({0.99, -0.01, 0.0, 0.0});
  EXPECT_THROW(s.validate(), ConfigError);
  s.u0 = pack({0.99, 0.01, 0.0, 0.0});
  EXPECT_NO_THROW(s.validate());
  s.params["delta"] = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s.params.erase("delta");
  s.noise_sigma = -1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(parse_system_kind("lorenz"), ConfigError);
}
