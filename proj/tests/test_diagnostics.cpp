#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bnode/diagnostics.hpp"
#include "support.hpp"

using namespace bnode;
using bnode::testing::random_vector;

namespace {

Vector ar1(double phi, long n, std::uint64_t seed) {
  const Vector e = random_vector(n, seed);
  Vector x(n);
  x[0] = e[0] / std::sqrt(1.0 - phi * phi);
  for (long i = 1; i < n; ++i) x[i] = phi * x[i - 1] + e[i];
  return x;
}

Chain chain_of(const std::vector<Vector>& samples) {
  Chain c;
  c.samples = samples;
  c.log_densities.assign(samples.size(), 0.0);
  return c;
}

}  // namespace

TEST(Autocorrelation, LagZeroIsOne) {
  const Vector x = random_vector(50, 1) + Vector::LinSpaced(50, 0.0, 3.0);
  EXPECT_EQ(autocorrelation(x, 10)[0], 1.0);
}

TEST(Autocorrelation, IidIsNearZero) {
  const Vector rho = autocorrelation(random_vector(100000, 2), 20);
  for (int l = 1; l <= 20; ++l) EXPECT_LT(std::abs(rho[l]), 0.02) << l;
}

TEST(Autocorrelation, Ar1MatchesClosedForm) {
  const Vector rho = autocorrelation(ar1(0.8, 100000, 3), 10);
  for (int l = 0; l <= 10; ++l) EXPECT_NEAR(rho[l], std::pow(0.8, l), 0.03) << l;
}

TEST(Autocorrelation, ReversalSymmetric) {
  const Vector x = ar1(0.5, 500, 4);
  const Vector rev = x.reverse();
  EXPECT_TRUE(autocorrelation(x, 30).isApprox(autocorrelation(rev, 30), 1e-12));
}

TEST(Autocorrelation, Errors) {
  EXPECT_THROW(autocorrelation(Vector::Constant(20, 1.5), 5), ZeroVariance);
  EXPECT_THROW(autocorrelation(random_vector(5, 1), 5), DimMismatch);
}

TEST(Ess, IidNearN) {
  const double ess = effective_sample_size(random_vector(1000, 5));
  EXPECT_GE(ess, 850.0);
  EXPECT_LE(ess, 1050.0);
}

TEST(Ess, Ar1MatchesAnalytic) {
  const double expected = 100000.0 * 0.2 / 1.8;
  for (std::uint64_t seed : {6, 7, 8, 9, 10})
    EXPECT_NEAR(effective_sample_size(ar1(0.8, 100000, seed)), expected, 0.1 * expected) << seed;
}

TEST(Ess, BoundedAndErrors) {
  // Strongly anticorrelated series would give ESS >> n without the guard.
  Vector alt(200);
  for (Index i = 0; i < alt.size(); ++i) alt[i] = (i % 2 == 0 ? 1.0 : -1.0) + 0.01 * std::sin(0.1 * i);
  const double ess = effective_sample_size(alt);
  EXPECT_GT(ess, 0.0);
  EXPECT_LE(ess, 1.05 * 200.0);
  EXPECT_THROW(effective_sample_size(Vector::Constant(30, 2.0)), ZeroVariance);
  EXPECT_THROW(effective_sample_size(random_vector(9, 1)), DimMismatch);
}

TEST(Summary, MeansMatchArithmeticMeans) {
  std::vector<Vector> s;
  for (std::uint64_t k = 0; k < 300; ++k) s.push_back(random_vector(4, 100 + k) + pack({1, 2, 3, 4}));
  Chain c = chain_of(s);
  c.stats.divergences = 3;
  const ChainSummary sum = summarize(c, 5);
  Vector mean = Vector::Zero(4);
  for (const Vector& v : s) mean += v;
  mean /= 300.0;
  EXPECT_LT((sum.mean - mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(sum.autocorr.rows(), 4);
  EXPECT_EQ(sum.autocorr.cols(), 6);
  EXPECT_EQ(sum.divergences, 3);
  for (Index p = 0; p < 4; ++p) {
    EXPECT_EQ(sum.autocorr(p, 0), 1.0);
    EXPECT_GT(sum.ess[p], 0.0);
    EXPECT_LE(sum.ess[p], 1.05 * 300.0);
  }
  EXPECT_EQ(summarize(c, 5, 2).mean.size(), 2);
  EXPECT_EQ(chain_matrix(c).col(2)[7], s[7][2]);
}

TEST(MapDistance, Examples) {
  const Vector map = pack({1.0, -1.0, 0.5});
  EXPECT_EQ(map_distance_trace(chain_of({map, map, map}), map), Vector::Zero(3));
  const Vector shifted = map + Vector::Unit(3, 0);
  EXPECT_EQ(map_distance_trace(chain_of({shifted}), map), pack({1.0}));
  EXPECT_THROW(map_distance_trace(chain_of({map}), pack({1.0})), DimMismatch);
}

TEST(Histogram, DensityIntegratesToOne) {
  const Histogram h = histogram(random_vector(5000, 9));
  ASSERT_EQ(h.counts.size(), 50u);
  ASSERT_EQ(h.edges.size(), 51u);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), 0L), 5000);
  double area = 0.0;
  for (std::size_t b = 0; b < h.density.size(); ++b) area += h.density[b] * (h.edges[b + 1] - h.edges[b]);
  EXPECT_NEAR(area, 1.0, 1e-12);
  const Histogram small = histogram(random_vector(40, 10));
  EXPECT_EQ(std::accumulate(small.counts.begin(), small.counts.end(), 0L), 40);
}
