#include <gtest/gtest.h>

#include <cmath>

#include "fvforge/error.hpp"
#include "fvforge/fisher.hpp"
#include "support.hpp"

using namespace fvforge;

namespace {

double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(EncodeFv, LengthIsTwoKd) {
  std::mt19937_64 rng(1);
  const GmmModel m = testing_support::random_gmm(rng, 3, 5);
  const FisherVector fv = encode_fv(m, testing_support::random_descriptors(rng, 7, 5));
  EXPECT_EQ(fv.size(), 30u);
  EXPECT_EQ(fv.applied(), 0);
}

TEST(EncodeFv, DescriptorsAtSeparatedMeansGiveZeroFirstOrder) {
  const GmmModel m(3, 2, {1.0 / 3, 1.0 / 3, 1.0 / 3}, {-100, 0, 0, 100, 100, 0}, {1, 1, 1, 1, 1, 1});
  const FisherVector fv = encode_fv(m, DescriptorSet(2, {-100, 0, 0, 100, 100, 0}));
  for (std::size_t k = 0; k < 3; ++k)
    for (double u : fv.u(k)) EXPECT_NEAR(u, 0.0, 1e-6);
}

TEST(EncodeFv, StandardNormalSingleDescriptor) {
  const GmmModel m(1, 3, {1.0}, {0, 0, 0}, {1, 1, 1});
  const FisherVector fv = encode_fv(m, DescriptorSet(3, {0.5, -2.0, 3.0}));
  const double x[3] = {0.5, -2.0, 3.0};
  for (int j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(fv.u(0)[j], x[j]);
    EXPECT_DOUBLE_EQ(fv.v(0)[j], (x[j] * x[j] - 1.0) / std::sqrt(2.0));
  }
}

TEST(EncodeFv, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = testing_support::between(rng, 1, 4);
    const std::size_t d = testing_support::between(rng, 1, 8);
    const std::size_t n = testing_support::between(rng, 1, 50);
    const GmmModel m = testing_support::random_gmm(rng, k, d);
    const DescriptorSet x = testing_support::random_descriptors(rng, n, d);
    const auto expect = oracle::fisher(testing_support::to_oracle(m), testing_support::to_rows(x));
    for (Exec e : {Exec::serial, Exec::parallel}) {
      const FisherVector fv = encode_fv(m, x, e);
      for (std::size_t i = 0; i < fv.size(); ++i) EXPECT_NEAR(fv.values()[i], expect[i], 1e-8);
    }
  }
}

TEST(EncodeFv, DuplicatingDescriptorsLeavesEncodingUnchanged) {
  std::mt19937_64 rng(3);
  const GmmModel m = testing_support::random_gmm(rng, 4, 6);
  const DescriptorSet x = testing_support::random_descriptors(rng, 33, 6);
  const std::vector<DescriptorSet> twice{x, x};
  const FisherVector a = encode_fv(m, x), b = encode_fv(m, concat(twice));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-10);
}

TEST(EncodeFv, Errors) {
  std::mt19937_64 rng(4);
  const GmmModel m = testing_support::random_gmm(rng, 2, 3);
  EXPECT_THROW(encode_fv(m, testing_support::random_descriptors(rng, 4, 2)), Error);
  EXPECT_THROW(encode_fv(m, DescriptorSet(3, {})), Error);
}

TEST(IntraNormalize, SingleNonzeroBlock) {
  std::vector<double> v(12, 0.0);
  v[3] = 3;
  v[4] = 4;
  const FisherVector out = intra_normalize(FisherVector(2, 3, v));
  EXPECT_DOUBLE_EQ(out.v(0)[0], 0.6);
  EXPECT_DOUBLE_EQ(out.v(0)[1], 0.8);
  for (double x : out.u(0)) EXPECT_EQ(x, 0.0);
  for (double x : out.u(1)) EXPECT_EQ(x, 0.0);
  EXPECT_TRUE(out.applied() & kNormIntra);
}

TEST(IntraNormalize, ScaleInvariantAndUnitBlocks) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto v = testing_support::normals(rng, 2 * 3 * 4);
    std::vector<double> big(v);
    for (double& x : big) x *= 10;
    const FisherVector a = intra_normalize(FisherVector(3, 4, v));
    const FisherVector b = intra_normalize(FisherVector(3, 4, big));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-15);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(norm(a.u(k)), 1.0, 1e-9);
      EXPECT_NEAR(norm(a.v(k)), 1.0, 1e-9);
    }
    const FisherVector g = intra_normalize(FisherVector(3, 4, v), IntraBlocks::per_gaussian);
    for (std::size_t k = 0; k < 3; ++k)
      EXPECT_NEAR(norm(g.values().subspan(2 * k * 4, 8)), 1.0, 1e-9);
  }
}

TEST(IntraNormalize, SecondApplicationRejected) {
  const FisherVector once = intra_normalize(FisherVector(1, 1, {1.0, 2.0}));
  EXPECT_THROW(intra_normalize(once), Error);
}

TEST(PowerL2, HandExample) {
  const GlobalVector out = power_l2_normalize(GlobalVector({1.0, -4.0}));
  EXPECT_DOUBLE_EQ(out[0], 1.0 / std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(out[1], -2.0 / std::sqrt(5.0));
}

TEST(PowerL2, ZeroStaysZero) {
  EXPECT_EQ(power_l2_normalize(GlobalVector({0.0, 0.0, 0.0})), GlobalVector({0.0, 0.0, 0.0}));
  const FisherVector z = power_l2_normalize(FisherVector(1, 2, {0, 0, 0, 0}));
  for (double x : z.values()) EXPECT_EQ(x, 0.0);
}

TEST(PowerL2, RandomUnitNormAndNotIdempotent) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const GlobalVector v(testing_support::normals(rng, 64));
    const GlobalVector once = power_l2_normalize(v);
    EXPECT_NEAR(norm(once.values()), 1.0, 1e-9);
    const GlobalVector twice = power_l2_normalize(once);
    double diff = 0;
    for (std::size_t i = 0; i < 64; ++i) diff += std::abs(twice[i] - once[i]);
    EXPECT_GT(diff, 1e-6);
  }
}

TEST(PowerL2, IntraThenPowerIsUnitNorm) {
  std::mt19937_64 rng(7);
  const GmmModel m = testing_support::random_gmm(rng, 4, 3);
  const FisherVector fv = power_l2_normalize(intra_normalize(encode_fv(m, testing_support::random_descriptors(rng, 20, 3))));
  EXPECT_NEAR(norm(fv.values()), 1.0, 1e-12);
  EXPECT_EQ(fv.applied(), kNormIntra | kNormPower | kNormL2);
}

TEST(L2Normalize, HandExampleAndIdempotence) {
  const GlobalVector out = l2_normalize(GlobalVector({3.0, 4.0}));
  EXPECT_DOUBLE_EQ(out[0], 0.6);
  EXPECT_DOUBLE_EQ(out[1], 0.8);
  const GlobalVector again = l2_normalize(out);
  EXPECT_NEAR(again[0], out[0], 1e-12);
  EXPECT_NEAR(again[1], out[1], 1e-12);
  EXPECT_EQ(l2_normalize(GlobalVector({0.0})), GlobalVector({0.0}));
}

TEST(L2Normalize, LongRandomVectorIsUnit) {
  std::mt19937_64 rng(8);
  const GlobalVector v(testing_support::normals(rng, 4096, 3.0));
  const GlobalVector u = l2_normalize(v);
  EXPECT_NEAR(norm(u.values()), 1.0, 1e-9);
  const GlobalVector uu = l2_normalize(u);
  for (std::size_t i = 0; i < 4096; ++i) EXPECT_NEAR(uu[i], u[i], 1e-12);
}

TEST(FvSumPool, SumsViews) {
  const FisherVector a(1, 1, {1, 2}), b(1, 1, {3, 4});
  const std::vector<FisherVector> views{a, b};
  const FisherVector s = sum_pool(views);
  EXPECT_EQ(s.values()[0], 4.0);
  EXPECT_EQ(s.values()[1], 6.0);
  EXPECT_THROW(sum_pool(std::vector<FisherVector>{a, FisherVector(2, 1, {1, 2, 3, 4})}), Error);
}
