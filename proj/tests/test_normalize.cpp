#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fvforge/error.hpp"
#include "fvforge/normalize.hpp"
#include "support.hpp"

using namespace fvforge;
using testing_support::random_map;

namespace {

FeatureMap scaled(const FeatureMap& m, double a) {
  std::vector<double> v(m.values().begin(), m.values().end());
  for (double& x : v) x *= a;
  return FeatureMap(m.height(), m.width(), m.channels(), v);
}

}  // namespace

TEST(SpatialNormalize, ConstantChannelBecomesOne) {
  std::vector<double> v;
  for (int p = 0; p < 4; ++p) {
    v.push_back(4.0);
    v.push_back(static_cast<double>(p));
  }
  const FeatureMap out = spatial_normalize(FeatureMap(2, 2, 2, v));
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) EXPECT_EQ(out.at(y, x, 0), 1.0);
  EXPECT_DOUBLE_EQ(out.at(1, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(out.at(0, 1, 1), 1.0 / 3.0);
}

TEST(SpatialNormalize, ZeroMapStaysZero) {
  const FeatureMap z(3, 3, 2, std::vector<double>(18, 0.0));
  EXPECT_EQ(spatial_normalize(z), z);
  EXPECT_EQ(channel_normalize(z), z);
}

TEST(SpatialNormalize, MatchesScalarOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureMap m = random_map(rng, 3, 3, 2);
    const FeatureMap out = spatial_normalize(m);
    for (std::size_t c = 0; c < 2; ++c) {
      double mx = 0;
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) mx = std::max(mx, std::abs(m.at(y, x, c)));
      double out_max = 0;
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) {
          EXPECT_DOUBLE_EQ(out.at(y, x, c), m.at(y, x, c) / mx);
          out_max = std::max(out_max, std::abs(out.at(y, x, c)));
        }
      EXPECT_NEAR(out_max, 1.0, 1e-12);
    }
  }
}

TEST(ChannelNormalize, DividesByPositionMax) {
  const FeatureMap out = channel_normalize(FeatureMap(1, 1, 2, {2.0, 4.0}));
  EXPECT_EQ(out.at(0, 0, 0), 0.5);
  EXPECT_EQ(out.at(0, 0, 1), 1.0);
  const FeatureMap z = channel_normalize(FeatureMap(1, 2, 2, {0.0, 0.0, 3.0, -6.0}));
  EXPECT_EQ(z.at(0, 0, 0), 0.0);
  EXPECT_EQ(z.at(0, 1, 1), -1.0);
}

TEST(ChannelNormalize, MatchesScalarOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureMap m = random_map(rng, 4, 3, 5);
    const FeatureMap out = channel_normalize(m);
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 3; ++x) {
        double mx = 0;
        for (std::size_t c = 0; c < 5; ++c) mx = std::max(mx, std::abs(m.at(y, x, c)));
        double out_max = 0;
        for (std::size_t c = 0; c < 5; ++c) {
          EXPECT_DOUBLE_EQ(out.at(y, x, c), m.at(y, x, c) / mx);
          out_max = std::max(out_max, std::abs(out.at(y, x, c)));
        }
        EXPECT_NEAR(out_max, 1.0, 1e-12);
      }
  }
}

TEST(Normalize, PositiveScaleInvarianceAndIdempotence) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureMap m = random_map(rng, 5, 4, 6);
    const double a = std::exp(testing_support::normals(rng, 1, 2.0)[0]);
    const FeatureMap s1 = spatial_normalize(m), s2 = spatial_normalize(scaled(m, a));
    const FeatureMap c1 = channel_normalize(m), c2 = channel_normalize(scaled(m, a));
    const FeatureMap ss = spatial_normalize(s1);
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_NEAR(s1.values()[i], s2.values()[i], 1e-12);
      EXPECT_NEAR(c1.values()[i], c2.values()[i], 1e-12);
      EXPECT_NEAR(ss.values()[i], s1.values()[i], 1e-12);
    }
  }
}

TEST(Normalize, EpsilonMustBePositive) {
  const FeatureMap m(1, 1, 1, {1.0});
  EXPECT_THROW(spatial_normalize(m, 0.0), Error);
  EXPECT_THROW(channel_normalize(m, -1.0), Error);
}

TEST(Normalize, SerialAndParallelAgreeExactly) {
  std::mt19937_64 rng(4);
  const FeatureMap m = random_map(rng, 14, 14, 32);
  EXPECT_EQ(spatial_normalize(m, kNormEpsilon, Exec::serial),
            spatial_normalize(m, kNormEpsilon, Exec::parallel));
  EXPECT_EQ(channel_normalize(m, kNormEpsilon, Exec::serial),
            channel_normalize(m, kNormEpsilon, Exec::parallel));
}

TEST(ExtractDescriptors, RowMajorPositions) {
  std::vector<double> v(12);
  for (std::size_t i = 0; i < 12; ++i) v[i] = static_cast<double>(i);
  const DescriptorSet d = extract_descriptors(FeatureMap(2, 2, 3, v), Provenance::raw);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d.dim(), 3u);
  EXPECT_EQ(d.row(2)[0], 6.0);
  const DescriptorSet one = extract_descriptors(FeatureMap(1, 1, 3, {7, 8, 9}), Provenance::channel_norm);
  EXPECT_EQ(std::vector<double>(one.row(0).begin(), one.row(0).end()), (std::vector<double>{7, 8, 9}));
  EXPECT_EQ(one.provenance(), Provenance::channel_norm);
}

TEST(ExtractDescriptors, IndexedLookupAndMultiset) {
  std::mt19937_64 rng(5);
  const FeatureMap m = random_map(rng, 7, 5, 16);
  const DescriptorSet d = extract_descriptors(m, Provenance::spatial_norm);
  ASSERT_EQ(d.size(), 35u);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(d.row(i * 5 + j)[c], m.at(i, j, c));
  std::vector<double> a(m.values().begin(), m.values().end()), b(d.values().begin(), d.values().end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(DescriptorFile, RoundTripUsesWidthOne) {
  testing_support::TempDir dir("desc");
  std::mt19937_64 rng(6);
  const DescriptorSet d(4, as_float32(testing_support::normals(rng, 40)), Provenance::channel_norm);
  write_descriptors(d, dir / "d.fvt");
  const FeatureMap raw = read_feature_map(dir / "d.fvt");
  EXPECT_EQ(raw.height(), 10u);
  EXPECT_EQ(raw.width(), 1u);
  EXPECT_EQ(raw.channels(), 4u);
  EXPECT_EQ(read_descriptors(dir / "d.fvt"), d);
}

TEST(DescriptorSetType, ConcatKeepsOrder) {
  const DescriptorSet a(2, {1, 2, 3, 4}), b(2, {5, 6});
  const std::vector<DescriptorSet> sets{a, b};
  const DescriptorSet c = concat(sets);
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(c.row(2)[1], 6.0);
  EXPECT_THROW(concat(std::vector<DescriptorSet>{a, DescriptorSet(3, {1, 2, 3})}), Error);
}
