#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <tuple>

#include "fvforge/augment.hpp"
#include "fvforge/error.hpp"
#include "support.hpp"

using namespace fvforge;

namespace {

const std::vector<std::size_t> kScales{256, 384, 512};

auto key(const View& v) {
  return std::tuple(v.scale_smallest_side, v.crop_x, v.crop_y, v.crop_size, v.flipped,
                    static_cast<int>(v.position));
}

}  // namespace

TEST(PlanViews, SquareImageThreeScalesWithFlipsGivesThirty) {
  const ViewPlan p = plan_views(512, 512, kScales, 224, true);
  EXPECT_EQ(p.views.size(), 30u);
}

TEST(PlanViews, CenterCropOfSingleScale) {
  const ViewPlan p = plan_views(256, 256, std::vector<std::size_t>{256}, 224, false);
  ASSERT_EQ(p.views.size(), 5u);
  EXPECT_EQ(p.views[4].position, CropPosition::center);
  EXPECT_EQ(p.views[4].crop_x, 16u);
  EXPECT_EQ(p.views[4].crop_y, 16u);
}

TEST(PlanViews, LandscapeRescaleAndCornerOrigins) {
  // 256 * 512 / 341 = 384.18 -> 384, so the scaled image is 384 x 256.
  const ViewPlan p = plan_views(512, 341, std::vector<std::size_t>{256}, 224, false);
  ASSERT_EQ(p.views.size(), 5u);
  EXPECT_EQ(p.views[0].scaled_width, 384u);
  EXPECT_EQ(p.views[0].scaled_height, 256u);
  std::set<std::pair<std::size_t, std::size_t>> corners;
  for (int i = 0; i < 4; ++i) corners.insert({p.views[i].crop_x, p.views[i].crop_y});
  EXPECT_EQ(corners, (std::set<std::pair<std::size_t, std::size_t>>{{0, 0}, {160, 0}, {0, 32}, {160, 32}}));
  EXPECT_EQ(p.views[4].crop_x, 80u);
  EXPECT_EQ(p.views[4].crop_y, 16u);
}

TEST(PlanViews, LongSideRoundsHalfAwayFromZero) {
  // 3 * 5 / 2 = 7.5 -> 8
  const ViewPlan p = plan_views(5, 2, std::vector<std::size_t>{3}, 3, false);
  EXPECT_EQ(p.views[0].scaled_width, 8u);
  EXPECT_EQ(p.views[0].scaled_height, 3u);
  // portrait: 4 * 7 / 6 = 4.67 -> 5
  const ViewPlan q = plan_views(6, 7, std::vector<std::size_t>{4}, 2, false);
  EXPECT_EQ(q.views[0].scaled_width, 4u);
  EXPECT_EQ(q.views[0].scaled_height, 5u);
}

TEST(PlanViews, FlipsFollowUnflippedViewsPerScale) {
  const ViewPlan p = plan_views(300, 300, std::vector<std::size_t>{256, 300}, 224, true);
  ASSERT_EQ(p.views.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(p.views[i].flipped, (i % 10) >= 5);
    EXPECT_EQ(p.views[i].scale_smallest_side, i < 10 ? 256u : 300u);
  }
}

TEST(PlanViews, Errors) {
  EXPECT_THROW(plan_views(512, 512, std::vector<std::size_t>{200}, 224, true), Error);
  EXPECT_THROW(plan_views(0, 512, kScales, 224, true), Error);
  EXPECT_THROW(plan_views(512, 512, std::vector<std::size_t>{256, 256}, 224, true), Error);
}

TEST(PlanViews, CountBoundsAndUniquenessOverRandomSizes) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t w = testing_support::between(rng, 1, 3000);
    const std::size_t h = testing_support::between(rng, 1, 3000);
    std::vector<std::size_t> scales;
    const std::size_t crop = testing_support::between(rng, 1, 300);
    const std::size_t count = testing_support::between(rng, 1, 3);
    while (scales.size() < count) {
      const std::size_t s = testing_support::between(rng, crop, crop + 400);
      if (std::find(scales.begin(), scales.end(), s) == scales.end()) scales.push_back(s);
    }
    const bool flips = trial % 2 == 0;
    const ViewPlan p = plan_views(w, h, scales, crop, flips);
    ASSERT_EQ(p.views.size(), scales.size() * 5 * (flips ? 2 : 1));
    std::set<decltype(key(p.views[0]))> seen;
    for (const View& v : p.views) {
      EXPECT_EQ(std::min(v.scaled_width, v.scaled_height), v.scale_smallest_side);
      EXPECT_LE(v.crop_x + v.crop_size, v.scaled_width);
      EXPECT_LE(v.crop_y + v.crop_size, v.scaled_height);
      EXPECT_TRUE(seen.insert(key(v)).second);
    }
  }
}

TEST(PlanViews, CsvHasHeaderAndOneLinePerView) {
  const ViewPlan p = plan_views(512, 512, kScales, 224, true);
  const std::string csv = views_to_csv(p);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 31);
}

TEST(SumPool, RepeatedAndSingleViews) {
  const GlobalVector v({1.5, -2.0, 0.25});
  const std::vector<GlobalVector> three{v, v, v};
  EXPECT_EQ(sum_pool(three), GlobalVector({4.5, -6.0, 0.75}));
  const std::vector<GlobalVector> one{v};
  EXPECT_EQ(sum_pool(one), v);
}

TEST(SumPool, MatchesScalarLoop) {
  std::mt19937_64 rng(8);
  const auto a = testing_support::normals(rng, 8), b = testing_support::normals(rng, 8);
  const std::vector<std::vector<double>> views{a, b};
  const auto s = sum_pool(views);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(s[i], a[i] + b[i]);
}

TEST(SumPool, PermutationInvariantExactly) {
  std::mt19937_64 rng(9);
  std::vector<std::vector<double>> views;
  for (int i = 0; i < 7; ++i) {
    auto v = testing_support::normals(rng, 16);
    for (auto& x : v) x *= std::pow(10.0, static_cast<double>(i % 4) * 3);
    views.push_back(v);
  }
  const auto base = sum_pool(views);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(views.begin(), views.end(), rng);
    EXPECT_EQ(sum_pool(views), base);
  }
}

TEST(SumPool, Errors) {
  EXPECT_THROW(sum_pool(std::vector<GlobalVector>{}), Error);
  EXPECT_THROW(sum_pool(std::vector<GlobalVector>{GlobalVector({1.0}), GlobalVector({1.0, 2.0})}),
               Error);
}
