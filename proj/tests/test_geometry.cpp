#include <gtest/gtest.h>

#include <set>

#include "comute/errors.hpp"
#include "comute/geometry.hpp"
#include "support.hpp"

using namespace comute;

namespace {

std::set<std::pair<double, double>> perimeter_midpoints(double W, double H, double w) {
  std::set<std::pair<double, double>> out;
  for (double x = w / 2; x < W; x += w) {
    out.insert({x, 0.0});
    out.insert({x, H});
  }
  for (double y = w / 2; y < H; y += w) {
    out.insert({0.0, y});
    out.insert({W, y});
  }
  return out;
}

// Minimum over a dense sampling of the segment.
double sampled_distance(const Point& p, const Point& a, const Point& b) {
  double best = 1e300;
  for (int i = 0; i <= 200000; ++i) {
    const double t = i / 200000.0;
    best = std::min(best, (p - (a + t * (b - a))).norm());
  }
  return best;
}

}  // namespace

TEST(Geometry, FourByFiveAreaHasTwentyCellsAndNineLinks) {
  const auto s = build_scenario(4, 5, 1, 9);
  EXPECT_EQ(s.n_grids, 20u);
  EXPECT_EQ(s.n_links, 9u);
  EXPECT_EQ(s.ap_positions.size(), 9u);
  EXPECT_EQ(s.dp_positions.size(), 9u);
}

TEST(Geometry, SingleCellSingleLink) {
  const auto s = build_scenario(1, 1, 1, 1);
  EXPECT_EQ(s.n_grids, 1u);
  EXPECT_EQ(s.n_links, 1u);
  // The link crosses the cell from one side to the opposite one.
  const Point a = s.ap_positions[0], b = s.dp_positions[0];
  EXPECT_NEAR((a - b).norm(), 1.0, 1e-15);
  EXPECT_NEAR(point_to_segment_distance({0.5, 0.5}, a, b), 0.0, 1e-15);
  const Point c = grid_center(s, {0});
  EXPECT_DOUBLE_EQ(c.x(), 0.5);
  EXPECT_DOUBLE_EQ(c.y(), 0.5);
}

TEST(Geometry, DeskEndpointsAreDistinctSideMidpoints) {
  const auto s = build_scenario(3, 3, 1, 4);
  const auto mids = perimeter_midpoints(3, 3, 1);
  EXPECT_EQ(mids.size(), 12u);
  std::set<std::pair<double, double>> used;
  for (std::size_t m = 0; m < s.n_links; ++m) {
    for (const Point& p : {s.ap_positions[m], s.dp_positions[m]}) {
      EXPECT_TRUE(mids.count({p.x(), p.y()})) << p.transpose();
      used.insert({p.x(), p.y()});
    }
    EXPECT_NE(s.ap_positions[m], s.dp_positions[m]);
  }
  EXPECT_EQ(used.size(), 8u);
}

TEST(Geometry, EndpointsOnPerimeterForManyAreas) {
  for (auto [W, H, w] : {std::tuple{4.0, 5.0, 1.0}, {6.0, 4.0, 0.5}, {2.0, 7.0, 1.0}}) {
    const auto mids = perimeter_midpoints(W, H, w);
    const std::size_t max_links = mids.size() / 2;
    const auto s = build_scenario(W, H, w, max_links);
    for (std::size_t m = 0; m < s.n_links; ++m) {
      EXPECT_TRUE(mids.count({s.ap_positions[m].x(), s.ap_positions[m].y()}));
      EXPECT_TRUE(mids.count({s.dp_positions[m].x(), s.dp_positions[m].y()}));
    }
    EXPECT_THROW(build_scenario(W, H, w, max_links + 1), TooManyLinks);
  }
}

TEST(Geometry, RejectsPartialCellsAndZeroLinks) {
  EXPECT_THROW(build_scenario(4, 5, 0.7, 9), NonDivisibleArea);
  EXPECT_THROW(build_scenario(4, 5, 0, 9), NonDivisibleArea);
  EXPECT_THROW(build_scenario(4, 5, 1, 0), TooManyLinks);
}

TEST(Geometry, GridCentersAreRowMajor) {
  const auto s = build_scenario(4, 5, 1, 9);
  EXPECT_TRUE(grid_center(s, {0}).isApprox(Point(0.5, 0.5)));
  EXPECT_TRUE(grid_center(s, {19}).isApprox(Point(3.5, 4.5)));
  EXPECT_THROW(grid_center(s, {20}), IndexOutOfRange);

  std::set<std::pair<double, double>> seen;
  for (std::size_t g = 0; g < s.n_grids; ++g) {
    const Point c = grid_center(s, {g});
    EXPECT_GT(c.x(), 0);
    EXPECT_LT(c.x(), 4);
    EXPECT_GT(c.y(), 0);
    EXPECT_LT(c.y(), 5);
    seen.insert({c.x(), c.y()});
  }
  EXPECT_EQ(seen.size(), s.n_grids);
}

TEST(Geometry, SegmentDistanceExamples) {
  EXPECT_NEAR(point_to_segment_distance({0, 1}, {-1, 0}, {1, 0}), 1.0, 1e-15);
  EXPECT_NEAR(point_to_segment_distance({2, 0}, {-1, 0}, {1, 0}), 1.0, 1e-15);
  const Point p(0.3, 0.4), a(0, 0), b(1, 0);
  EXPECT_NEAR(point_to_segment_distance(p, a, b), sampled_distance(p, a, b), 1e-9);
  EXPECT_NEAR(point_to_segment_distance(p, a, b), 0.4, 1e-15);
  const Point q(1.2, 2.9), c(0, 1), d(4, 3.5);
  EXPECT_NEAR(point_to_segment_distance(q, c, d), sampled_distance(q, c, d), 1e-5);
  EXPECT_THROW(point_to_segment_distance({1, 1}, {2, 2}, {2, 2}), DegenerateSegment);
}

TEST(Geometry, SegmentDistanceIsSymmetricAndBounded) {
  auto s = testing_support::stream(11);
  for (int i = 0; i < 500; ++i) {
    const Point p(s.uniform(-2, 6), s.uniform(-2, 6));
    const Point a(s.uniform(0, 4), s.uniform(0, 4));
    const Point b(s.uniform(0, 4), s.uniform(0, 4));
    const double d = point_to_segment_distance(p, a, b);
    EXPECT_EQ(d, point_to_segment_distance(p, b, a));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, std::min((p - a).norm(), (p - b).norm()) + 1e-12);
  }
}

TEST(Geometry, ExcessPathVanishesOnTheLineOfSight) {
  EXPECT_NEAR(excess_path_length({2, 0.5}, {0, 0.5}, {4, 0.5}), 0.0, 1e-12);
  EXPECT_NEAR(excess_path_length({2, 2}, {0, 0}, {4, 0}), 2 * std::sqrt(8.0) - 4, 1e-12);
}
