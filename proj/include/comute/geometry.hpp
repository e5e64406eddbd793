#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace comute {

using Point = Eigen::Vector2d;

/// Index of a grid cell in [0, N). Cells are numbered row-major starting at
/// the minimum-coordinate corner: index = row * cols + col.
struct GridIndex {
  std::size_t index = 0;
  friend bool operator==(GridIndex, GridIndex) = default;
  friend auto operator<=>(GridIndex, GridIndex) = default;
};

/// Monitoring area partitioned into square cells, with M transmitter (AP)
/// and receiver (DP) nodes on the perimeter. Link m is the segment
/// ap_positions[m] -> dp_positions[m].
struct Scenario {
  double area_width = 0;
  double area_height = 0;
  double cell_width = 0;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t n_grids = 0;
  std::size_t n_links = 0;
  std::vector<Point> ap_positions;
  std::vector<Point> dp_positions;

  double diagonal() const;
};

/// Builds the scenario. APs are spread evenly over the side midpoints of the
/// left side (bottom to top) followed by the top side (left to right); DPs
/// over the right side (bottom to top) followed by the bottom side (right to
/// left). The k-th AP pairs with the k-th DP.
///
/// Throws NonDivisibleArea when a side is not a whole number of cells and
/// TooManyLinks when either half-perimeter has fewer than n_links midpoints.
Scenario build_scenario(double area_width, double area_height, double cell_width,
                        std::size_t n_links);

/// Throws IndexOutOfRange for g.index >= n_grids.
Point grid_center(const Scenario& s, GridIndex g);

/// Euclidean distance from p to the closed segment [a, b].
/// Throws DegenerateSegment when a == b.
double point_to_segment_distance(const Point& p, const Point& a, const Point& b);

/// Extra path length of the detour a -> p -> b over the direct path a -> b.
double excess_path_length(const Point& p, const Point& a, const Point& b);

}  // namespace comute
