#include "comute/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "comute/errors.hpp"

namespace comute {

namespace {

std::size_t whole_cells(double length, double cell, const char* what) {
  if (!(cell > 0) || !(length > 0)) {
    throw NonDivisibleArea(std::string(what) + ": dimensions must be positive");
  }
  const double ratio = length / cell;
  const double rounded = std::round(ratio);
  if (rounded < 1 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    throw NonDivisibleArea(std::string(what) + " is not a whole number of cells");
  }
  return static_cast<std::size_t>(rounded);
}

// Picks n of `count` slots spread evenly along a sequence.
std::vector<std::size_t> spread(std::size_t n, std::size_t count) {
  std::vector<std::size_t> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = static_cast<std::size_t>((2 * k + 1) * count / (2 * n));
  }
  return out;
}

}  // namespace

double Scenario::diagonal() const { return std::hypot(area_width, area_height); }

Scenario build_scenario(double area_width, double area_height, double cell_width,
                        std::size_t n_links) {
  Scenario s;
  s.cols = whole_cells(area_width, cell_width, "area_width");
  s.rows = whole_cells(area_height, cell_width, "area_height");
  s.area_width = area_width;
  s.area_height = area_height;
  s.cell_width = cell_width;
  s.n_grids = s.cols * s.rows;
  if (n_links == 0) throw TooManyLinks("n_links must be at least 1");

  const double w = cell_width;
  std::vector<Point> ap_slots;
  std::vector<Point> dp_slots;
  for (std::size_t r = 0; r < s.rows; ++r) ap_slots.emplace_back(0.0, (r + 0.5) * w);
  for (std::size_t c = 0; c < s.cols; ++c) ap_slots.emplace_back((c + 0.5) * w, area_height);
  for (std::size_t r = 0; r < s.rows; ++r) dp_slots.emplace_back(area_width, (r + 0.5) * w);
  for (std::size_t c = s.cols; c-- > 0;) dp_slots.emplace_back((c + 0.5) * w, 0.0);

  if (n_links > ap_slots.size()) {
    throw TooManyLinks("requested " + std::to_string(n_links) + " links but only " +
                       std::to_string(ap_slots.size()) + " perimeter midpoints per half");
  }
  s.n_links = n_links;
  for (auto i : spread(n_links, ap_slots.size())) {
    s.ap_positions.push_back(ap_slots[i]);
    s.dp_positions.push_back(dp_slots[i]);
  }
  return s;
}

Point grid_center(const Scenario& s, GridIndex g) {
  if (g.index >= s.n_grids) {
    throw IndexOutOfRange("grid index " + std::to_string(g.index) + " >= " +
                          std::to_string(s.n_grids));
  }
  const auto row = g.index / s.cols;
  const auto col = g.index % s.cols;
  return {(static_cast<double>(col) + 0.5) * s.cell_width,
          (static_cast<double>(row) + 0.5) * s.cell_width};
}

double point_to_segment_distance(const Point& p, const Point& a_in, const Point& b_in) {
  // Fixed endpoint order so swapping a and b gives bit-identical results.
  const bool swap = std::tie(b_in.x(), b_in.y()) < std::tie(a_in.x(), a_in.y());
  const Point& a = swap ? b_in : a_in;
  const Point& b = swap ? a_in : b_in;
  const Point ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) throw DegenerateSegment("segment endpoints coincide");
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double excess_path_length(const Point& p, const Point& a, const Point& b) {
  return std::max(0.0, (p - a).norm() + (b - p).norm() - (b - a).norm());
}

}  // namespace comute
