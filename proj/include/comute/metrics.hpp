#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "comute/geometry.hpp"
#include "comute/mltf.hpp"

namespace comute {

/// Per-label confusion cells over a set of instances.
struct ConfusionCounts {
  std::vector<std::size_t> tp, fp, fn, tn;
  std::size_t instances = 0;

  std::size_t total_tp() const;
  std::size_t total_fp() const;
  std::size_t total_fn() const;
  std::size_t total_tn() const;
};

/// Throws ShapeMismatch when the sets differ in size or label length.
ConfusionCounts confusion_counts(std::span<const LocationVector> pred,
                                 std::span<const LocationVector> truth);

struct MicroScores {
  double precision = 1;
  double recall = 1;
  double f1 = 1;
};

/// Micro-averaged precision, recall and F1. A ratio whose denominator is
/// zero is reported as 1.
MicroScores micro_f1(std::span<const LocationVector> pred, std::span<const LocationVector> truth);
MicroScores micro_f1(const ConfusionCounts& counts);

/// Fraction of individual label bits predicted wrongly.
double hamming_loss(std::span<const LocationVector> pred, std::span<const LocationVector> truth);
double hamming_loss(const ConfusionCounts& counts);

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials). Returns the column assigned to each row.
struct Assignment {
  std::vector<std::size_t> row_to_col;
  double cost = 0;
};
Assignment min_cost_assignment(const Eigen::MatrixXd& cost);

/// Optimal-assignment distance between two point sets. The cost matrix is
/// padded to square; pairing with a pad entry costs `unmatched_penalty`.
/// Returns total cost / max(|a|, |b|), or 0 when both are empty.
double matched_distance_error(std::span<const Point> a, std::span<const Point> b,
                              double unmatched_penalty);

/// Mean distance error between predicted and true occupied cell centers;
/// each unmatched target costs the area diagonal.
double mean_distance_error(const LocationVector& pred, const LocationVector& truth,
                           const Scenario& s);

}  // namespace comute
