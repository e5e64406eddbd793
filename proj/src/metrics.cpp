#include "comute/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "comute/errors.hpp"

namespace comute {

namespace {

std::size_t sum(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{0});
}

double ratio_or_one(double num, double den) { return den == 0 ? 1.0 : num / den; }

}  // namespace

std::size_t ConfusionCounts::total_tp() const { return sum(tp); }
std::size_t ConfusionCounts::total_fp() const { return sum(fp); }
std::size_t ConfusionCounts::total_fn() const { return sum(fn); }
std::size_t ConfusionCounts::total_tn() const { return sum(tn); }

ConfusionCounts confusion_counts(std::span<const LocationVector> pred,
                                 std::span<const LocationVector> truth) {
  if (pred.size() != truth.size()) throw ShapeMismatch("prediction and truth counts differ");
  const std::size_t n = truth.empty() ? 0 : truth.front().size();
  ConfusionCounts c;
  c.tp.assign(n, 0);
  c.fp.assign(n, 0);
  c.fn.assign(n, 0);
  c.tn.assign(n, 0);
  c.instances = truth.size();
  for (std::size_t p = 0; p < truth.size(); ++p) {
    if (pred[p].size() != n || truth[p].size() != n) throw ShapeMismatch("label lengths differ");
    for (std::size_t j = 0; j < n; ++j) {
      const bool y = truth[p].bits[j] != 0;
      const bool yhat = pred[p].bits[j] != 0;
      if (y && yhat) ++c.tp[j];
      else if (!y && yhat) ++c.fp[j];
      else if (y && !yhat) ++c.fn[j];
      else ++c.tn[j];
    }
  }
  return c;
}

MicroScores micro_f1(const ConfusionCounts& c) {
  const double tp = double(c.total_tp()), fp = double(c.total_fp()), fn = double(c.total_fn());
  return {ratio_or_one(tp, tp + fp), ratio_or_one(tp, tp + fn),
          ratio_or_one(2 * tp, 2 * tp + fp + fn)};
}

MicroScores micro_f1(std::span<const LocationVector> pred, std::span<const LocationVector> truth) {
  return micro_f1(confusion_counts(pred, truth));
}

double hamming_loss(const ConfusionCounts& c) {
  const double wrong = double(c.total_fp() + c.total_fn());
  const double all = double(c.total_tp() + c.total_tn()) + wrong;
  return all == 0 ? 0.0 : wrong / all;
}

double hamming_loss(std::span<const LocationVector> pred, std::span<const LocationVector> truth) {
  return hamming_loss(confusion_counts(pred, truth));
}

Assignment min_cost_assignment(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols()) throw ShapeMismatch("assignment cost matrix must be square");
  const auto n = static_cast<std::size_t>(cost.rows());
  Assignment result;
  if (n == 0) return result;

  // 1-based potentials formulation; column 0 is a virtual source.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(Eigen::Index(i0 - 1), Eigen::Index(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  result.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) result.row_to_col[match[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) {
    result.cost += cost(Eigen::Index(i), Eigen::Index(result.row_to_col[i]));
  }
  return result;
}

double matched_distance_error(std::span<const Point> a, std::span<const Point> b,
                              double unmatched_penalty) {
  const std::size_t n = std::max(a.size(), b.size());
  if (n == 0) return 0.0;
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(Eigen::Index(n), Eigen::Index(n),
                                                   unmatched_penalty);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      cost(Eigen::Index(i), Eigen::Index(j)) = (a[i] - b[j]).norm();
    }
  }
  return min_cost_assignment(cost).cost / double(n);
}

double mean_distance_error(const LocationVector& pred, const LocationVector& truth,
                           const Scenario& s) {
  if (pred.size() != s.n_grids || truth.size() != s.n_grids) {
    throw ShapeMismatch("location vectors must have one bit per grid");
  }
  std::vector<Point> a, b;
  for (auto g : pred.grids()) a.push_back(grid_center(s, g));
  for (auto g : truth.grids()) b.push_back(grid_center(s, g));
  return matched_distance_error(a, b, s.diagonal());
}

}  // namespace comute
