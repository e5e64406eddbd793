#pragma once

// Reference implementations used as independent oracles by the tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "comute/geometry.hpp"
#include "comute/kv.hpp"
#include "comute/mltf.hpp"
#include "comute/nn/ops.hpp"
#include "comute/rng.hpp"

namespace testing_support {

using comute::CounterStream;

inline CounterStream stream(std::uint64_t a, std::uint64_t b = 0) {
  return CounterStream(comute::derive_key({0x7e57, a, b}));
}

template <typename Scalar>
comute::nn::Matrix<Scalar> random_matrix(Eigen::Index rows, Eigen::Index cols, CounterStream& s,
                                         double scale = 1.0) {
  comute::nn::Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar(scale * s.normal());
  return m;
}

/// Six nested loops, straight from the definition. `in` is H*W*C (channels
/// fastest), `ker` is k*k*Cin x Cout with row (dh*k + dw)*Cin + c.
inline std::vector<double> naive_conv(const std::vector<double>& in, std::size_t H, std::size_t W,
                                      std::size_t Cin, const Eigen::MatrixXd& ker,
                                      const Eigen::VectorXd& bias, std::size_t k) {
  const std::size_t Cout = static_cast<std::size_t>(ker.cols());
  const long half = static_cast<long>(k / 2);
  std::vector<double> out(H * W * Cout, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t w = 0; w < W; ++w) {
      for (std::size_t o = 0; o < Cout; ++o) {
        double acc = bias[long(o)];
        for (std::size_t dh = 0; dh < k; ++dh) {
          for (std::size_t dw = 0; dw < k; ++dw) {
            for (std::size_t c = 0; c < Cin; ++c) {
              const long y = long(h) + long(dh) - half;
              const long x = long(w) + long(dw) - half;
              if (y < 0 || x < 0 || y >= long(H) || x >= long(W)) continue;
              acc += in[(std::size_t(y) * W + std::size_t(x)) * Cin + c] *
                     ker(long((dh * k + dw) * Cin + c), long(o));
            }
          }
        }
        out[(h * W + w) * Cout + o] = acc;
      }
    }
  }
  return out;
}

struct Confusion {
  double tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion brute_confusion(const std::vector<std::vector<int>>& pred,
                                 const std::vector<std::vector<int>>& truth) {
  Confusion c;
  for (std::size_t p = 0; p < truth.size(); ++p) {
    for (std::size_t n = 0; n < truth[p].size(); ++n) {
      const int y = truth[p][n], yh = pred[p][n];
      if (y == 1 && yh == 1) c.tp += 1;
      if (y == 0 && yh == 1) c.fp += 1;
      if (y == 1 && yh == 0) c.fn += 1;
      if (y == 0 && yh == 0) c.tn += 1;
    }
  }
  return c;
}

/// Minimum over all permutations of the padded square cost matrix.
inline double brute_matched_error(const std::vector<comute::Point>& a,
                                  const std::vector<comute::Point>& b, double penalty) {
  const std::size_t n = std::max(a.size(), b.size());
  if (n == 0) return 0.0;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = perm[i];
      total += (i < a.size() && j < b.size()) ? (a[i] - b[j]).norm() : penalty;
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / double(n);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("comute_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  return comute::kv::read_file(p);
}

}  // namespace testing_support
