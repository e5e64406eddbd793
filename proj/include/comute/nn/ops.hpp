#pragma once

// Free-function kernels of the network engine. A batch of feature maps is a
// row-major matrix with one example per row, each row holding an H x W x C
// map with channels fastest. A single example viewed as a matrix is
// (H*W) x C row-major.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

#include <Eigen/Core>

#include "comute/errors.hpp"
#include "comute/mltf.hpp"
#include "comute/rng.hpp"

namespace comute::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

inline constexpr double kLogitClamp = 30.0;

enum class Mode { kTraining, kInference };

/// Unfolds a zero-padded k x k neighbourhood around every pixel. Row p of
/// `cols` (p = h*W + w) holds in[h+dh-k/2, w+dw-k/2, c] at column
/// (dh*k + dw)*C + c. `cols` must hold H*W*k*k*C values.
template <typename Scalar>
void im2col(std::span<const Scalar> in, ImageShape shape, std::size_t k, std::span<Scalar> cols) {
  const std::ptrdiff_t H = shape.height, W = shape.width, C = shape.channels;
  const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(k), half = K / 2;
  const std::ptrdiff_t row_len = K * K * C;
  for (std::ptrdiff_t h = 0; h < H; ++h) {
    for (std::ptrdiff_t w = 0; w < W; ++w) {
      Scalar* dst = cols.data() + (h * W + w) * row_len;
      for (std::ptrdiff_t dh = 0; dh < K; ++dh) {
        const std::ptrdiff_t y = h + dh - half;
        Scalar* seg = dst + dh * K * C;
        if (y < 0 || y >= H) {
          std::fill(seg, seg + K * C, Scalar(0));
          continue;
        }
        const std::ptrdiff_t x0 = w - half;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -x0);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(K, W - x0);
        std::fill(seg, seg + lo * C, Scalar(0));
        if (hi > lo) {
          const Scalar* src = in.data() + (y * W + x0 + lo) * C;
          std::copy(src, src + (hi - lo) * C, seg + lo * C);
        }
        std::fill(seg + std::max(hi, lo) * C, seg + K * C, Scalar(0));
      }
    }
  }
}

/// Adjoint of im2col: scatters column gradients back onto the input map.
template <typename Scalar>
void col2im_add(std::span<const Scalar> cols, ImageShape shape, std::size_t k,
                std::span<Scalar> grad_in) {
  const std::ptrdiff_t H = shape.height, W = shape.width, C = shape.channels;
  const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(k), half = K / 2;
  const std::ptrdiff_t row_len = K * K * C;
  for (std::ptrdiff_t h = 0; h < H; ++h) {
    for (std::ptrdiff_t w = 0; w < W; ++w) {
      const Scalar* src = cols.data() + (h * W + w) * row_len;
      for (std::ptrdiff_t dh = 0; dh < K; ++dh) {
        const std::ptrdiff_t y = h + dh - half;
        if (y < 0 || y >= H) continue;
        const std::ptrdiff_t x0 = w - half;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -x0);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(K, W - x0);
        const Scalar* seg = src + dh * K * C;
        Scalar* dst = grad_in.data() + (y * W + x0) * C;
        for (std::ptrdiff_t i = lo * C; i < hi * C; ++i) dst[i] += seg[i];
      }
    }
  }
}

/// Same-padded, stride-1 cross-correlation of one example.
/// `input` is (H*W) x C_in, `kernels` is (k*k*C_in) x C_out with row index
/// (dh*k + dw)*C_in + c, `bias` has C_out entries. Returns (H*W) x C_out.
template <typename Scalar>
Matrix<Scalar> conv2d_forward(const Matrix<Scalar>& input, ImageShape shape,
                              const Matrix<Scalar>& kernels, const Vector<Scalar>& bias,
                              std::size_t k) {
  if (k % 2 == 0) throw ShapeMismatch("kernel size must be odd");
  if (input.rows() != static_cast<Eigen::Index>(shape.pixels()) ||
      input.cols() != static_cast<Eigen::Index>(shape.channels) ||
      kernels.rows() != static_cast<Eigen::Index>(k * k * shape.channels) ||
      kernels.cols() != bias.size()) {
    throw ShapeMismatch("conv2d operand shapes are incompatible");
  }
  Matrix<Scalar> cols(input.rows(), kernels.rows());
  im2col<Scalar>({input.data(), static_cast<std::size_t>(input.size())}, shape, k,
                 {cols.data(), static_cast<std::size_t>(cols.size())});
  Matrix<Scalar> out = cols * kernels;
  out.rowwise() += bias.transpose();
  return out;
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

/// Inverted dropout: in training mode each entry is kept with probability
/// 1 - rate and scaled by 1 / (1 - rate); inference mode is the identity.
/// Returns the applied multiplier so callers can reuse it in the backward
/// pass.
template <typename Scalar>
Matrix<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Mode mode,
                            std::uint64_t mask_seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0,1)");
  if (mode == Mode::kInference || rate == 0.0) return Matrix<Scalar>::Ones(rows, cols);
  const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
  Matrix<Scalar> mask(rows, cols);
  CounterStream stream(mask_seed);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = stream.uniform() < rate ? Scalar(0) : keep_scale;
  }
  return mask;
}

template <typename Scalar>
Matrix<Scalar> dropout(const Matrix<Scalar>& x, double rate, Mode mode, std::uint64_t mask_seed) {
  if (mode == Mode::kInference || rate == 0.0) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0,1)");
    return x;
  }
  return x.cwiseProduct(dropout_mask<Scalar>(x.rows(), x.cols(), rate, mode, mask_seed));
}

/// x^T W + b for a batch of row vectors x.
template <typename Scalar>
Matrix<Scalar> dense_forward(const Matrix<Scalar>& x, const Matrix<Scalar>& weights,
                             const Vector<Scalar>& bias) {
  if (x.cols() != weights.rows() || weights.cols() != bias.size()) {
    throw ShapeMismatch("dense operand shapes are incompatible");
  }
  Matrix<Scalar> out = x * weights;
  out.rowwise() += bias.transpose();
  return out;
}

template <typename Scalar>
Scalar clamp_logit(Scalar z) {
  return std::clamp(z, Scalar(-kLogitClamp), Scalar(kLogitClamp));
}

/// Elementwise logistic with the argument clamped to +-30.
template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  return z.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-clamp_logit(v))); });
}

/// Mean sigmoid cross-entropy over all P x N entries, computed in logit
/// space: max(z,0) - z*y + log(1 + exp(-|z|)) with z clamped to +-30.
template <typename DerivedZ, typename DerivedY>
double bce_with_logits(const Eigen::MatrixBase<DerivedZ>& logits,
                       const Eigen::MatrixBase<DerivedY>& truth) {
  if (logits.rows() != truth.rows() || logits.cols() != truth.cols()) {
    throw ShapeMismatch("loss operands differ in shape");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double z = clamp_logit(static_cast<double>(logits(i, j)));
      const double y = static_cast<double>(truth(i, j));
      total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
  }
  return total / static_cast<double>(logits.size());
}

/// The same loss from probabilities, clamped into [sigmoid(-30), sigmoid(30)].
template <typename DerivedP, typename DerivedY>
double bce_loss(const Eigen::MatrixBase<DerivedP>& pred, const Eigen::MatrixBase<DerivedY>& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw ShapeMismatch("loss operands differ in shape");
  }
  const double lo = 1.0 / (1.0 + std::exp(kLogitClamp));
  const double hi = 1.0 / (1.0 + std::exp(-kLogitClamp));
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    for (Eigen::Index j = 0; j < pred.cols(); ++j) {
      const double p = std::clamp(static_cast<double>(pred(i, j)), lo, hi);
      const double y = static_cast<double>(truth(i, j));
      total -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
    }
  }
  return total / static_cast<double>(pred.size());
}

}  // namespace comute::nn
