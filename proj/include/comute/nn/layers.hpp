#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "comute/nn/ops.hpp"
#include "comute/rng.hpp"

namespace comute::nn {

enum class LayerKind { kConv2d, kRelu, kDropout, kFlatten, kDense, kSigmoid };

/// Declarative description of a layer; shapes are inferred while chaining.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t kernel_size = 0;   // conv2d
  std::size_t out_channels = 0;  // conv2d
  std::size_t units = 0;         // dense
  double rate = 0.0;             // dropout

  static LayerSpec conv2d(std::size_t k, std::size_t out) { return {LayerKind::kConv2d, k, out}; }
  static LayerSpec relu() { return {LayerKind::kRelu}; }
  static LayerSpec dropout(double p) { return {LayerKind::kDropout, 0, 0, 0, p}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten}; }
  static LayerSpec dense(std::size_t u) { return {LayerKind::kDense, 0, 0, u}; }
  static LayerSpec sigmoid() { return {LayerKind::kSigmoid}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Mutable view of one parameter tensor and its gradient buffer.
template <typename Scalar>
struct ParamRef {
  std::string name;
  std::span<Scalar> value;
  std::span<Scalar> grad;
};

/// Per-call forward context.
struct ForwardContext {
  Mode mode = Mode::kInference;
  std::uint64_t mask_seed = 0;
  std::size_t layer_index = 0;
};

template <typename Scalar>
class Layer {
 public:
  Layer(LayerSpec spec, ImageShape in, ImageShape out) : spec_(spec), in_(in), out_(out) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }
  ImageShape input_shape() const { return in_; }
  ImageShape output_shape() const { return out_; }

  /// `in` is batch x input_shape().size(); the layer may cache what its
  /// backward pass needs.
  virtual Matrix<Scalar> forward(const Matrix<Scalar>& in, const ForwardContext& ctx) = 0;

  /// Overwrites parameter gradients with those of the cached batch and
  /// returns the gradient with respect to the layer input.
  virtual Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) = 0;

  virtual std::vector<ParamRef<Scalar>> params() { return {}; }

  /// Releases cached activations.
  virtual void clear_cache() {}

  /// A layer fed by raw data may skip its input gradient; backward then
  /// returns an empty matrix.
  void set_input_grad(bool needed) { input_grad_ = needed; }
  bool input_grad() const { return input_grad_; }

 private:
  bool input_grad_ = true;
  LayerSpec spec_;
  ImageShape in_;
  ImageShape out_;
};

template <typename Scalar>
class Conv2dLayer final : public Layer<Scalar> {
 public:
  // Cap on the unfolded patch buffer per chunk of examples (values).
  static constexpr std::size_t kChunkValues = std::size_t{1} << 22;

  Conv2dLayer(LayerSpec spec, ImageShape in)
      : Layer<Scalar>(spec, in, {in.height, in.width, spec.out_channels}),
        k_(spec.kernel_size),
        kernels_(Matrix<Scalar>::Zero(k_ * k_ * in.channels, spec.out_channels)),
        bias_(Vector<Scalar>::Zero(spec.out_channels)),
        grad_kernels_(Matrix<Scalar>::Zero(kernels_.rows(), kernels_.cols())),
        grad_bias_(Vector<Scalar>::Zero(bias_.size())) {
    if (k_ % 2 == 0 || k_ == 0) throw ShapeMismatch("conv2d kernel size must be odd");
    if (spec.out_channels == 0) throw ShapeMismatch("conv2d needs at least one output channel");
  }

  Matrix<Scalar>& kernels() { return kernels_; }
  Vector<Scalar>& bias() { return bias_; }
  std::size_t fan_in() const { return k_ * k_ * this->input_shape().channels; }

  Matrix<Scalar> forward(const Matrix<Scalar>& in, const ForwardContext&) override {
    const auto shape = this->input_shape();
    check_batch(in, shape);
    input_ = in;
    const Eigen::Index batch = in.rows();
    const Eigen::Index px = static_cast<Eigen::Index>(shape.pixels());
    const Eigen::Index c_out = kernels_.cols();
    Matrix<Scalar> out(batch, px * c_out);
    const Eigen::Index chunk = chunk_size(batch);
    Matrix<Scalar> cols;
    for (Eigen::Index b0 = 0; b0 < batch; b0 += chunk) {
      const Eigen::Index nb = std::min(chunk, batch - b0);
      unfold(in, shape, b0, nb, cols);
      Eigen::Map<Matrix<Scalar>> o(out.row(b0).data(), nb * px, c_out);
      o.noalias() = cols * kernels_;
      o.rowwise() += bias_.transpose();
    }
    return out;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) override {
    const auto shape = this->input_shape();
    if (input_.rows() != grad_out.rows()) throw StaleForwardState("conv2d: no cached forward");
    const Eigen::Index batch = grad_out.rows();
    const Eigen::Index px = static_cast<Eigen::Index>(shape.pixels());
    const Eigen::Index c_out = kernels_.cols();
    const ImageShape out_shape = this->output_shape();
    grad_kernels_.setZero();
    grad_bias_.setZero();
    // The input gradient is the same-padded correlation of grad_out with
    // the spatially flipped, channel-transposed kernels.
    Matrix<Scalar> flipped;
    Matrix<Scalar> grad_in;
    if (this->input_grad()) {
      flipped = flip_kernels();
      grad_in.resize(batch, input_.cols());
    }
    const Eigen::Index chunk = chunk_size(batch);
    Matrix<Scalar> cols;
    for (Eigen::Index b0 = 0; b0 < batch; b0 += chunk) {
      const Eigen::Index nb = std::min(chunk, batch - b0);
      unfold(input_, shape, b0, nb, cols);
      Eigen::Map<const Matrix<Scalar>> g(grad_out.row(b0).data(), nb * px, c_out);
      grad_kernels_.noalias() += cols.transpose() * g;
      grad_bias_ += g.colwise().sum().transpose();
      if (this->input_grad()) {
        unfold(grad_out, out_shape, b0, nb, cols);
        Eigen::Map<Matrix<Scalar>> gi(grad_in.row(b0).data(), nb * px, shape.channels);
        gi.noalias() = cols * flipped;
      }
    }
    return grad_in;
  }

  std::vector<ParamRef<Scalar>> params() override {
    return {{"kernels", span_of(kernels_), span_of(grad_kernels_)},
            {"bias", span_of(bias_), span_of(grad_bias_)}};
  }

  void clear_cache() override { input_.resize(0, 0); }

 private:
  template <typename M>
  static std::span<Scalar> span_of(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
  }

  static void check_batch(const Matrix<Scalar>& in, ImageShape shape) {
    if (in.cols() != static_cast<Eigen::Index>(shape.size())) {
      throw ShapeMismatch("conv2d input width does not match its shape");
    }
  }

  Eigen::Index chunk_size(Eigen::Index batch) const {
    const auto widest = std::max(this->input_shape().channels, this->output_shape().channels);
    const auto per_example = this->input_shape().pixels() * k_ * k_ * widest;
    const auto c = std::max<std::size_t>(1, kChunkValues / std::max<std::size_t>(1, per_example));
    return std::min<Eigen::Index>(batch, static_cast<Eigen::Index>(c));
  }

  // Row (dh*k + dw)*C_out + o, column c holds kernel (k-1-dh, k-1-dw, c, o).
  Matrix<Scalar> flip_kernels() const {
    const std::size_t c_in = this->input_shape().channels;
    const std::size_t c_out = this->output_shape().channels;
    Matrix<Scalar> f(k_ * k_ * c_out, c_in);
    for (std::size_t dh = 0; dh < k_; ++dh) {
      for (std::size_t dw = 0; dw < k_; ++dw) {
        const std::size_t src = ((k_ - 1 - dh) * k_ + (k_ - 1 - dw)) * c_in;
        const std::size_t dst = (dh * k_ + dw) * c_out;
        f.middleRows(Eigen::Index(dst), Eigen::Index(c_out)) =
            kernels_.middleRows(Eigen::Index(src), Eigen::Index(c_in)).transpose();
      }
    }
    return f;
  }

  void unfold(const Matrix<Scalar>& in, ImageShape shape, Eigen::Index b0, Eigen::Index nb,
              Matrix<Scalar>& cols) const {
    const Eigen::Index px = static_cast<Eigen::Index>(shape.pixels());
    const Eigen::Index width = static_cast<Eigen::Index>(k_ * k_ * shape.channels);
    cols.resize(nb * px, width);
    const auto per = static_cast<std::size_t>(px * width);
    for (Eigen::Index i = 0; i < nb; ++i) {
      im2col<Scalar>({in.row(b0 + i).data(), static_cast<std::size_t>(in.cols())}, shape, k_,
                     {cols.data() + i * per, per});
    }
  }

  std::size_t k_;
  Matrix<Scalar> kernels_;
  Vector<Scalar> bias_;
  Matrix<Scalar> grad_kernels_;
  Vector<Scalar> grad_bias_;
  Matrix<Scalar> input_;
};

template <typename Scalar>
class ReluLayer final : public Layer<Scalar> {
 public:
  ReluLayer(LayerSpec spec, ImageShape in) : Layer<Scalar>(spec, in, in) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& in, const ForwardContext&) override {
    output_ = relu(in);
    return output_;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) override {
    if (output_.rows() != grad_out.rows()) throw StaleForwardState("relu: no cached forward");
    return grad_out.cwiseProduct((output_.array() > Scalar(0)).template cast<Scalar>().matrix());
  }

  void clear_cache() override { output_.resize(0, 0); }

 private:
  Matrix<Scalar> output_;
};

template <typename Scalar>
class DropoutLayer final : public Layer<Scalar> {
 public:
  DropoutLayer(LayerSpec spec, ImageShape in) : Layer<Scalar>(spec, in, in) {
    if (!(spec.rate >= 0.0 && spec.rate < 1.0)) {
      throw std::invalid_argument("dropout rate must be in [0,1)");
    }
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& in, const ForwardContext& ctx) override {
    const auto seed = derive_key({ctx.mask_seed, ctx.layer_index});
    mask_ = dropout_mask<Scalar>(in.rows(), in.cols(), this->spec().rate, ctx.mode, seed);
    return in.cwiseProduct(mask_);
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) override {
    if (mask_.rows() != grad_out.rows()) throw StaleForwardState("dropout: no cached forward");
    return grad_out.cwiseProduct(mask_);
  }

  void clear_cache() override { mask_.resize(0, 0); }

 private:
  Matrix<Scalar> mask_;
};

template <typename Scalar>
class FlattenLayer final : public Layer<Scalar> {
 public:
  FlattenLayer(LayerSpec spec, ImageShape in) : Layer<Scalar>(spec, in, {1, 1, in.size()}) {}

  // Storage is already flat per example; only the shape bookkeeping changes.
  Matrix<Scalar> forward(const Matrix<Scalar>& in, const ForwardContext&) override { return in; }
  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) override { return grad_out; }
};

template <typename Scalar>
class DenseLayer final : public Layer<Scalar> {
 public:
  DenseLayer(LayerSpec spec, ImageShape in)
      : Layer<Scalar>(spec, in, {1, 1, spec.units}),
        weights_(Matrix<Scalar>::Zero(in.size(), spec.units)),
        bias_(Vector<Scalar>::Zero(spec.units)),
        grad_weights_(Matrix<Scalar>::Zero(in.size(), spec.units)),
        grad_bias_(Vector<Scalar>::Zero(spec.units)) {
    if (spec.units == 0) throw ShapeMismatch("dense layer needs at least one unit");
  }

  Matrix<Scalar>& weights() { return weights_; }
  Vector<Scalar>& bias() { return bias_; }
  std::size_t fan_in() const { return this->input_shape().size(); }

  Matrix<Scalar> forward(const Matrix<Scalar>& in, const ForwardContext&) override {
    input_ = in;
    return dense_forward(in, weights_, bias_);
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) override {
    if (input_.rows() != grad_out.rows()) throw StaleForwardState("dense: no cached forward");
    grad_weights_.noalias() = input_.transpose() * grad_out;
    grad_bias_ = grad_out.colwise().sum().transpose();
    return grad_out * weights_.transpose();
  }

  std::vector<ParamRef<Scalar>> params() override {
    return {{"weights", {weights_.data(), static_cast<std::size_t>(weights_.size())},
             {grad_weights_.data(), static_cast<std::size_t>(grad_weights_.size())}},
            {"bias", {bias_.data(), static_cast<std::size_t>(bias_.size())},
             {grad_bias_.data(), static_cast<std::size_t>(grad_bias_.size())}}};
  }

  void clear_cache() override { input_.resize(0, 0); }

 private:
  Matrix<Scalar> weights_;
  Vector<Scalar> bias_;
  Matrix<Scalar> grad_weights_;
  Vector<Scalar> grad_bias_;
  Matrix<Scalar> input_;
};

/// Output activation. The network fuses it with the loss during training,
/// so its own backward is only used when called directly.
template <typename Scalar>
class SigmoidLayer final : public Layer<Scalar> {
 public:
  SigmoidLayer(LayerSpec spec, ImageShape in) : Layer<Scalar>(spec, in, in) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& in, const ForwardContext&) override {
    output_ = sigmoid(in);
    return output_;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) override {
    if (output_.rows() != grad_out.rows()) throw StaleForwardState("sigmoid: no cached forward");
    return grad_out.cwiseProduct(output_.cwiseProduct((Scalar(1) - output_.array()).matrix()));
  }

  void clear_cache() override { output_.resize(0, 0); }

 private:
  Matrix<Scalar> output_;
};

template <typename Scalar>
std::unique_ptr<Layer<Scalar>> make_layer(const LayerSpec& spec, ImageShape in) {
  switch (spec.kind) {
    case LayerKind::kConv2d: return std::make_unique<Conv2dLayer<Scalar>>(spec, in);
    case LayerKind::kRelu: return std::make_unique<ReluLayer<Scalar>>(spec, in);
    case LayerKind::kDropout: return std::make_unique<DropoutLayer<Scalar>>(spec, in);
    case LayerKind::kFlatten: return std::make_unique<FlattenLayer<Scalar>>(spec, in);
    case LayerKind::kDense: return std::make_unique<DenseLayer<Scalar>>(spec, in);
    case LayerKind::kSigmoid: return std::make_unique<SigmoidLayer<Scalar>>(spec, in);
  }
  throw std::invalid_argument("unknown layer kind");
}

std::string to_string(const LayerSpec& spec);
LayerSpec parse_layer_spec(const std::string& text);

}  // namespace comute::nn
