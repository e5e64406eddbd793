#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "comute/nn/layers.hpp"

namespace comute::nn {

/// Hyperparameters of the conv stack: `conv_layers` same-padded layers of
/// `kernels` maps each, then a hidden dense layer with ReLU and dropout, and
/// a sigmoid output with one unit per grid.
struct Architecture {
  std::size_t conv_layers = 3;
  std::size_t kernels = 16;
  std::size_t kernel_size = 5;
  std::size_t hidden_units = 128;
  double dropout = 0.6;
};

std::vector<LayerSpec> build_layer_specs(const Architecture& arch, std::size_t n_outputs);

/// Ordered layer stack ending in a sigmoid. Parameters are He-initialized
/// from a stream keyed by (rng_seed, layer index); biases start at zero.
template <typename Scalar>
class Network {
 public:
  Network(ImageShape input, std::vector<LayerSpec> specs, std::uint64_t rng_seed)
      : input_(input), specs_(std::move(specs)), rng_seed_(rng_seed) {
    if (specs_.empty() || specs_.back().kind != LayerKind::kSigmoid) {
      throw ShapeMismatch("network must end with a sigmoid layer");
    }
    ImageShape shape = input_;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (specs_[i].kind == LayerKind::kConv2d && (shape.height == 0 || shape.width == 0)) {
        throw ShapeMismatch("conv2d requires a spatial input");
      }
      if (specs_[i].kind == LayerKind::kSigmoid && i + 1 != specs_.size()) {
        throw ShapeMismatch("sigmoid is only allowed as the final layer");
      }
      layers_.push_back(make_layer<Scalar>(specs_[i], shape));
      if (i == 0) layers_.back()->set_input_grad(false);
      shape = layers_.back()->output_shape();
    }
    initialize();
  }

  Network(const Network& other) : Network(other.input_, other.specs_, other.rng_seed_) {
    set_parameters(other.get_parameters());
    mode_ = other.mode_;
  }

  Network& operator=(const Network& other) {
    if (this != &other) *this = Network(other);
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  ImageShape input_shape() const { return input_; }
  std::size_t n_outputs() const { return layers_.back()->output_shape().size(); }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::uint64_t rng_seed() const { return rng_seed_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }
  std::size_t layer_count() const { return layers_.size(); }
  Layer<Scalar>& layer(std::size_t i) { return *layers_[i]; }

  /// Returns per-grid probabilities; logits are kept for the loss. In
  /// training mode dropout masks derive from mask_seed.
  Matrix<Scalar> forward(const Matrix<Scalar>& inputs, std::uint64_t mask_seed = 0) {
    if (inputs.cols() != static_cast<Eigen::Index>(input_.size())) {
      throw ShapeMismatch("input width does not match the network input shape");
    }
    ForwardContext ctx{mode_, mask_seed, 0};
    Matrix<Scalar> x = inputs;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
      ctx.layer_index = i;
      x = layers_[i]->forward(x, ctx);
    }
    logits_ = std::move(x);
    ctx.layer_index = layers_.size() - 1;
    forward_fresh_ = true;
    return layers_.back()->forward(logits_, ctx);
  }

  const Matrix<Scalar>& logits() const { return logits_; }

  /// Sigmoid cross-entropy of the last forward pass against `truth`.
  double loss(const Matrix<Scalar>& truth) const { return bce_with_logits(logits_, truth); }

  /// Fills every parameter gradient of the mean sigmoid cross-entropy of the
  /// last forward pass and returns the loss. The output gradient is fused:
  /// (sigmoid(z) - y) / (P * N).
  double backward(const Matrix<Scalar>& truth) {
    if (!forward_fresh_ || logits_.rows() != truth.rows()) {
      throw StaleForwardState("backward requires a forward pass on the same batch");
    }
    if (logits_.cols() != truth.cols()) throw ShapeMismatch("truth width differs from outputs");
    const double value = loss(truth);
    const Scalar scale = Scalar(1.0 / static_cast<double>(truth.size()));
    Matrix<Scalar> grad = (sigmoid(logits_) - truth) * scale;
    for (std::size_t i = layers_.size() - 1; i-- > 0;) grad = layers_[i]->backward(grad);
    forward_fresh_ = false;
    return value;
  }

  std::vector<ParamRef<Scalar>> params() {
    std::vector<ParamRef<Scalar>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (auto& p : layers_[i]->params()) {
        p.name = "layer" + std::to_string(i) + "." + p.name;
        out.push_back(std::move(p));
      }
    }
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.value.size();
    return n;
  }

  std::vector<Scalar> get_parameters() const {
    std::vector<Scalar> flat;
    for (const auto& p : const_cast<Network*>(this)->params()) {
      flat.insert(flat.end(), p.value.begin(), p.value.end());
    }
    return flat;
  }

  void set_parameters(std::span<const Scalar> flat) {
    std::size_t pos = 0;
    for (auto& p : params()) {
      if (pos + p.value.size() > flat.size()) throw ShapeMismatch("parameter vector too short");
      std::copy_n(flat.begin() + pos, p.value.size(), p.value.begin());
      pos += p.value.size();
    }
    if (pos != flat.size()) throw ShapeMismatch("parameter vector too long");
  }

  std::vector<Scalar> get_gradients() {
    std::vector<Scalar> flat;
    for (const auto& p : params()) flat.insert(flat.end(), p.grad.begin(), p.grad.end());
    return flat;
  }

  void clear_cache() {
    for (auto& l : layers_) l->clear_cache();
    logits_.resize(0, 0);
    forward_fresh_ = false;
  }

 private:
  void initialize() {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      CounterStream stream(StreamTag::kInit, {rng_seed_, i});
      if (auto* conv = dynamic_cast<Conv2dLayer<Scalar>*>(layers_[i].get())) {
        fill_he(conv->kernels(), conv->fan_in(), stream);
      } else if (auto* dense = dynamic_cast<DenseLayer<Scalar>*>(layers_[i].get())) {
        fill_he(dense->weights(), dense->fan_in(), stream);
      }
    }
  }

  template <typename M>
  static void fill_he(M& m, std::size_t fan_in, CounterStream& stream) {
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar(sd * stream.normal());
  }

  ImageShape input_;
  std::vector<LayerSpec> specs_;
  std::uint64_t rng_seed_;
  Mode mode_ = Mode::kInference;
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
  Matrix<Scalar> logits_;
  bool forward_fresh_ = false;
};

}  // namespace comute::nn
