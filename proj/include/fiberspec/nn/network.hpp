#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fiberspec/nn/layers.hpp"

namespace fiberspec::nn {

/// Where a forward/backward pass stops. `logits` skips a trailing softmax so
/// cross-entropy can be fused with it.
enum class Head { full, logits };

/// Sequential stack of layers over a fixed per-sample input shape.
template <class T>
class Network {
 public:
  Network(Shape input_shape, std::vector<LayerSpec> specs);

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const Shape& input_shape() const noexcept { return input_shape_; }
  Shape output_shape() const;
  const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

  /// Kaiming-uniform fan-in weights for dense/conv1d, zero biases, batchnorm
  /// gamma 1 and beta 0. Also reseeds the dropout stream.
  void init_weights(std::uint64_t seed);

  void seed_rng(std::uint64_t seed) { rng_.seed(seed); }
  std::mt19937_64& rng() noexcept { return rng_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Head head = Head::full);
  /// Runs layers [0, end) only.
  Tensor<T> forward_prefix(const Tensor<T>& x, std::size_t end, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad, Head head = Head::full);

  /// Learnable parameters in layer order.
  std::vector<Param<T>*> parameters();
  /// Learnable parameters and buffers; what a checkpoint stores.
  std::vector<Param<T>*> state();
  std::size_t parameter_count() const;

  bool ends_with_softmax() const noexcept;

  /// Same architecture and state in another precision.
  template <class U>
  Network<U> cast() const;

  /// Copies all state (parameters and buffers) from a network of equal architecture.
  void copy_state_from(Network& other);

 private:
  std::size_t head_end(Head head) const noexcept;

  Shape input_shape_;
  std::vector<LayerSpec> specs_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::mt19937_64 rng_{0};
};

/// Fills in input-size fields of a layer list from the input shape, so
/// architectures can be written by output sizes only.
class NetworkBuilder {
 public:
  explicit NetworkBuilder(Shape input_shape);

  NetworkBuilder& conv1d(std::size_t filters, std::size_t kernel, std::size_t stride = 1,
                         std::size_t padding = 0);
  NetworkBuilder& dense(std::size_t units);
  NetworkBuilder& relu();
  NetworkBuilder& batchnorm1d(double epsilon = 1e-5, double momentum = 0.1);
  NetworkBuilder& dropout(double rate);
  NetworkBuilder& softmax();
  NetworkBuilder& flatten();

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& current_shape() const noexcept { return current_; }
  const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
  /// Per-sample activation shape after each layer.
  const std::vector<Shape>& trace() const noexcept { return trace_; }

  template <class T>
  Network<T> build() const {
    return Network<T>(input_shape_, specs_);
  }

 private:
  NetworkBuilder& push(const LayerSpec& spec);

  Shape input_shape_;
  Shape current_;
  std::vector<LayerSpec> specs_;
  std::vector<Shape> trace_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace fiberspec::nn
