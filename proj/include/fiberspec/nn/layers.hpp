#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fiberspec/nn/tensor.hpp"

namespace fiberspec::nn {

enum class LayerKind { dense, conv1d, relu, batchnorm1d, dropout, softmax, flatten };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// Architecture description of one layer. Only the fields relevant to `kind`
/// are meaningful; the text form lists just those.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;

  // dense
  std::size_t in_features = 0;
  std::size_t units = 0;

  // conv1d
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  // dropout
  double rate = 0.0;

  // batchnorm1d
  std::size_t features = 0;
  double epsilon = 1e-5;
  double momentum = 0.1;

  static LayerSpec dense(std::size_t in, std::size_t units);
  static LayerSpec conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0);
  static LayerSpec relu();
  static LayerSpec batchnorm1d(std::size_t features, double epsilon = 1e-5, double momentum = 0.1);
  static LayerSpec dropout(double rate);
  static LayerSpec softmax();
  static LayerSpec flatten();

  void validate() const;

  /// "kind=conv1d in_channels=1 out_channels=20 kernel=5 stride=1 padding=0"
  std::string to_line() const;
  static LayerSpec parse_line(std::string_view line);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Output length of a conv1d along the spatial axis.
std::size_t conv_output_length(std::size_t in_len, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

enum class Mode { train, eval };

/// A named parameter tensor with its gradient. Buffers (batchnorm running
/// statistics) are carried with learnable == false and no gradient.
template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool learnable = true;
};

template <class T>
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(spec) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const LayerSpec& spec() const noexcept { return spec_; }

  /// Per-sample output shape (batch axis excluded).
  virtual Shape output_shape(const Shape& sample_in) const = 0;

  /// Caches what backward() needs. `rng` is only drawn from by dropout in train mode.
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, std::mt19937_64& rng) = 0;

  /// Gradient w.r.t. the last forward input. Parameter gradients are
  /// overwritten, not accumulated.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual std::vector<Param<T>*> params() { return {}; }

 protected:
  LayerSpec spec_;
};

template <class T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec);

}  // namespace fiberspec::nn
