#include "fiberspec/nn/network.hpp"

#include <algorithm>
#include <cmath>

#include "fiberspec/error.hpp"

namespace fiberspec::nn {

template <class T>
Network<T>::Network(Shape input_shape, std::vector<LayerSpec> specs)
    : input_shape_(std::move(input_shape)), specs_(std::move(specs)) {
  Shape shape = input_shape_;
  layers_.reserve(specs_.size());
  for (const auto& spec : specs_) {
    layers_.push_back(make_layer<T>(spec));
    shape = layers_.back()->output_shape(shape);
  }
}

template <class T>
Shape Network<T>::output_shape() const {
  Shape shape = input_shape_;
  for (const auto& layer : layers_) shape = layer->output_shape(shape);
  return shape;
}

template <class T>
void Network<T>::init_weights(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  for (auto& layer : layers_) {
    const auto& spec = layer->spec();
    std::size_t fan_in = 0;
    if (spec.kind == LayerKind::dense) fan_in = spec.in_features;
    if (spec.kind == LayerKind::conv1d) fan_in = spec.in_channels * spec.kernel;
    for (auto* p : layer->params()) {
      if (p->name == "weight") {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : p->value.values()) v = static_cast<T>(dist(gen));
      } else if (p->name == "gamma" || p->name == "running_var") {
        p->value.fill(T{1});
      } else {
        p->value.fill(T{0});
      }
    }
  }
  rng_.seed(seed ^ 0x9e3779b97f4a7c15ULL);
}

template <class T>
std::size_t Network<T>::head_end(Head head) const noexcept {
  if (head == Head::logits && ends_with_softmax()) return layers_.size() - 1;
  return layers_.size();
}

template <class T>
bool Network<T>::ends_with_softmax() const noexcept {
  return !specs_.empty() && specs_.back().kind == LayerKind::softmax;
}

template <class T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Mode mode, Head head) {
  return forward_prefix(x, head_end(head), mode);
}

template <class T>
Tensor<T> Network<T>::forward_prefix(const Tensor<T>& x, std::size_t end, Mode mode) {
  if (x.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1)) {
    fail(ErrorCode::ShapeMismatch, "network input " + shape_to_string(x.shape()) + " does not match [N, " +
                                       shape_to_string(input_shape_) + "]");
  }
  if (end > layers_.size()) fail(ErrorCode::IndexOutOfRange, "forward_prefix end beyond layer count");
  require_finite(x, "network input");
  Tensor<T> a = x;
  for (std::size_t i = 0; i < end; ++i) a = layers_[i]->forward(a, mode, rng_);
  return a;
}

template <class T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad, Head head) {
  Tensor<T> g = grad;
  for (std::size_t i = head_end(head); i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

template <class T>
std::vector<Param<T>*> Network<T>::parameters() {
  std::vector<Param<T>*> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto* p : layers_[i]->params()) {
      if (p->learnable) out.push_back(p);
    }
  }
  return out;
}

template <class T>
std::vector<Param<T>*> Network<T>::state() {
  std::vector<Param<T>*> out;
  for (auto& layer : layers_) {
    for (auto* p : layer->params()) out.push_back(p);
  }
  return out;
}

template <class T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    for (const auto* p : layer->params()) {
      if (p->learnable) n += p->value.size();
    }
  }
  return n;
}

template <class T>
void Network<T>::copy_state_from(Network& other) {
  if (other.specs_ != specs_ || other.input_shape_ != input_shape_) {
    fail(ErrorCode::ShapeMismatch, "copy_state_from: architectures differ");
  }
  auto dst = state();
  auto src = other.state();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

template <class T>
template <class U>
Network<U> Network<T>::cast() const {
  Network<U> out(input_shape_, specs_);
  auto dst = out.state();
  std::size_t k = 0;
  for (const auto& layer : layers_) {
    for (const auto* p : layer->params()) {
      dst[k++]->value = p->value.template cast<U>();
    }
  }
  return out;
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

// ---------------------------------------------------------------------------

NetworkBuilder::NetworkBuilder(Shape input_shape) : input_shape_(input_shape), current_(std::move(input_shape)) {}

NetworkBuilder& NetworkBuilder::push(const LayerSpec& spec) {
  auto layer = make_layer<float>(spec);
  current_ = layer->output_shape(current_);
  specs_.push_back(spec);
  trace_.push_back(current_);
  return *this;
}

NetworkBuilder& NetworkBuilder::conv1d(std::size_t filters, std::size_t kernel, std::size_t stride,
                                       std::size_t padding) {
  if (current_.size() != 2) fail(ErrorCode::SpecInvalid, "conv1d needs a [C, L] input");
  return push(LayerSpec::conv1d(current_[0], filters, kernel, stride, padding));
}

NetworkBuilder& NetworkBuilder::dense(std::size_t units) {
  if (current_.size() != 1) fail(ErrorCode::SpecInvalid, "dense needs a flat input; add flatten first");
  return push(LayerSpec::dense(current_[0], units));
}

NetworkBuilder& NetworkBuilder::relu() { return push(LayerSpec::relu()); }

NetworkBuilder& NetworkBuilder::batchnorm1d(double epsilon, double momentum) {
  if (current_.size() != 1) fail(ErrorCode::SpecInvalid, "batchnorm1d needs a flat input");
  return push(LayerSpec::batchnorm1d(current_[0], epsilon, momentum));
}

NetworkBuilder& NetworkBuilder::dropout(double rate) { return push(LayerSpec::dropout(rate)); }
NetworkBuilder& NetworkBuilder::softmax() { return push(LayerSpec::softmax()); }
NetworkBuilder& NetworkBuilder::flatten() { return push(LayerSpec::flatten()); }

}  // namespace fiberspec::nn
