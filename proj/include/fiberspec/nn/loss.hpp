#pragma once

#include <span>

#include "fiberspec/nn/tensor.hpp"

namespace fiberspec::nn {

enum class LossKind { cross_entropy, mse };

template <class T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d input, same shape as the loss input
};

/// Mean over the batch of -log softmax(logits)[target]. Gradient is
/// (softmax - onehot) / batch.
template <class T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

/// Mean over all elements of the squared difference; gradient 2(out - target)/N.
template <class T>
LossResult<T> mse(const Tensor<T>& output, const Tensor<T>& target);

}  // namespace fiberspec::nn
