#include "fiberspec/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fiberspec/error.hpp"

namespace fiberspec::nn {

template <class T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() != 2) fail(ErrorCode::ShapeMismatch, "cross_entropy expects [N, C] logits");
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (c < 2) fail(ErrorCode::ShapeMismatch, "cross_entropy needs at least 2 classes");
  if (targets.size() != n) {
    fail(ErrorCode::ShapeMismatch, "cross_entropy: " + std::to_string(targets.size()) + " targets for batch " +
                                       std::to_string(n));
  }
  LossResult<T> out{0.0, Tensor<T>(logits.shape())};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      fail(ErrorCode::IndexOutOfRange, "target " + std::to_string(t) + " outside [0, " + std::to_string(c) + ")");
    }
    const T* row = logits.raw() + i * c;
    const double mx = *std::max_element(row, row + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    const double log_z = mx + std::log(sum);
    total += log_z - row[t];
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(row[j] - log_z);
      out.grad[i * c + j] = static_cast<T>((p - (static_cast<int>(j) == t ? 1.0 : 0.0)) * inv_n);
    }
  }
  out.loss = total * inv_n;
  if (!std::isfinite(out.loss)) fail(ErrorCode::NonFinite, "cross_entropy loss is not finite");
  return out;
}

template <class T>
LossResult<T> mse(const Tensor<T>& output, const Tensor<T>& target) {
  if (output.shape() != target.shape()) {
    fail(ErrorCode::ShapeMismatch, "mse: " + shape_to_string(output.shape()) + " vs " +
                                       shape_to_string(target.shape()));
  }
  LossResult<T> out{0.0, Tensor<T>(output.shape())};
  const std::size_t n = output.size();
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(output[i]) - static_cast<double>(target[i]);
    total += d * d;
    out.grad[i] = static_cast<T>(2.0 * d * inv_n);
  }
  out.loss = total * inv_n;
  if (!std::isfinite(out.loss)) fail(ErrorCode::NonFinite, "mse loss is not finite");
  return out;
}

template LossResult<float> cross_entropy(const Tensor<float>&, std::span<const int>);
template LossResult<double> cross_entropy(const Tensor<double>&, std::span<const int>);
template LossResult<float> mse(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> mse(const Tensor<double>&, const Tensor<double>&);

}  // namespace fiberspec::nn
