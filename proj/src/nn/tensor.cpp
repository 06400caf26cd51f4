#include "fiberspec/nn/tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "fiberspec/error.hpp"

namespace fiberspec::nn {

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

Shape parse_shape(std::string_view text) {
  Shape shape;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto next = text.find('x', pos);
    const auto part = text.substr(pos, next == std::string_view::npos ? text.size() - pos : next - pos);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc{} || ptr != part.data() + part.size() || part.empty()) {
      fail(ErrorCode::ValidationError, "bad shape '" + std::string(text) + "'");
    }
    shape.push_back(value);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return shape;
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    fail(ErrorCode::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_to_string(shape_));
  }
}

template <class T>
void Tensor<T>::reshape(Shape shape) {
  if (shape_product(shape) != data_.size()) {
    fail(ErrorCode::ShapeMismatch, "cannot reshape " + shape_to_string(shape_) + " to " +
                                       shape_to_string(shape));
  }
  shape_ = std::move(shape);
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

template <class T>
Tensor<T> Tensor<T>::slice_rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || end > shape_[0] || begin > end) {
    fail(ErrorCode::IndexOutOfRange, "row slice out of range");
  }
  const std::size_t row = shape_[0] ? data_.size() / shape_[0] : 0;
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(std::move(s), std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                             data_.begin() + static_cast<std::ptrdiff_t>(end * row)));
}

template <class T>
Tensor<T> Tensor<T>::gather_rows(std::span<const std::size_t> rows) const {
  if (shape_.empty()) fail(ErrorCode::ShapeMismatch, "gather on scalar tensor");
  const std::size_t row = shape_[0] ? data_.size() / shape_[0] : 0;
  Shape s = shape_;
  s[0] = rows.size();
  std::vector<T> out;
  out.reserve(rows.size() * row);
  for (auto r : rows) {
    if (r >= shape_[0]) fail(ErrorCode::IndexOutOfRange, "row " + std::to_string(r));
    out.insert(out.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * row),
               data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * row));
  }
  return Tensor(std::move(s), std::move(out));
}

template <class T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <class T>
void require_finite(const Tensor<T>& t, std::string_view where) {
  for (const T v : t.values()) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, std::string(where) + " produced a non-finite value");
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void require_finite(const Tensor<float>&, std::string_view);
template void require_finite(const Tensor<double>&, std::string_view);

}  // namespace fiberspec::nn
