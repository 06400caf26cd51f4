#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fiberspec::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_to_string(const Shape& shape);
/// Parses "2x3x4"; the inverse of shape_to_string.
Shape parse_shape(std::string_view text);

/// Dense row-major array. Batch is always the leading axis.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{});
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Same data, new shape with the same element count.
  void reshape(Shape shape);
  Tensor reshaped(Shape shape) const;

  /// Rows [begin, end) of the leading axis.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  /// Gathers the listed rows of the leading axis.
  Tensor gather_rows(std::span<const std::size_t> rows) const;

  void fill(T value);

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Throws NonFinite naming `where` if any element is NaN or infinite.
template <class T>
void require_finite(const Tensor<T>& t, std::string_view where);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fiberspec::nn
