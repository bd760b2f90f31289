#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace compnet::ad {

using Shape = std::vector<std::size_t>;

/// Number of elements described by `shape`. Throws ShapeError on an empty
/// shape or a zero dimension.
std::size_t element_count(const Shape& shape);

std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. Every dimension is at least 1, so a
/// tensor is never empty; a scalar is shape [1].
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> mutable_data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  /// Value of a single-element tensor.
  double item() const;

  /// Same flat data under a new shape (row-major reinterpretation).
  Tensor reshaped(Shape new_shape) const;

  bool all_finite() const noexcept;

  /// Bitwise comparison of shape and payload (distinguishes -0.0 and NaN
  /// payloads, unlike operator==).
  bool bit_equal(const Tensor& other) const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace compnet::ad
