#include "compnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "compnet/error.hpp"

namespace compnet::ad {

std::size_t element_count(const Shape& shape) {
  if (shape.empty()) {
    throw ShapeError("shape must have at least one dimension");
  }
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) {
      throw ShapeError("zero-sized dimension in shape " + to_string(shape));
    }
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  const std::size_t n = element_count(shape_);
  if (n != data_.size()) {
    throw ShapeError("shape " + to_string(shape_) + " needs " + std::to_string(n) +
                     " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape new_shape) const {
  const std::size_t n = element_count(new_shape);
  if (n != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(new_shape));
  }
  return Tensor(std::move(new_shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

}  // namespace compnet::ad
