#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fedtrig/error.hpp"

namespace fedtrig::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

// Dense row-major array of doubles. Rank 0 is a scalar.
//
// Every value must be finite; constructors and the checked setters reject
// NaN/Inf so that a bad value is caught where it is produced.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {
    validate_extents();
    check_finite("Tensor");
  }

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : shape_(std::move(shape)), data_(std::move(data)),
        requires_grad_(requires_grad) {
    validate_extents();
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("Tensor: shape " + ad::to_string(shape_) + " needs " +
                       std::to_string(element_count(shape_)) +
                       " values, got " + std::to_string(data_.size()));
    }
    check_finite("Tensor");
  }

  static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  // Extent of the last axis; 1 for scalars.
  std::size_t last_extent() const {
    return shape_.empty() ? 1 : shape_.back();
  }

  // Number of last-axis slices.
  std::size_t outer_count() const {
    return shape_.empty() ? 1 : size() / shape_.back();
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool value) { requires_grad_ = value; }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double at(std::size_t row, std::size_t col) const {
    return data_[row * shape_.back() + col];
  }

  double item() const {
    if (data_.size() != 1) {
      throw ShapeError("Tensor::item on shape " + ad::to_string(shape_));
    }
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (element_count(shape) != data_.size()) {
      throw ShapeError("reshape " + ad::to_string(shape_) + " -> " +
                       ad::to_string(shape));
    }
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void check_finite(const char* where) const {
    if (!all_finite()) {
      throw NumericError(std::string(where) + ": non-finite value in tensor of shape " +
                         ad::to_string(shape_));
    }
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw ShapeError("Tensor extents must be positive");
    }
  }

  Shape shape_;
  std::vector<double> data_ = std::vector<double>(1, 0.0);
  bool requires_grad_ = false;
};

}  // namespace fedtrig::ad
