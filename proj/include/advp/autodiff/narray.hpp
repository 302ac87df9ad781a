#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace advp {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Raised when two operands cannot be combined; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value that must be finite is NaN or infinite.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Dense row-major array of doubles.
class NArray {
 public:
  NArray() = default;
  explicit NArray(Shape shape, double fill = 0.0);
  NArray(Shape shape, std::vector<double> values);

  static NArray scalar(double v) { return NArray(Shape{}, std::vector<double>{v}); }
  static NArray vector(std::vector<double> values);
  static NArray matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.at(1) + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.at(1) + c]; }

  /// Value of a single-element array.
  double item() const;

  bool all_finite() const noexcept;
  void fill(double v);

  bool operator==(const NArray& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Bitwise comparison (distinguishes +0/-0 and compares NaN payloads).
bool bitwise_equal(const NArray& a, const NArray& b);

}  // namespace advp
