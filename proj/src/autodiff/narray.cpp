#include "advp/autodiff/narray.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

namespace advp {

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

NArray::NArray(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(shape_size(shape_), fill);
}

NArray::NArray(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_))
    throw ShapeError("shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
}

NArray NArray::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return NArray(Shape{n}, std::move(values));
}

NArray NArray::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return NArray(Shape{rows, cols}, std::move(values));
}

double NArray::item() const {
  if (data_.size() != 1)
    throw ShapeError("item() needs a single element, shape is " + shape_string(shape_));
  return data_[0];
}

bool NArray::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void NArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool bitwise_equal(const NArray& a, const NArray& b) {
  return a.shape() == b.shape() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace advp
