// SPDX-License-Identifier: Apache-2.0
#include "stst/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "stst/error.hpp"

namespace stst::nn {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {
  if (shape_.empty() || shape_.size() > 4) throw Error(ErrorKind::ShapeMismatch, "tensor rank must be 1..4");
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 4) throw Error(ErrorKind::ShapeMismatch, "tensor rank must be 1..4");
  if (data_.size() != element_count(shape_)) {
    throw Error(ErrorKind::ShapeMismatch, "data length " + std::to_string(data_.size()) + " does not match shape " +
                                              shape_string(shape_));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace stst::nn
