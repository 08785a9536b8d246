#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "fedpart/error.hpp"

namespace fedpart {

// Row-major dense buffer of doubles. shape[0] is the row (sample) axis for
// batched data.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
      : shape(std::move(shape_)), data(std::move(data_)) {
    if (element_count(shape) != data.size()) {
      throw Error(ErrorCode::ShapeMismatch, "tensor shape does not match buffer length");
    }
  }

  static Tensor zeros(std::vector<std::size_t> shape_) {
    const std::size_t n = element_count(shape_);
    return Tensor(std::move(shape_), std::vector<double>(n, 0.0));
  }

  static std::size_t element_count(std::span<const std::size_t> dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t row_size() const {
    return shape.size() <= 1 ? 1 : element_count(std::span(shape).subspan(1));
  }
  std::span<const double> row(std::size_t i) const {
    return std::span(data).subspan(i * row_size(), row_size());
  }
};

}  // namespace fedpart
