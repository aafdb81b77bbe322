#include "fgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fgnn {

std::int64_t shape_product(std::span<const int> shape) {
  std::int64_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive");
    n *= e;
  }
  return n;
}

std::int64_t row_major_offset(std::span<const int> shape, std::span<const int> idx) {
  if (idx.size() != shape.size())
    throw std::out_of_range("index rank " + std::to_string(idx.size()) +
                            " does not match tensor rank " + std::to_string(shape.size()));
  std::int64_t off = 0;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (idx[d] < 0 || idx[d] >= shape[d])
      throw std::out_of_range("index " + std::to_string(idx[d]) + " out of bounds for extent " +
                              std::to_string(shape[d]) + " at dim " + std::to_string(d));
    off = off * shape[d] + idx[d];
  }
  return off;
}

std::vector<int> unravel_index(std::span<const int> shape, std::int64_t flat) {
  std::vector<int> idx(shape.size());
  for (std::size_t d = shape.size(); d-- > 0;) {
    idx[d] = static_cast<int>(flat % shape[d]);
    flat /= shape[d];
  }
  return idx;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), values_(static_cast<std::size_t>(shape_product(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (static_cast<std::int64_t>(values_.size()) != shape_product(shape_))
    throw ShapeError("tensor value count " + std::to_string(values_.size()) +
                     " does not match shape product");
}

std::int64_t Tensor::offset(std::span<const int> idx) const {
  return row_major_offset(shape_, idx);
}

double Tensor::min() const { return *std::min_element(values_.begin(), values_.end()); }
double Tensor::max() const { return *std::max_element(values_.begin(), values_.end()); }

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace fgnn
