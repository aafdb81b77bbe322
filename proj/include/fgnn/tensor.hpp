#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fgnn/errors.hpp"

namespace fgnn {

// Dense real tensor, row-major (last index fastest). Scalars are rank-0
// tensors with a single value.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  // Flat access, no bounds check beyond vector's.
  double operator[](std::int64_t flat) const { return values_[static_cast<std::size_t>(flat)]; }
  double& operator[](std::int64_t flat) { return values_[static_cast<std::size_t>(flat)]; }

  // Bounds-checked multi-index access; throws std::out_of_range.
  double at(std::span<const int> idx) const { return values_[static_cast<std::size_t>(offset(idx))]; }
  double at(std::initializer_list<int> idx) const { return at(std::span<const int>(idx.begin(), idx.size())); }
  double& at(std::span<const int> idx) { return values_[static_cast<std::size_t>(offset(idx))]; }

  std::int64_t offset(std::span<const int> idx) const;

  double min() const;
  double max() const;
  double max_abs() const;

 private:
  std::vector<int> shape_;
  std::vector<double> values_;
};

std::int64_t shape_product(std::span<const int> shape);

// Row-major offset of `idx` in `shape`; throws std::out_of_range on any
// out-of-bounds index.
std::int64_t row_major_offset(std::span<const int> shape, std::span<const int> idx);

// Inverse of row_major_offset.
std::vector<int> unravel_index(std::span<const int> shape, std::int64_t flat);

}  // namespace fgnn
