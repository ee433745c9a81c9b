#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tcra/errors.hpp"

namespace tcra {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array. `Real` is the precision tag: double for gradient
/// checks and oracles, float is fine for training throughput.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_numel(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor vector(std::initializer_list<Real> values) {
    return Tensor({values.size()}, std::vector<Real>(values));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<Real> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  const Real& operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const Real& at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  /// Copy of the leading-axis slice `index`; shape drops the first axis.
  Tensor slice(std::size_t index) const {
    if (shape_.empty() || index >= shape_[0]) {
      throw DimensionError("slice " + std::to_string(index) + " out of range for " +
                           shape_str(shape_));
    }
    Shape sub(shape_.begin() + 1, shape_.end());
    const std::size_t stride = shape_numel(sub);
    std::vector<Real> out(data_.begin() + index * stride,
                          data_.begin() + (index + 1) * stride);
    return Tensor(std::move(sub), std::move(out));
  }

  /// Same data viewed under a new shape of equal element count.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    for (auto d : shape_) {
      if (d == 0) throw DimensionError("zero-sized dimension in " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<Real> data_;
};

/// Mean over the rows of a [rows x cols] matrix.
template <typename Real>
Tensor<Real> row_mean(const Tensor<Real>& m) {
  if (m.rank() != 2) throw DimensionError("row_mean expects a matrix, got " + shape_str(m.shape()));
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Tensor<Real> out({cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += m.at(r, c);
  for (std::size_t c = 0; c < cols; ++c) out[c] /= static_cast<Real>(rows);
  return out;
}

template <typename Real>
std::size_t argmax(std::span<const Real> v) {
  // Ties go to the lowest index.
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace tcra
