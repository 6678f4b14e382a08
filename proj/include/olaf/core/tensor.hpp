// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "olaf/core/error.hpp"

namespace olaf {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape &s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape &s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + "]";
}

/// Dense row-major tensor of doubles. Value semantics throughout; all layers
/// of the toolkit (kernels, autograd, models) operate on this one type.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)),
        data_(static_cast<size_t>(shape_numel(shape_)), fill) {
    for (int64_t d : shape_)
      OLAF_CHECK(d > 0, ShapeError, "Tensor: non-positive dim in %s",
                 shape_str(shape_).c_str());
  }

  static Tensor from_data(Shape shape, std::vector<double> data) {
    Tensor t;
    OLAF_CHECK(shape_numel(shape) == static_cast<int64_t>(data.size()), ShapeError,
               "Tensor::from_data: %lld values for shape %s",
               static_cast<long long>(data.size()), shape_str(shape).c_str());
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const Shape &shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool defined() const { return !shape_.empty(); }

  double *data() { return data_.data(); }
  const double *data() const { return data_.data(); }

  double &operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  /// 4-D accessor (NCHW). Used by tests and glue code, not by hot kernels.
  double &at(int64_t a, int64_t b, int64_t c, int64_t d) {
    return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
  }
  double at(int64_t a, int64_t b, int64_t c, int64_t d) const {
    return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape new_shape) const {
    OLAF_CHECK(shape_numel(new_shape) == numel(), ShapeError,
               "reshape %s -> %s changes element count", shape_str(shape_).c_str(),
               shape_str(new_shape).c_str());
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
  }

  bool same_shape(const Tensor &other) const { return shape_ == other.shape_; }

private:
  Shape shape_;
  std::vector<double> data_;
};

inline double max_abs_diff(const Tensor &a, const Tensor &b) {
  OLAF_CHECK(a.same_shape(b), ShapeError, "max_abs_diff: shape mismatch %s vs %s",
             shape_str(a.shape()).c_str(), shape_str(b.shape()).c_str());
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = std::abs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

} // namespace olaf
