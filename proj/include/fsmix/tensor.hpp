#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "fsmix/common.hpp"

namespace fsmix {

// Dense row-major double tensor. All numerics in this project run in
// double precision; images and feature maps use [B, C, H, W] layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}
  Tensor(std::vector<int64_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != checked_numel(shape_))
      throw ShapeError("Tensor: data size does not match shape");
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool defined() const { return !shape_.empty(); }

  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Index helpers for the common layouts.
  double& at2(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * dim(1) + j)]; }
  double at2(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * dim(1) + j)]; }
  double& at4(int64_t b, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((b * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }
  double at4(int64_t b, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((b * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor reshaped(std::vector<int64_t> new_shape) const {
    if (checked_numel(new_shape) != numel())
      throw ShapeError("reshape: element count mismatch");
    return Tensor(std::move(new_shape), data_);
  }

  static int64_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d <= 0) throw ShapeError("Tensor: dimensions must be positive");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<int64_t>& shape);
inline std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

}  // namespace fsmix
