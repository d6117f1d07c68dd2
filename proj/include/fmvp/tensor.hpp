#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fmvp {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float tensor of rank 1..5 (last axis fastest).
///
/// Value type: copies are deep. Shapes are validated on construction; every
/// extent must be positive.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
  static Tensor full(Shape shape, float v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(float v) { return Tensor(Shape{1}, v); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0f); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  const std::vector<float>& vec() const { return data_; }
  float* ptr() { return data_.data(); }
  const float* ptr() const { return data_.data(); }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  /// Single-element value; throws ContractError unless numel() == 1.
  float item() const;

  /// Offset of a rank-5 index (b, c, t, h, w).
  std::size_t offset5(std::size_t b, std::size_t c, std::size_t t, std::size_t h,
                      std::size_t w) const {
    return (((b * shape_[1] + c) * shape_[2] + t) * shape_[3] + h) * shape_[4] + w;
  }

  /// Same data, new extents with an identical element count.
  Tensor reshaped(Shape shape) const;

  /// Slice [begin, end) along axis 0.
  Tensor slice0(std::size_t begin, std::size_t end) const;

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Concatenate along axis 0; trailing extents must agree.
Tensor concat0(std::span<const Tensor> items);

void require_same_shape(const char* what, const Tensor& a, const Tensor& b);

}  // namespace fmvp
