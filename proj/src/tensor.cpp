#include "fmvp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fmvp/errors.hpp"

namespace fmvp {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 5) {
    throw ShapeError("tensor: rank must be 1..5, got " + std::to_string(shape.size()));
  }
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

float Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("tensor: item() on shape " + shape_str(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice0(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > shape_[0]) {
    throw ShapeError("slice0: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of " + shape_str(shape_));
  }
  const std::size_t inner = numel() / shape_[0];
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(std::move(s), std::vector<float>(data_.begin() + begin * inner,
                                                 data_.begin() + end * inner));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor concat0(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("concat0: no inputs");
  Shape s = items[0].shape();
  std::size_t lead = 0;
  std::vector<float> data;
  for (const auto& t : items) {
    if (t.rank() != s.size() || !std::equal(s.begin() + 1, s.end(), t.shape().begin() + 1)) {
      throw ShapeError("concat0: " + shape_str(s) + " vs " + shape_str(t.shape()));
    }
    lead += t.dim(0);
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  s[0] = lead;
  return Tensor(std::move(s), std::move(data));
}

void require_same_shape(const char* what, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace fmvp
