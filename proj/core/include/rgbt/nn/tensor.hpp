// Dense row-major double tensor. Buffers are shared on copy; mutation is
// reserved for freshly created tensors and optimizer parameter updates.
#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "rgbt/errors.hpp"

namespace rgbt::nn {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}
  Tensor(std::vector<int64_t> shape, std::vector<double> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (static_cast<int64_t>(data_->size()) != count(shape_)) {
      throw ShapeMismatchError("Tensor: value count does not match shape");
    }
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data(), t.data() + t.size(), v);
    return t;
  }
  static Tensor scalar(double v) { return full({1}, v); }

  bool defined() const { return data_ != nullptr; }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  int64_t dim(int i) const { return shape_.at(i); }
  int rank() const { return static_cast<int>(shape_.size()); }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  double& operator[](int64_t i) { return (*data_)[i]; }
  double operator[](int64_t i) const { return (*data_)[i]; }

  double item() const {
    if (size() != 1) throw ShapeMismatchError("Tensor::item on non-scalar");
    return (*data_)[0];
  }

  /// Deep copy with its own buffer.
  Tensor clone() const {
    if (!defined()) return Tensor();
    return Tensor(shape_, *data_);
  }

  /// Same buffer, new shape (element count must match).
  Tensor reshaped(std::vector<int64_t> new_shape) const {
    if (count(new_shape) != size()) throw ShapeMismatchError("Tensor::reshaped: size mismatch");
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  static int64_t count(const std::vector<int64_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), int64_t{1}, std::multiplies<int64_t>());
  }

 private:
  std::vector<int64_t> shape_;
  std::shared_ptr<std::vector<double>> data_;
};

}  // namespace rgbt::nn
