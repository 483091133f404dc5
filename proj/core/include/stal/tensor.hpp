#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace stal::nn {

// Dense row-major tensor of 64-bit floats, rank <= 5. The last axis is the
// channel axis for all feature maps; clips are (batch, time, height, width,
// channels).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(std::initializer_list<int> idx) { return data_[static_cast<std::size_t>(offset(idx))]; }
  double at(std::initializer_list<int> idx) const {
    return data_[static_cast<std::size_t>(offset(idx))];
  }

  // Row-major linear offset of a (possibly partial-rank-checked) index.
  std::int64_t offset(std::initializer_list<int> idx) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  void fill(double value);
  bool all_finite() const;

  // Reinterprets the buffer under a new shape of equal element count.
  Tensor reshaped(std::vector<int> shape) const;

  // In-place elementwise helpers used by the optimizer and grad plumbing.
  void add(const Tensor& other);          // this += other
  void add_scaled(const Tensor& other, double alpha);  // this += alpha * other
  void scale(double alpha);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::int64_t shape_volume(const std::vector<int>& shape);

}  // namespace stal::nn

namespace stal {
using nn::Tensor;  // the tensor type is used across every module
}
