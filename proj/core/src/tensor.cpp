#include "stal/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace stal::nn {

std::int64_t shape_volume(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  if (shape_.size() > 5) throw std::invalid_argument("tensor rank > 5");
  data_.assign(static_cast<std::size_t>(shape_volume(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_.size() > 5) throw std::invalid_argument("tensor rank > 5");
  if (shape_volume(shape_) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("tensor data length does not match shape");
  }
  data_ = std::move(values);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::int64_t Tensor::offset(std::initializer_list<int> idx) const {
  if (idx.size() != shape_.size()) throw std::invalid_argument("index rank mismatch");
  std::int64_t off = 0;
  std::size_t axis = 0;
  for (int i : idx) {
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ',';
    os << shape_[i];
  }
  os << ')';
  return os.str();
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_volume(shape) != size()) {
    throw std::invalid_argument("reshape changes element count");
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::add(const Tensor& other) {
  if (!same_shape(other)) throw std::invalid_argument("add: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::add_scaled(const Tensor& other, double alpha) {
  if (!same_shape(other)) throw std::invalid_argument("add_scaled: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * other.data_[i];
}

void Tensor::scale(double alpha) {
  for (double& v : data_) v *= alpha;
}

}  // namespace stal::nn
