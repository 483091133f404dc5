#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "stal/rng.hpp"
#include "stal/tensor.hpp"

namespace testutil {

// Fixed pseudo-random projection weights used to reduce a tensor output to a
// scalar loss for finite-difference checks.
inline stal::Tensor loss_weights(const std::vector<int>& shape, std::uint64_t seed) {
  stal::Tensor w(shape);
  stal::Rng rng(seed);
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
  return w;
}

inline double dot(const stal::Tensor& a, const stal::Tensor& b) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Central finite differences against analytic gradients.
//   loss():          full forward pass from current buffer values -> scalar
//   compute_grads(): one analytic forward+backward filling each grad buffer
//   buffers:         (value, grad) pairs to perturb and compare
// Returns the max relative error, with denominators floored at 1e-6.
inline double gradcheck(const std::function<double()>& loss,
                        const std::function<void()>& compute_grads,
                        const std::vector<std::pair<stal::Tensor*, const stal::Tensor*>>& buffers,
                        double h = 1e-5) {
  compute_grads();
  std::vector<stal::Tensor> analytic;
  analytic.reserve(buffers.size());
  for (const auto& [value, grad] : buffers) analytic.push_back(*grad);

  double worst = 0.0;
  for (std::size_t b = 0; b < buffers.size(); ++b) {
    stal::Tensor* value = buffers[b].first;
    for (std::int64_t i = 0; i < value->size(); ++i) {
      const double orig = (*value)[i];
      (*value)[i] = orig + h;
      const double up = loss();
      (*value)[i] = orig - h;
      const double down = loss();
      (*value)[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic[b][i];
      const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-6});
      worst = std::max(worst, std::abs(numeric - exact) / denom);
    }
  }
  return worst;
}

}  // namespace testutil
