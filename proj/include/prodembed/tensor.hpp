// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prodembed/rng.hpp"

namespace prodembed::num {

// Dense row-major tensor of doubles. The flat data length always equals the
// product of the dims; most kernels interpret it as a matrix whose column
// count is the last dim.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  // Matrix view: all leading dims collapsed into rows, last dim as columns.
  std::int64_t rows() const { return shape_.empty() ? 0 : size() / cols(); }
  int cols() const { return shape_.empty() ? 0 : shape_.back(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols() + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  void fill(double v);
  void zero() { fill(0.0); }

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Elementwise draws from the generator.
Tensor random_normal(std::vector<int> shape, double mean, double stddev, Rng& rng);
Tensor random_truncnorm(std::vector<int> shape, double mean, double stddev, Rng& rng);
Tensor random_uniform(std::vector<int> shape, double lo, double hi, Rng& rng);

// Numerically stabilized softmax over the last axis. Rejects non-finite
// input; every output slice is non-negative and sums to 1.
Tensor softmax(const Tensor& logits);

// Mean over flagged rows of -log softmax(logits)[target]. Rows whose flag is
// false contribute exactly zero. Throws if no row is flagged or a target is
// out of range.
double masked_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<std::uint8_t>& mask_flags);

}  // namespace prodembed::num
