// SPDX-License-Identifier: Apache-2.0
#include "prodembed/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace prodembed::num {

namespace {
std::int64_t checked_size(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: dims must be positive");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(checked_size(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_size(shape_) != static_cast<std::int64_t>(data_.size()))
    throw std::invalid_argument("Tensor: data length does not match shape");
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

Tensor random_normal(std::vector<int> shape, double mean, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(mean, stddev);
  return t;
}

Tensor random_truncnorm(std::vector<int> shape, double mean, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.truncated_normal(mean, stddev);
  return t;
}

Tensor random_uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor softmax(const Tensor& logits) {
  if (!logits.all_finite()) throw std::invalid_argument("softmax: non-finite input");
  Tensor out(logits.shape());
  const int cols = logits.cols();
  const std::int64_t rows = logits.rows();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* x = logits.data() + r * cols;
    double* y = out.data() + r * cols;
    double m = x[0];
    for (int c = 1; c < cols; ++c) m = std::max(m, x[c]);
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - m);
      sum += y[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < cols; ++c) y[c] *= inv;
  }
  return out;
}

double masked_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<std::uint8_t>& mask_flags) {
  const std::int64_t rows = logits.rows();
  const int vocab = logits.cols();
  if (static_cast<std::int64_t>(targets.size()) != rows || static_cast<std::int64_t>(mask_flags.size()) != rows)
    throw std::invalid_argument("masked_cross_entropy: targets/mask length mismatch");
  long double sum = 0.0L;
  std::int64_t n = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    if (!mask_flags[static_cast<std::size_t>(r)]) continue;
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= vocab) throw std::invalid_argument("masked_cross_entropy: target index out of range");
    const double* x = logits.data() + r * vocab;
    double m = x[0];
    for (int c = 1; c < vocab; ++c) m = std::max(m, x[c]);
    double lse = 0.0;
    for (int c = 0; c < vocab; ++c) lse += std::exp(x[c] - m);
    sum += (m + std::log(lse)) - x[t];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("masked_cross_entropy: no masked positions (loss undefined)");
  return static_cast<double>(sum / n);
}

}  // namespace prodembed::num
