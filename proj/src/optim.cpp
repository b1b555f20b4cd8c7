// SPDX-License-Identifier: Apache-2.0
#include "prodembed/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace prodembed::num {

void adam_step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state sized for a different group");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.m[i]))
      throw std::invalid_argument("adam_step: shape mismatch at param " + std::to_string(i));
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::int64_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

GradCheckResult grad_check(const LossFn& f, std::vector<Tensor*> params, double eps,
                           int max_coords_per_param, Rng& rng) {
  if (eps < 1e-5 || eps > 1e-3) throw std::invalid_argument("grad_check: eps outside [1e-5, 1e-3]");
  if (params.empty()) throw std::invalid_argument("grad_check: no params");

  std::vector<Tensor> analytic;
  const double base = f(&analytic);
  if (!std::isfinite(base)) throw std::runtime_error("grad_check: non-finite loss");
  if (analytic.size() != params.size()) throw std::invalid_argument("grad_check: gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!analytic[i].same_shape(*params[i]))
      throw std::invalid_argument("grad_check: gradient shape mismatch at param " + std::to_string(i));

  GradCheckResult res;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const std::int64_t n = p.size();
    std::vector<std::int64_t> coords;
    if (n <= max_coords_per_param) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t j = 0; j < n; ++j) coords[static_cast<std::size_t>(j)] = j;
    } else {
      for (int j = 0; j < max_coords_per_param; ++j)
        coords.push_back(rng.uniform_int(static_cast<int>(n)));
    }
    for (std::int64_t c : coords) {
      const double keep = p[c];
      p[c] = keep + eps;
      const double up = f(nullptr);
      p[c] = keep - eps;
      const double dn = f(nullptr);
      p[c] = keep;
      if (!std::isfinite(up) || !std::isfinite(dn)) throw std::runtime_error("grad_check: non-finite evaluation");
      const double numeric = (up - dn) / (2.0 * eps);
      const double a = analytic[i][c];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++res.checked_coords;
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.param_index = static_cast<int>(i);
        res.coord = c;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace prodembed::num
