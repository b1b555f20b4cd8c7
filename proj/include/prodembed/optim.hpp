// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prodembed/rng.hpp"
#include "prodembed/tensor.hpp"

namespace prodembed::num {

// Bias-corrected Adam. The state owns one first- and one second-moment
// accumulator per parameter plus the shared step counter; accumulator shapes
// always match the parameter shapes.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// One update over a parameter group. Lazily initializes accumulators on the
// first call; afterwards a count or shape mismatch is an error. Deterministic
// given inputs.
void adam_step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state);

// Scalar loss evaluator used by grad_check. When grads_out is non-null the
// function must also fill one gradient tensor per checked parameter, same
// order and shapes.
using LossFn = std::function<double(std::vector<Tensor>* grads_out)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked_coords = 0;
  // Worst offender, for diagnostics.
  int param_index = -1;
  std::int64_t coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares analytic gradients against central finite differences on up to
// max_coords_per_param sampled coordinates per parameter. Error metric per
// coordinate: |analytic - numeric| / max(1, |analytic|). eps must lie in
// [1e-5, 1e-3]; non-finite evaluations raise.
GradCheckResult grad_check(const LossFn& f, std::vector<Tensor*> params, double eps,
                           int max_coords_per_param, Rng& rng);

}  // namespace prodembed::num
