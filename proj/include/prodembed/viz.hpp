// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prodembed/rng.hpp"
#include "prodembed/synth.hpp"
#include "prodembed/tensor.hpp"

namespace prodembed::viz {

using num::Rng;
using num::Tensor;

// Most frequent product type in the session; ties break to the
// lexicographically smallest type name. Unknown products are an error.
std::string majority_type(const std::vector<std::string>& items, const synth::Catalog& catalog);

struct Projection2D {
  std::vector<double> x, y;
  std::vector<std::string> types;        // may be empty
  std::vector<std::string> session_ids;  // may be empty
  std::string source_model;
  std::vector<std::pair<int, double>> kl_history;  // (iteration, KL vs the true P)

  std::size_t size() const { return x.size(); }
};

struct TsneParams {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 0.0;  // <= 0 selects max(n/150, 0.5)
  double exaggeration = 12.0;
  int exaggeration_iters = 250;
  double momentum_start = 0.5;
  double momentum_late = 0.8;
};

// Symmetrized, normalized joint affinities (sum exactly 1 up to rounding).
// Per-point bandwidths come from a bisection matching the target perplexity;
// realized per-point perplexities are reported when requested.
Tensor joint_affinities(const Tensor& vectors, double perplexity, std::vector<double>* realized_perplexity);

// Exact (non-approximate) t-SNE with early exaggeration, momentum, and
// adaptive gains. Requires 3*perplexity < n and finite input. init_y, when
// given, overrides the random initialization ([n,2]).
Projection2D tsne(const Tensor& vectors, const TsneParams& params, Rng& rng, const Tensor* init_y = nullptr);

// Mean silhouette over 2-d points with integer cluster labels.
double silhouette_score(const std::vector<double>& xs, const std::vector<double>& ys,
                        const std::vector<int>& cluster);

// Writes <stem>.csv (x,y,type,session_id) and a self-contained <stem>.svg
// scatter with one color and legend entry per type. Errors on an empty
// projection before creating any file.
void export_plot(const Projection2D& projection, const std::string& stem);

}  // namespace prodembed::viz
