// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prodembed/rng.hpp"
#include "prodembed/session_data.hpp"
#include "prodembed/tensor.hpp"

namespace prodembed::p2v {

using num::Rng;
using num::Tensor;

struct Prod2vecConfig {
  int window = 15;
  int iterations = 30;
  double ns_exponent = 0.75;
  int dim = 48;
  int negatives = 5;          // sampled negatives per positive
  double initial_lr = 0.025;  // decays linearly to initial_lr * 1e-4
  std::uint64_t seed = 1;
  int threads = 1;  // >1 runs lock-free parallel updates (not bitwise reproducible)

  void validate() const;
  std::string json() const;
  std::string hash() const;
};

// CBOW with negative sampling: context vectors averaged from the input
// matrix, logistic loss against the output matrix.
struct Prod2vecModel {
  Prod2vecConfig config;
  sessions::Vocabulary vocab;
  Tensor input_emb;   // [vocab, dim]
  Tensor output_emb;  // [vocab, dim]
  // Product sampling distribution, proportional to count^ns_exponent and
  // normalized; special indices carry zero mass.
  std::vector<double> sampling_prob;
  bool trained = false;

  int draw_negative(Rng& rng) const;  // index by sampling_prob (alias method)

 private:
  friend Prod2vecModel train_cbow(const std::vector<sessions::Session>&, const Prod2vecConfig&);
  friend Prod2vecModel make_untrained(const std::vector<sessions::Session>&, const Prod2vecConfig&);
  std::vector<double> alias_prob_;
  std::vector<int> alias_side_;
  void build_alias();
};

struct CbowTrainReport {
  std::vector<double> iteration_loss;  // mean logistic loss per full pass
};

// Model with initialized embeddings and sampling table but no training;
// exposed for gradient tests.
Prod2vecModel make_untrained(const std::vector<sessions::Session>& corpus, const Prod2vecConfig& config);

Prod2vecModel train_cbow(const std::vector<sessions::Session>& corpus, const Prod2vecConfig& config,
                         CbowTrainReport* report = nullptr);

// Loss and exact gradients of one CBOW step with fixed negatives. Gradient
// tensors, when supplied, must match the embedding shapes; they are
// accumulated into. Returns the logistic loss of (1 positive, N negatives).
double cbow_step(const Tensor& input_emb, const Tensor& output_emb, const std::vector<int>& context,
                 int center, const std::vector<int>& negatives, Tensor* d_input, Tensor* d_output);

// Arithmetic mean of the input embeddings. Errors on empty input or items
// outside the vocabulary.
Tensor session_vector(const Prod2vecModel& model, const std::vector<std::string>& items);

struct ScoredProduct {
  std::string product_id;
  double similarity = 0.0;
};

// K nearest products by cosine similarity against the input embeddings,
// descending, ties broken by vocabulary index. Errors on a zero-norm query.
std::vector<ScoredProduct> knn_predict(const Prod2vecModel& model, const Tensor& query, int k);

// Text export: header "<vocab> <dim>", then one product per line with its
// input-embedding values. Round-trips exactly.
void save_embeddings(const Prod2vecModel& model, const std::string& path);
Prod2vecModel load_embeddings(const std::string& path);

}  // namespace prodembed::p2v
