// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prodembed/prod2vec.hpp"
#include "prodembed/prodbert.hpp"
#include "prodembed/session_data.hpp"

namespace prodembed::nep {

// One next-event-prediction case: everything before the last interaction is
// the prefix, the last interaction is the truth.
struct NepCase {
  std::vector<std::string> prefix;
  std::string truth;
};

// Rank-discounted gain of a single relevant item: 1/log2(rank+1) when the
// truth sits within the top K, otherwise 0. Rejects an empty ranking.
double ndcg_at_k(const std::vector<std::string>& ranked, const std::string& truth, int k);
// 1 when the truth appears within the top K, else 0.
double hit_rate_at_k(const std::vector<std::string>& ranked, const std::string& truth, int k);

// Deterministic sample of exactly n cases; both evaluators consume the same
// cases when given the same seed. Errors if fewer sessions are available.
std::vector<NepCase> sample_nep_cases(const std::vector<sessions::Session>& test_sessions, int n,
                                      std::uint64_t seed);

struct MetricBlock {
  std::string name;
  int k = 0;
  double mean = 0.0;
  std::vector<double> per_case;
};

struct EvalReport {
  std::string model_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  int n_cases = 0;
  int oov_truth_count = 0;
  std::string cases_hash;  // fingerprint of the evaluated cases
  std::vector<MetricBlock> metrics;

  const MetricBlock& metric(const std::string& name) const;
  std::string to_json() const;
  std::string to_text() const;  // aligned columns
};

// Rankers produce an ordered candidate list (best first) given the prefix.
using Ranker = std::function<std::vector<std::string>(const NepCase&)>;

// Scores ndcg@K and hr@K per case, means over all cases. oov_counter counts
// cases whose truth the ranker's vocabulary cannot contain (scored 0).
EvalReport evaluate_cases(const Ranker& ranker, const std::vector<NepCase>& cases, int k,
                          const std::function<bool(const std::string&)>& truth_in_vocab);

// Masks the last item and ranks the vocabulary by masked-token probability.
EvalReport eval_prodbert(const bert::ProdBertModel& model, const std::vector<NepCase>& cases, int k);
EvalReport eval_prodbert(const bert::ProdBertModel& model, const std::vector<sessions::Session>& test_sessions,
                         int k, int n_cases, std::uint64_t seed);

// Averages the prefix embeddings and ranks by cosine k-NN.
EvalReport eval_prod2vec(const p2v::Prod2vecModel& model, const std::vector<NepCase>& cases, int k);
EvalReport eval_prod2vec(const p2v::Prod2vecModel& model, const std::vector<sessions::Session>& test_sessions,
                         int k, int n_cases, std::uint64_t seed);

}  // namespace prodembed::nep
