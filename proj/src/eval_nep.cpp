// SPDX-License-Identifier: Apache-2.0
#include "prodembed/eval_nep.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "prodembed/hashing.hpp"

namespace prodembed::nep {

using num::Tensor;
using sessions::Session;
using sessions::Vocabulary;

namespace {
// 1-based rank of the truth within the first k entries, 0 when absent.
int rank_within_k(const std::vector<std::string>& ranked, const std::string& truth, int k) {
  if (k < 1) throw std::invalid_argument("rank: k must be >= 1");
  if (ranked.empty()) throw std::invalid_argument("rank: empty ranked list");
  const int limit = std::min<int>(k, static_cast<int>(ranked.size()));
  for (int i = 0; i < limit; ++i)
    if (ranked[static_cast<std::size_t>(i)] == truth) return i + 1;
  return 0;
}
}  // namespace

double ndcg_at_k(const std::vector<std::string>& ranked, const std::string& truth, int k) {
  const int r = rank_within_k(ranked, truth, k);
  // Single relevant item: ideal DCG is 1, so the score is the discount alone.
  return r == 0 ? 0.0 : 1.0 / std::log2(static_cast<double>(r) + 1.0);
}

double hit_rate_at_k(const std::vector<std::string>& ranked, const std::string& truth, int k) {
  return rank_within_k(ranked, truth, k) == 0 ? 0.0 : 1.0;
}

std::vector<NepCase> sample_nep_cases(const std::vector<Session>& test_sessions, int n, std::uint64_t seed) {
  std::vector<int> eligible;
  for (std::size_t i = 0; i < test_sessions.size(); ++i)
    if (test_sessions[i].items.size() >= 3) eligible.push_back(static_cast<int>(i));
  if (n < 1) throw std::invalid_argument("sample_nep_cases: n must be >= 1");
  if (n > static_cast<int>(eligible.size()))
    throw std::invalid_argument("sample_nep_cases: requested " + std::to_string(n) + " cases but only " +
                                std::to_string(eligible.size()) + " eligible sessions");
  num::Rng rng(seed);
  rng.shuffle(eligible);
  std::vector<NepCase> cases;
  cases.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& items = test_sessions[static_cast<std::size_t>(eligible[static_cast<std::size_t>(i)])].items;
    NepCase c;
    c.prefix.assign(items.begin(), items.end() - 1);
    c.truth = items.back();
    cases.push_back(std::move(c));
  }
  return cases;
}

namespace {
std::string hash_cases(const std::vector<NepCase>& cases) {
  std::string blob;
  for (const NepCase& c : cases) {
    for (const auto& p : c.prefix) {
      blob += p;
      blob += ' ';
    }
    blob += "->";
    blob += c.truth;
    blob += '\n';
  }
  return fnv1a64_hex(blob);
}
}  // namespace

const MetricBlock& EvalReport::metric(const std::string& name) const {
  for (const MetricBlock& m : metrics)
    if (m.name == name) return m;
  throw std::out_of_range("EvalReport: no metric named " + name);
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["model_id"] = model_id;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["split_seed"] = split_seed;
  j["n_cases"] = n_cases;
  j["oov_truth_count"] = oov_truth_count;
  j["cases_hash"] = cases_hash;
  nlohmann::json ms = nlohmann::json::array();
  for (const MetricBlock& m : metrics) {
    nlohmann::json e;
    e["name"] = m.name;
    e["k"] = m.k;
    e["mean"] = m.mean;
    e["per_case"] = m.per_case;
    ms.push_back(e);
  }
  j["metrics"] = ms;
  return j.dump(2);
}

std::string EvalReport::to_text() const {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof(line), "%-12s %-8s %4s %10s %8s %6s\n", "model", "metric", "K", "mean", "cases",
                "oov");
  out += line;
  for (const MetricBlock& m : metrics) {
    std::snprintf(line, sizeof(line), "%-12s %-8s %4d %10.4f %8d %6d\n", model_id.c_str(), m.name.c_str(), m.k,
                  m.mean, n_cases, oov_truth_count);
    out += line;
  }
  return out;
}

EvalReport evaluate_cases(const Ranker& ranker, const std::vector<NepCase>& cases, int k,
                          const std::function<bool(const std::string&)>& truth_in_vocab) {
  if (cases.empty()) throw std::invalid_argument("evaluate_cases: no cases");
  if (k < 1) throw std::invalid_argument("evaluate_cases: k must be >= 1");
  EvalReport rep;
  rep.n_cases = static_cast<int>(cases.size());
  rep.cases_hash = hash_cases(cases);
  MetricBlock ndcg{"ndcg", k, 0.0, {}};
  MetricBlock hr{"hr", k, 0.0, {}};
  ndcg.per_case.reserve(cases.size());
  hr.per_case.reserve(cases.size());
  long double ndcg_sum = 0.0L, hr_sum = 0.0L;
  for (const NepCase& c : cases) {
    double nd = 0.0, h = 0.0;
    if (!truth_in_vocab(c.truth)) {
      ++rep.oov_truth_count;  // scored zero rather than skipped
    } else {
      const std::vector<std::string> ranked = ranker(c);
      if (ranked.empty()) {
        ++rep.oov_truth_count;  // prefix unusable for this model
      } else {
        nd = ndcg_at_k(ranked, c.truth, k);
        h = hit_rate_at_k(ranked, c.truth, k);
      }
    }
    ndcg.per_case.push_back(nd);
    hr.per_case.push_back(h);
    ndcg_sum += nd;
    hr_sum += h;
  }
  ndcg.mean = static_cast<double>(ndcg_sum / cases.size());
  hr.mean = static_cast<double>(hr_sum / cases.size());
  rep.metrics.push_back(std::move(ndcg));
  rep.metrics.push_back(std::move(hr));
  return rep;
}

EvalReport eval_prodbert(const bert::ProdBertModel& model, const std::vector<NepCase>& cases, int k) {
  if (cases.empty()) throw std::invalid_argument("eval_prodbert: no cases");
  if (k < 1) throw std::invalid_argument("eval_prodbert: k must be >= 1");
  const Vocabulary& vocab = model.vocab;
  const int V = vocab.size();

  // Batched scoring: mask the final slot of every case, rank the vocabulary
  // at that position.
  std::vector<std::vector<std::string>> ranked_all(cases.size());
  const int chunk = model.config.batch_size;
  for (std::size_t start = 0; start < cases.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t hi = std::min(start + static_cast<std::size_t>(chunk), cases.size());
    std::vector<Session> batch_sessions;
    std::vector<int> positions;
    for (std::size_t i = start; i < hi; ++i) {
      Session s;
      s.items = cases[i].prefix;
      s.items.push_back("<mask>");  // replaced below by the mask id
      batch_sessions.push_back(std::move(s));
      positions.push_back(static_cast<int>(cases[i].prefix.size()));
    }
    sessions::MaskedBatch mb = sessions::pad_batch(batch_sessions, vocab);
    for (std::size_t r = 0; r < batch_sessions.size(); ++r) {
      const std::size_t at = r * static_cast<std::size_t>(mb.max_len) +
                             static_cast<std::size_t>(positions[r]);
      mb.input_ids[at] = Vocabulary::kMask;
      mb.mask_flags[at] = 1;
    }
    Tensor logits = bert::logits_at_positions(model, mb, positions);
    Tensor probs = num::softmax(logits);
    for (std::size_t r = 0; r < batch_sessions.size(); ++r) {
      std::vector<int> idx;
      idx.reserve(static_cast<std::size_t>(vocab.product_count()));
      for (int i = Vocabulary::kNumSpecials; i < V; ++i) idx.push_back(i);
      const int take = std::min<int>(k, static_cast<int>(idx.size()));
      const double* p = probs.data() + static_cast<std::int64_t>(r) * V;
      std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [p](int a, int b) {
        if (p[a] != p[b]) return p[a] > p[b];
        return a < b;
      });
      std::vector<std::string>& out = ranked_all[start + r];
      out.reserve(static_cast<std::size_t>(take));
      for (int i = 0; i < take; ++i) out.push_back(vocab.token_of(idx[static_cast<std::size_t>(i)]));
    }
  }

  std::size_t cursor = 0;
  auto ranker = [&ranked_all, &cursor](const NepCase&) { return ranked_all[cursor++]; };
  EvalReport rep = evaluate_cases(ranker, cases, k,
                                  [&vocab](const std::string& t) { return vocab.contains(t); });
  rep.model_id = "prodbert";
  rep.config_hash = model.config.hash();
  return rep;
}

EvalReport eval_prodbert(const bert::ProdBertModel& model, const std::vector<Session>& test_sessions, int k,
                         int n_cases, std::uint64_t seed) {
  auto cases = sample_nep_cases(test_sessions, n_cases, seed);
  EvalReport rep = eval_prodbert(model, cases, k);
  rep.seed = seed;
  return rep;
}

EvalReport eval_prod2vec(const p2v::Prod2vecModel& model, const std::vector<NepCase>& cases, int k) {
  const auto& vocab = model.vocab;
  auto ranker = [&model, &vocab, k](const NepCase& c) -> std::vector<std::string> {
    std::vector<std::string> known;
    known.reserve(c.prefix.size());
    for (const std::string& item : c.prefix)
      if (vocab.contains(item)) known.push_back(item);
    if (known.empty()) return {};
    const Tensor q = p2v::session_vector(model, known);
    double norm = 0.0;
    for (std::int64_t d = 0; d < q.size(); ++d) norm += q[d] * q[d];
    if (norm == 0.0) return {};
    std::vector<std::string> out;
    for (auto& sp : p2v::knn_predict(model, q, k)) out.push_back(std::move(sp.product_id));
    return out;
  };
  EvalReport rep = evaluate_cases(ranker, cases, k,
                                  [&vocab](const std::string& t) { return vocab.contains(t); });
  rep.model_id = "prod2vec";
  rep.config_hash = model.config.hash();
  return rep;
}

EvalReport eval_prod2vec(const p2v::Prod2vecModel& model, const std::vector<Session>& test_sessions, int k,
                         int n_cases, std::uint64_t seed) {
  auto cases = sample_nep_cases(test_sessions, n_cases, seed);
  EvalReport rep = eval_prod2vec(model, cases, k);
  rep.seed = seed;
  return rep;
}

}  // namespace prodembed::nep
