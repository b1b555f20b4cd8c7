// SPDX-License-Identifier: Apache-2.0
#include "prodembed/prod2vec.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "prodembed/hashing.hpp"
#include "prodembed/log.hpp"

namespace prodembed::p2v {

using sessions::Session;
using sessions::Vocabulary;

void Prod2vecConfig::validate() const {
  if (window < 1) throw std::invalid_argument("Prod2vecConfig: window must be >= 1");
  if (dim < 1) throw std::invalid_argument("Prod2vecConfig: dim must be >= 1");
  if (!(ns_exponent >= 0.0 && ns_exponent <= 1.0))
    throw std::invalid_argument("Prod2vecConfig: ns_exponent must lie in [0,1]");
  if (iterations < 1) throw std::invalid_argument("Prod2vecConfig: iterations must be >= 1");
  if (negatives < 1) throw std::invalid_argument("Prod2vecConfig: negatives must be >= 1");
  if (initial_lr <= 0.0) throw std::invalid_argument("Prod2vecConfig: initial_lr must be positive");
  if (threads < 1) throw std::invalid_argument("Prod2vecConfig: threads must be >= 1");
}

std::string Prod2vecConfig::json() const {
  nlohmann::json j;
  j["window"] = window;
  j["iterations"] = iterations;
  j["ns_exponent"] = ns_exponent;
  j["dim"] = dim;
  j["negatives"] = negatives;
  j["initial_lr"] = initial_lr;
  j["seed"] = seed;
  j["threads"] = threads;
  return j.dump();
}

std::string Prod2vecConfig::hash() const { return fnv1a64_hex(json()); }

void Prod2vecModel::build_alias() {
  // Vose alias method over the full vocabulary; zero-mass entries are only
  // ever reached through their alias.
  const int n = static_cast<int>(sampling_prob.size());
  alias_prob_.assign(static_cast<std::size_t>(n), 0.0);
  alias_side_.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> scaled(sampling_prob);
  for (double& p : scaled) p *= n;
  std::vector<int> small, large;
  for (int i = 0; i < n; ++i) (scaled[static_cast<std::size_t>(i)] < 1.0 ? small : large).push_back(i);
  while (!small.empty() && !large.empty()) {
    const int s = small.back();
    small.pop_back();
    const int l = large.back();
    alias_prob_[static_cast<std::size_t>(s)] = scaled[static_cast<std::size_t>(s)];
    alias_side_[static_cast<std::size_t>(s)] = l;
    scaled[static_cast<std::size_t>(l)] -= 1.0 - scaled[static_cast<std::size_t>(s)];
    if (scaled[static_cast<std::size_t>(l)] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (int i : large) alias_prob_[static_cast<std::size_t>(i)] = 1.0;
  for (int i : small) alias_prob_[static_cast<std::size_t>(i)] = 1.0;
}

int Prod2vecModel::draw_negative(Rng& rng) const {
  const int n = static_cast<int>(alias_prob_.size());
  if (n == 0) throw std::logic_error("Prod2vecModel: sampling table not built");
  const int col = rng.uniform_int(n);
  return rng.uniform() < alias_prob_[static_cast<std::size_t>(col)] ? col
                                                                    : alias_side_[static_cast<std::size_t>(col)];
}

Prod2vecModel make_untrained(const std::vector<Session>& corpus, const Prod2vecConfig& config) {
  config.validate();
  Vocabulary vocab = sessions::build_vocab(corpus);
  if (vocab.product_count() < 2)
    throw std::invalid_argument("train_cbow: at least 2 products required for negative sampling");
  Prod2vecModel m;
  m.config = config;
  m.vocab = std::move(vocab);
  const int V = m.vocab.size();
  Rng rng(config.seed);
  m.input_emb = num::random_uniform({V, config.dim}, -0.5 / config.dim, 0.5 / config.dim, rng);
  m.output_emb = Tensor::zeros({V, config.dim});
  m.sampling_prob.assign(static_cast<std::size_t>(V), 0.0);
  long double z = 0.0L;
  for (int i = Vocabulary::kNumSpecials; i < V; ++i) {
    const double w = std::pow(static_cast<double>(m.vocab.count_of(i)), config.ns_exponent);
    m.sampling_prob[static_cast<std::size_t>(i)] = w;
    z += w;
  }
  for (double& p : m.sampling_prob) p = static_cast<double>(p / z);
  m.build_alias();
  return m;
}

namespace {
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
// -log sigma(z) for label 1, -log(1 - sigma(z)) for label 0, stably.
inline double logistic_loss(double z, bool positive) {
  const double a = positive ? -z : z;
  return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a)));
}
}  // namespace

double cbow_step(const Tensor& input_emb, const Tensor& output_emb, const std::vector<int>& context,
                 int center, const std::vector<int>& negatives, Tensor* d_input, Tensor* d_output) {
  if (context.empty()) throw std::invalid_argument("cbow_step: empty context");
  const int dim = input_emb.cols();
  const double inv_c = 1.0 / static_cast<double>(context.size());
  std::vector<double> h(static_cast<std::size_t>(dim), 0.0);
  for (int c : context) {
    const double* row = input_emb.data() + static_cast<std::int64_t>(c) * dim;
    for (int d = 0; d < dim; ++d) h[static_cast<std::size_t>(d)] += row[d];
  }
  for (double& v : h) v *= inv_c;

  std::vector<double> dh(static_cast<std::size_t>(dim), 0.0);
  double loss = 0.0;
  auto accumulate = [&](int target, bool positive) {
    const double* out = output_emb.data() + static_cast<std::int64_t>(target) * dim;
    double z = 0.0;
    for (int d = 0; d < dim; ++d) z += out[d] * h[static_cast<std::size_t>(d)];
    loss += logistic_loss(z, positive);
    const double err = sigmoid(z) - (positive ? 1.0 : 0.0);  // dL/dz
    for (int d = 0; d < dim; ++d) dh[static_cast<std::size_t>(d)] += err * out[d];
    if (d_output) {
      double* g = d_output->data() + static_cast<std::int64_t>(target) * dim;
      for (int d = 0; d < dim; ++d) g[d] += err * h[static_cast<std::size_t>(d)];
    }
  };
  accumulate(center, true);
  for (int n : negatives) accumulate(n, false);

  if (d_input) {
    for (int c : context) {
      double* g = d_input->data() + static_cast<std::int64_t>(c) * dim;
      for (int d = 0; d < dim; ++d) g[d] += dh[static_cast<std::size_t>(d)] * inv_c;
    }
  }
  return loss;
}

namespace {

struct TrainSlice {
  std::size_t begin = 0, step = 1;
};

// One pass of SGD over the slice's sessions. Updates are applied in place;
// the output rows seen by dh are the pre-update values.
long double cbow_pass(Prod2vecModel& m, const std::vector<std::vector<int>>& encoded,
                      TrainSlice slice, Rng& rng, std::atomic<std::int64_t>& processed,
                      std::int64_t total_tokens, std::int64_t* centers_out) {
  const Prod2vecConfig& cfg = m.config;
  const int dim = cfg.dim;
  std::vector<double> h(static_cast<std::size_t>(dim));
  std::vector<double> dh(static_cast<std::size_t>(dim));
  long double loss_sum = 0.0L;
  std::int64_t centers = 0;
  for (std::size_t si = slice.begin; si < encoded.size(); si += slice.step) {
    const std::vector<int>& sent = encoded[si];
    const int len = static_cast<int>(sent.size());
    for (int i = 0; i < len; ++i) {
      const int center = sent[static_cast<std::size_t>(i)];
      const int half = 1 + rng.uniform_int(cfg.window);
      std::fill(h.begin(), h.end(), 0.0);
      int cw = 0;
      for (int j = std::max(0, i - half); j <= std::min(len - 1, i + half); ++j) {
        if (j == i) continue;
        const double* row = m.input_emb.data() + static_cast<std::int64_t>(sent[static_cast<std::size_t>(j)]) * dim;
        for (int d = 0; d < dim; ++d) h[static_cast<std::size_t>(d)] += row[d];
        ++cw;
      }
      const std::int64_t done = processed.fetch_add(1, std::memory_order_relaxed);
      if (cw == 0) continue;
      const double inv_c = 1.0 / cw;
      for (double& v : h) v *= inv_c;

      const double frac = static_cast<double>(done) / static_cast<double>(total_tokens + 1);
      const double lr = std::max(cfg.initial_lr * (1.0 - frac), cfg.initial_lr * 1e-4);

      std::fill(dh.begin(), dh.end(), 0.0);
      auto update = [&](int target, bool positive) {
        double* out = m.output_emb.data() + static_cast<std::int64_t>(target) * dim;
        double z = 0.0;
        for (int d = 0; d < dim; ++d) z += out[d] * h[static_cast<std::size_t>(d)];
        loss_sum += logistic_loss(z, positive);
        const double err = sigmoid(z) - (positive ? 1.0 : 0.0);
        for (int d = 0; d < dim; ++d) {
          dh[static_cast<std::size_t>(d)] += err * out[d];
          out[d] -= lr * err * h[static_cast<std::size_t>(d)];
        }
      };
      update(center, true);
      for (int k = 0; k < cfg.negatives; ++k) {
        int neg = m.draw_negative(rng);
        int guard = 0;
        while (neg == center) {
          neg = m.draw_negative(rng);
          if (++guard > 1000) throw std::runtime_error("train_cbow: negative sampling stuck on the center token");
        }
        update(neg, false);
      }
      for (int j = std::max(0, i - half); j <= std::min(len - 1, i + half); ++j) {
        if (j == i) continue;
        double* row = m.input_emb.data() + static_cast<std::int64_t>(sent[static_cast<std::size_t>(j)]) * dim;
        for (int d = 0; d < dim; ++d) row[d] -= lr * dh[static_cast<std::size_t>(d)] * inv_c;
      }
      ++centers;
    }
  }
  *centers_out = centers;
  return loss_sum;
}

}  // namespace

Prod2vecModel train_cbow(const std::vector<Session>& corpus, const Prod2vecConfig& config,
                         CbowTrainReport* report) {
  Prod2vecModel m = make_untrained(corpus, config);
  std::vector<std::vector<int>> encoded;
  encoded.reserve(corpus.size());
  std::int64_t tokens = 0;
  for (const Session& s : corpus) {
    std::vector<int> row;
    row.reserve(s.items.size());
    for (const std::string& item : s.items) row.push_back(m.vocab.index_of(item));
    tokens += static_cast<std::int64_t>(row.size());
    encoded.push_back(std::move(row));
  }
  const std::int64_t total = tokens * config.iterations;
  std::atomic<std::int64_t> processed{0};
  Rng root(config.seed);

  for (int iter = 0; iter < config.iterations; ++iter) {
    Rng shuffle_rng = root.derive(0x70337673ULL, static_cast<std::uint64_t>(iter));
    shuffle_rng.shuffle(encoded);
    long double loss_sum = 0.0L;
    std::int64_t centers = 0;
    if (config.threads == 1) {
      Rng rng = root.derive(0x636f7265ULL, static_cast<std::uint64_t>(iter));
      loss_sum = cbow_pass(m, encoded, {0, 1}, rng, processed, total, &centers);
    } else {
      std::vector<std::thread> workers;
      std::vector<long double> losses(static_cast<std::size_t>(config.threads), 0.0L);
      std::vector<std::int64_t> counts(static_cast<std::size_t>(config.threads), 0);
      for (int t = 0; t < config.threads; ++t) {
        workers.emplace_back([&, t] {
          Rng rng = root.derive(0x636f7265ULL, static_cast<std::uint64_t>(iter) * 131ULL + t);
          losses[static_cast<std::size_t>(t)] =
              cbow_pass(m, encoded, {static_cast<std::size_t>(t), static_cast<std::size_t>(config.threads)}, rng,
                        processed, total, &counts[static_cast<std::size_t>(t)]);
        });
      }
      for (auto& w : workers) w.join();
      for (int t = 0; t < config.threads; ++t) {
        loss_sum += losses[static_cast<std::size_t>(t)];
        centers += counts[static_cast<std::size_t>(t)];
      }
    }
    if (report) report->iteration_loss.push_back(static_cast<double>(loss_sum / std::max<std::int64_t>(centers, 1)));
    log::debug("train_cbow: pass " + std::to_string(iter + 1) + "/" + std::to_string(config.iterations));
  }
  m.trained = true;
  return m;
}

Tensor session_vector(const Prod2vecModel& model, const std::vector<std::string>& items) {
  if (items.empty()) throw std::invalid_argument("session_vector: empty item list");
  const int dim = model.config.dim;
  Tensor out({dim});
  for (const std::string& item : items) {
    if (!model.vocab.contains(item)) throw std::invalid_argument("session_vector: item not in vocabulary: " + item);
    const double* row = model.input_emb.data() + static_cast<std::int64_t>(model.vocab.index_of(item)) * dim;
    for (int d = 0; d < dim; ++d) out[d] += row[d];
  }
  for (int d = 0; d < dim; ++d) out[d] /= static_cast<double>(items.size());
  return out;
}

std::vector<ScoredProduct> knn_predict(const Prod2vecModel& model, const Tensor& query, int k) {
  if (k < 1) throw std::invalid_argument("knn_predict: k must be >= 1");
  if (k > model.vocab.size()) throw std::invalid_argument("knn_predict: k exceeds vocabulary size");
  const int dim = model.config.dim;
  if (query.size() != dim) throw std::invalid_argument("knn_predict: query dimension mismatch");
  double qn = 0.0;
  for (int d = 0; d < dim; ++d) qn += query[d] * query[d];
  qn = std::sqrt(qn);
  if (qn == 0.0) throw std::invalid_argument("knn_predict: zero-norm query");

  const int V = model.vocab.size();
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(model.vocab.product_count()));
  std::vector<double> sim(static_cast<std::size_t>(V), 0.0);
  for (int i = Vocabulary::kNumSpecials; i < V; ++i) {
    const double* row = model.input_emb.data() + static_cast<std::int64_t>(i) * dim;
    double dot = 0.0, norm = 0.0;
    for (int d = 0; d < dim; ++d) {
      dot += row[d] * query[d];
      norm += row[d] * row[d];
    }
    sim[static_cast<std::size_t>(i)] = norm == 0.0 ? -1e300 : dot / (std::sqrt(norm) * qn);
    idx.push_back(i);
  }
  const int take = std::min(k, static_cast<int>(idx.size()));
  std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&sim](int a, int b) {
    if (sim[static_cast<std::size_t>(a)] != sim[static_cast<std::size_t>(b)])
      return sim[static_cast<std::size_t>(a)] > sim[static_cast<std::size_t>(b)];
    return a < b;
  });
  std::vector<ScoredProduct> out;
  out.reserve(static_cast<std::size_t>(take));
  for (int i = 0; i < take; ++i)
    out.push_back({model.vocab.token_of(idx[static_cast<std::size_t>(i)]), sim[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]});
  return out;
}

void save_embeddings(const Prod2vecModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_embeddings: cannot open " + path);
  const int dim = model.config.dim;
  out << model.vocab.product_count() << ' ' << dim << '\n';
  char buf[32];
  for (int i = Vocabulary::kNumSpecials; i < model.vocab.size(); ++i) {
    out << model.vocab.token_of(i);
    const double* row = model.input_emb.data() + static_cast<std::int64_t>(i) * dim;
    for (int d = 0; d < dim; ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[d]);
      out << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_embeddings: write failed for " + path);
}

Prod2vecModel load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_embeddings: cannot open " + path);
  int count = 0, dim = 0;
  if (!(in >> count >> dim) || count < 1 || dim < 1)
    throw std::runtime_error("load_embeddings: bad header in " + path);
  Prod2vecModel m;
  m.config.dim = dim;
  m.input_emb = Tensor::zeros({Vocabulary::kNumSpecials + count, dim});
  m.output_emb = Tensor::zeros({Vocabulary::kNumSpecials + count, dim});
  for (int i = 0; i < count; ++i) {
    std::string token;
    if (!(in >> token)) throw std::runtime_error("load_embeddings: truncated at product " + std::to_string(i));
    const int idx = m.vocab.add(token);
    if (idx != Vocabulary::kNumSpecials + i)
      throw std::runtime_error("load_embeddings: duplicate product " + token);
    double* row = m.input_emb.data() + static_cast<std::int64_t>(idx) * dim;
    for (int d = 0; d < dim; ++d)
      if (!(in >> row[d])) throw std::runtime_error("load_embeddings: truncated values for " + token);
  }
  m.trained = true;
  return m;
}

}  // namespace prodembed::p2v
