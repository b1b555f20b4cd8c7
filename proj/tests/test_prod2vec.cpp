// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "prodembed/optim.hpp"
#include "prodembed/prod2vec.hpp"

using namespace prodembed;
using namespace prodembed::p2v;
using sessions::Session;
using sessions::Vocabulary;
using num::Rng;
using num::Tensor;

namespace {

std::vector<Session> pair_corpus() {
  // a,b always co-occur; c,d always co-occur; never across. Filler products
  // absorb the negative-sampling pressure so the pair structure is visible.
  std::vector<Session> corpus;
  for (int i = 0; i < 150; ++i) {
    corpus.push_back(Session{{"a", "b", "a", "b", "a"}, std::nullopt, std::nullopt});
    corpus.push_back(Session{{"c", "d", "c", "d", "c"}, std::nullopt, std::nullopt});
  }
  Rng g(1);
  for (int i = 0; i < 300; ++i) {
    Session s;
    for (int j = 0; j < 5; ++j) s.items.push_back("f" + std::to_string(g.uniform_int(30)));
    corpus.push_back(std::move(s));
  }
  return corpus;
}

double cosine(const Tensor& emb, int i, int j, int dim) {
  double dot = 0, ni = 0, nj = 0;
  for (int d = 0; d < dim; ++d) {
    dot += emb.at(i, d) * emb.at(j, d);
    ni += emb.at(i, d) * emb.at(i, d);
    nj += emb.at(j, d) * emb.at(j, d);
  }
  return dot / std::sqrt(ni * nj);
}

// Upper chi-square critical value via the Wilson-Hilferty approximation.
double chi2_critical(int df, double z_alpha) {
  const double a = 2.0 / (9.0 * df);
  const double t = 1.0 - a + z_alpha * std::sqrt(a);
  return df * t * t * t;
}

}  // namespace

TEST_CASE("config validation") {
  Prod2vecConfig c;
  c.validate();
  Prod2vecConfig bad = c;
  bad.ns_exponent = 1.5;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.window = 0;
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.dim = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("sampling table: normalization, uniform at exponent 0, chi-square at 0.75") {
  // Product k occurs k+1 times.
  std::vector<Session> corpus;
  for (int k = 0; k < 20; ++k) {
    Session s;
    for (int r = 0; r < k + 1; ++r) s.items.push_back("p" + std::to_string(k));
    corpus.push_back(std::move(s));
  }
  Prod2vecConfig cfg;
  cfg.dim = 4;
  Prod2vecModel m = make_untrained(corpus, cfg);
  long double sum = 0.0L;
  for (double p : m.sampling_prob) sum += p;
  CHECK(std::abs(static_cast<double>(sum) - 1.0) < 1e-9);
  CHECK(m.sampling_prob[Vocabulary::kPad] == 0.0);
  CHECK(m.sampling_prob[Vocabulary::kMask] == 0.0);
  CHECK(m.sampling_prob[Vocabulary::kUnk] == 0.0);

  // Exponent 0: uniform over products regardless of counts.
  Prod2vecConfig cfg0 = cfg;
  cfg0.ns_exponent = 0.0;
  Prod2vecModel m0 = make_untrained(corpus, cfg0);
  for (int i = Vocabulary::kNumSpecials; i < m0.vocab.size(); ++i)
    CHECK(m0.sampling_prob[static_cast<std::size_t>(i)] == doctest::Approx(1.0 / 20.0).epsilon(1e-12));

  // Empirical draws against count^0.75.
  Rng rng(5);
  const int draws = 1000000;
  std::vector<std::int64_t> obs(static_cast<std::size_t>(m.vocab.size()), 0);
  for (int i = 0; i < draws; ++i) obs[static_cast<std::size_t>(m.draw_negative(rng))]++;
  CHECK(obs[Vocabulary::kPad] == 0);
  double chi2 = 0.0;
  for (int i = Vocabulary::kNumSpecials; i < m.vocab.size(); ++i) {
    const double expected = m.sampling_prob[static_cast<std::size_t>(i)] * draws;
    const double diff = obs[static_cast<std::size_t>(i)] - expected;
    chi2 += diff * diff / expected;
  }
  CHECK(chi2 < chi2_critical(19, 2.3263));  // 1% level
}

TEST_CASE("cbow_step: exact gradients against finite differences (dim 4)") {
  Prod2vecConfig cfg;
  cfg.dim = 4;
  std::vector<Session> corpus = pair_corpus();
  Prod2vecModel m = make_untrained(corpus, cfg);
  // Random instance: nonzero output matrix, too.
  Rng rng(3);
  m.input_emb = num::random_normal(m.input_emb.shape(), 0.0, 0.5, rng);
  m.output_emb = num::random_normal(m.output_emb.shape(), 0.0, 0.5, rng);

  const std::vector<int> context = {3, 4, 5};
  const int center = 6;
  const std::vector<int> negatives = {4, 5};
  num::LossFn f = [&](std::vector<Tensor>* grads) {
    if (!grads) return cbow_step(m.input_emb, m.output_emb, context, center, negatives, nullptr, nullptr);
    Tensor din(m.input_emb.shape()), dout(m.output_emb.shape());
    const double loss = cbow_step(m.input_emb, m.output_emb, context, center, negatives, &din, &dout);
    grads->clear();
    grads->push_back(std::move(din));
    grads->push_back(std::move(dout));
    return loss;
  };
  Rng check(9);
  auto res = num::grad_check(f, {&m.input_emb, &m.output_emb}, 1e-5, 40, check);
  CHECK(res.max_rel_err < 1e-3);
  CHECK(res.max_rel_err < 1e-7);
}

TEST_CASE("train_cbow: co-occurring products end up closer; loss decreases") {
  Prod2vecConfig cfg;
  cfg.dim = 16;
  cfg.window = 4;
  cfg.iterations = 12;
  cfg.seed = 11;
  CbowTrainReport rep;
  Prod2vecModel m = train_cbow(pair_corpus(), cfg, &rep);
  CHECK(m.trained);

  const int a = m.vocab.index_of("a"), b = m.vocab.index_of("b"), c = m.vocab.index_of("c");
  CHECK(cosine(m.input_emb, a, b, cfg.dim) > cosine(m.input_emb, a, c, cfg.dim));

  REQUIRE(static_cast<int>(rep.iteration_loss.size()) == cfg.iterations);
  CHECK(rep.iteration_loss.back() < rep.iteration_loss.front());
  for (std::size_t i = 1; i + 1 < rep.iteration_loss.size(); ++i)
    CHECK(rep.iteration_loss[i + 1] < rep.iteration_loss[i] * 1.05);

  // Determinism: same seed, same model.
  Prod2vecModel m2 = train_cbow(pair_corpus(), cfg);
  for (std::int64_t i = 0; i < m.input_emb.size(); ++i) CHECK(m.input_emb[i] == m2.input_emb[i]);

  std::vector<Session> degenerate = {Session{{"only", "only", "only"}, std::nullopt, std::nullopt}};
  CHECK_THROWS(train_cbow(degenerate, cfg));
}

TEST_CASE("session_vector: means and errors") {
  Prod2vecConfig cfg;
  cfg.dim = 8;
  cfg.iterations = 1;
  Prod2vecModel m = train_cbow(pair_corpus(), cfg);
  const int a = m.vocab.index_of("a"), b = m.vocab.index_of("b");

  Tensor va = session_vector(m, {"a"});
  for (int d = 0; d < cfg.dim; ++d) CHECK(va[d] == m.input_emb.at(a, d));

  Tensor vaa = session_vector(m, {"a", "a"});
  for (int d = 0; d < cfg.dim; ++d) CHECK(vaa[d] == doctest::Approx(m.input_emb.at(a, d)).epsilon(1e-15));

  Tensor vab = session_vector(m, {"a", "b"});
  for (int d = 0; d < cfg.dim; ++d)
    CHECK(vab[d] == doctest::Approx(0.5 * (m.input_emb.at(a, d) + m.input_emb.at(b, d))).epsilon(1e-12));

  CHECK_THROWS(session_vector(m, {}));
  CHECK_THROWS(session_vector(m, {"a", "missing-product"}));
}

TEST_CASE("knn_predict: self-similarity, scale invariance, exhaustive oracle") {
  // 200 random product embeddings.
  std::vector<Session> corpus;
  Session s;
  for (int i = 0; i < 200; ++i) s.items.push_back("p" + std::to_string(i));
  corpus.push_back(s);
  Prod2vecConfig cfg;
  cfg.dim = 12;
  Prod2vecModel m = make_untrained(corpus, cfg);
  Rng rng(31);
  m.input_emb = num::random_normal(m.input_emb.shape(), 0.0, 1.0, rng);

  const int p17 = m.vocab.index_of("p17");
  Tensor q({cfg.dim});
  for (int d = 0; d < cfg.dim; ++d) q[d] = m.input_emb.at(p17, d);
  auto top = knn_predict(m, q, 5);
  CHECK(top[0].product_id == "p17");
  CHECK(top[0].similarity == doctest::Approx(1.0).epsilon(1e-12));

  Tensor q10({cfg.dim});
  for (int d = 0; d < cfg.dim; ++d) q10[d] = 10.0 * q[d];
  auto top10 = knn_predict(m, q10, 5);
  for (int i = 0; i < 5; ++i) CHECK(top[i].product_id == top10[i].product_id);

  // Brute-force oracle over the whole vocabulary.
  Rng qr(7);
  Tensor rq = num::random_normal({cfg.dim}, 0.0, 1.0, qr);
  auto got = knn_predict(m, rq, 10);
  std::vector<std::pair<double, int>> oracle;
  double qn = 0;
  for (int d = 0; d < cfg.dim; ++d) qn += rq[d] * rq[d];
  qn = std::sqrt(qn);
  for (int i = Vocabulary::kNumSpecials; i < m.vocab.size(); ++i) {
    double dot = 0, n = 0;
    for (int d = 0; d < cfg.dim; ++d) {
      dot += m.input_emb.at(i, d) * rq[d];
      n += m.input_emb.at(i, d) * m.input_emb.at(i, d);
    }
    oracle.emplace_back(-dot / (std::sqrt(n) * qn), i);
  }
  std::sort(oracle.begin(), oracle.end());
  for (int i = 0; i < 10; ++i) CHECK(got[static_cast<std::size_t>(i)].product_id == m.vocab.token_of(oracle[static_cast<std::size_t>(i)].second));

  Tensor zero({cfg.dim});
  CHECK_THROWS(knn_predict(m, zero, 3));
  CHECK_THROWS(knn_predict(m, q, 0));
  CHECK_THROWS(knn_predict(m, q, m.vocab.size() + 1));
}

TEST_CASE("embedding export: header, exact round-trip") {
  Prod2vecConfig cfg;
  cfg.dim = 6;
  cfg.iterations = 2;
  Prod2vecModel m = train_cbow(pair_corpus(), cfg);
  const std::string path = (std::filesystem::temp_directory_path() / "p2v_test.txt").string();
  save_embeddings(m, path);

  std::ifstream in(path);
  int count = 0, dim = 0;
  in >> count >> dim;
  CHECK(count == m.vocab.product_count());
  CHECK(dim == cfg.dim);

  Prod2vecModel back = load_embeddings(path);
  CHECK(back.vocab.product_count() == m.vocab.product_count());
  CHECK(back.vocab.fingerprint() == m.vocab.fingerprint());
  for (int i = Vocabulary::kNumSpecials; i < m.vocab.size(); ++i)
    for (int d = 0; d < cfg.dim; ++d) CHECK(back.input_emb.at(i, d) == m.input_emb.at(i, d));
  std::remove(path.c_str());
}
