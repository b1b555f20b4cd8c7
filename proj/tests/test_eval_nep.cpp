// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "prodembed/eval_nep.hpp"

using namespace prodembed;
using namespace prodembed::nep;
using sessions::Session;
using num::Rng;

namespace {

// Independent oracle: explicit DCG/IDCG enumeration for one relevant item at
// a given 1-based rank.
double brute_force_ndcg(int truth_rank, int k) {
  double dcg = 0.0;
  for (int pos = 1; pos <= k; ++pos) {
    const double rel = (pos == truth_rank) ? 1.0 : 0.0;
    dcg += (std::pow(2.0, rel) - 1.0) / std::log2(pos + 1.0);
  }
  double idcg = 0.0;
  for (int pos = 1; pos <= 1 && pos <= k; ++pos) idcg += 1.0 / std::log2(pos + 1.0);
  return dcg / idcg;
}

std::vector<std::string> ranking_with_truth_at(int rank, int length) {
  std::vector<std::string> out;
  for (int i = 1; i <= length; ++i)
    out.push_back(i == rank ? "truth" : "filler" + std::to_string(i));
  return out;
}

std::vector<Session> synthetic_sessions(int n, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Session> out;
  for (int i = 0; i < n; ++i) {
    Session s;
    const int len = 3 + rng.uniform_int(6);
    for (int j = 0; j < len; ++j) s.items.push_back("p" + std::to_string(rng.uniform_int(vocab)));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("ndcg/hr: spec values") {
  auto r = ranking_with_truth_at(1, 10);
  CHECK(ndcg_at_k(r, "truth", 10) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hit_rate_at_k(r, "truth", 10) == 1.0);

  auto r2 = ranking_with_truth_at(2, 10);
  CHECK(ndcg_at_k(r2, "truth", 10) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
  CHECK(ndcg_at_k(r2, "truth", 10) == doctest::Approx(0.6309).epsilon(1e-3));

  auto r11 = ranking_with_truth_at(11, 15);
  CHECK(ndcg_at_k(r11, "truth", 10) == 0.0);
  CHECK(hit_rate_at_k(r11, "truth", 10) == 0.0);
  CHECK(hit_rate_at_k(ranking_with_truth_at(10, 15), "truth", 10) == 1.0);

  CHECK_THROWS(ndcg_at_k({}, "truth", 10));
  CHECK_THROWS(hit_rate_at_k({}, "truth", 10));
  CHECK_THROWS(ndcg_at_k(r, "truth", 0));
}

TEST_CASE("metric oracle: brute-force agreement for ranks 1..6, K in {1,3,5,10}") {
  for (int k : {1, 3, 5, 10}) {
    for (int rank = 1; rank <= 6; ++rank) {
      auto ranked = ranking_with_truth_at(rank, 12);
      const double got = ndcg_at_k(ranked, "truth", k);
      const double want = brute_force_ndcg(rank, k);
      CHECK(std::abs(got - want) < 1e-9);
      const double hr_want = (rank <= k) ? 1.0 : 0.0;
      CHECK(hit_rate_at_k(ranked, "truth", k) == hr_want);
    }
  }
  // Non-increasing in rank; equals hit rate at K=1.
  for (int rank = 1; rank < 6; ++rank) {
    CHECK(ndcg_at_k(ranking_with_truth_at(rank, 12), "truth", 10) >=
          ndcg_at_k(ranking_with_truth_at(rank + 1, 12), "truth", 10));
    CHECK(ndcg_at_k(ranking_with_truth_at(rank, 12), "truth", 1) ==
          hit_rate_at_k(ranking_with_truth_at(rank, 12), "truth", 1));
  }
}

TEST_CASE("sample_nep_cases: protocol shape, determinism, share across models") {
  std::vector<Session> test = synthetic_sessions(50, 30, 3);
  auto cases = sample_nep_cases(test, 20, 42);
  REQUIRE(cases.size() == 20);
  for (const NepCase& c : cases) {
    CHECK(c.prefix.size() >= 2);
    CHECK(!c.truth.empty());
  }
  // [a,b,c] -> prefix [a,b], truth c.
  std::vector<Session> tiny = {Session{{"a", "b", "c"}, std::nullopt, std::nullopt},
                               Session{{"d", "e", "f"}, std::nullopt, std::nullopt},
                               Session{{"g", "h", "i"}, std::nullopt, std::nullopt}};
  auto tc = sample_nep_cases(tiny, 3, 1);
  for (const auto& c : tc) {
    CHECK(c.prefix.size() == 2);
    if (c.truth == "c") CHECK(c.prefix == std::vector<std::string>{"a", "b"});
  }

  auto again = sample_nep_cases(test, 20, 42);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    CHECK(cases[i].prefix == again[i].prefix);
    CHECK(cases[i].truth == again[i].truth);
  }
  auto other = sample_nep_cases(test, 20, 43);
  bool all_same = true;
  for (std::size_t i = 0; i < cases.size(); ++i) all_same &= (cases[i].truth == other[i].truth && cases[i].prefix == other[i].prefix);
  CHECK_FALSE(all_same);

  CHECK_THROWS(sample_nep_cases(test, 500, 1));
}

TEST_CASE("evaluate_cases: oracle ranker scores 1.0; random ranker matches chance") {
  std::vector<Session> test = synthetic_sessions(3000, 1000, 11);
  auto cases = sample_nep_cases(test, 2500, 5);

  Ranker oracle = [](const NepCase& c) { return std::vector<std::string>{c.truth, "x", "y"}; };
  EvalReport rep = evaluate_cases(oracle, cases, 10, [](const std::string&) { return true; });
  CHECK(rep.metric("ndcg").mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.metric("hr").mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.metric("ndcg").mean ==
        doctest::Approx(std::accumulate(rep.metric("ndcg").per_case.begin(), rep.metric("ndcg").per_case.end(), 0.0) /
               rep.n_cases)
            .epsilon(1e-12));

  // Random ranking over a 1000-product vocabulary: HR@10 concentrates near
  // 10/1000 (binomial; 2500 cases give sigma ~ 0.002).
  Rng rng(17);
  Ranker random_ranker = [&rng](const NepCase&) {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("p" + std::to_string(rng.uniform_int(1000)));
    return ids;
  };
  EvalReport rnd = evaluate_cases(random_ranker, cases, 10, [](const std::string&) { return true; });
  CHECK(rnd.metric("hr").mean > 0.01 - 3.0 * 0.002);
  CHECK(rnd.metric("hr").mean < 0.01 + 3.0 * 0.002);
  for (double v : rnd.metric("ndcg").per_case) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("eval_prodbert and eval_prod2vec: shared cases, report plumbing") {
  // Corpus where c always follows the pair {a,b}; a broad filler tail keeps
  // negative sampling from concentrating on the triple.
  std::vector<Session> corpus;
  Rng rng(9);
  for (int i = 0; i < 100; ++i) corpus.push_back(Session{{"a", "b", "c"}, std::nullopt, std::nullopt});
  for (int i = 0; i < 400; ++i) {
    Session filler;
    for (int j = 0; j < 5; ++j) filler.items.push_back("f" + std::to_string(rng.uniform_int(64)));
    corpus.push_back(std::move(filler));
  }

  p2v::Prod2vecConfig pcfg;
  pcfg.dim = 16;
  pcfg.window = 4;
  pcfg.iterations = 10;
  pcfg.seed = 3;
  p2v::Prod2vecModel p2v_model = p2v::train_cbow(corpus, pcfg);

  bert::ProdBertConfig bcfg;
  bcfg.layers = 2;
  bcfg.dim = 16;
  bcfg.heads = 2;
  bcfg.ffn_hidden = 32;
  bcfg.epochs = 6;
  bcfg.batch_size = 64;
  bcfg.lr = 3e-3;
  bcfg.seed = 5;
  Rng brng(5);
  auto vocab = sessions::build_vocab(corpus);
  bert::ProdBertModel bert_model = bert::init(bcfg, vocab, brng);
  bert::train_mlm(bert_model, corpus);

  std::vector<Session> test = {Session{{"a", "b", "c"}, std::nullopt, std::nullopt},
                               Session{{"a", "b", "c"}, std::nullopt, std::nullopt},
                               Session{{"a", "b", "c"}, std::nullopt, std::nullopt}};
  auto cases = sample_nep_cases(test, 3, 7);

  EvalReport rb = eval_prodbert(bert_model, cases, 10);
  EvalReport rp = eval_prod2vec(p2v_model, cases, 10);
  CHECK(rb.cases_hash == rp.cases_hash);  // identical cases for both models
  CHECK(rb.model_id == "prodbert");
  CHECK(rp.model_id == "prod2vec");
  CHECK(rb.n_cases == 3);

  // The constructed pattern is learnable for both: c ranks in the top 10.
  CHECK(rp.metric("hr").mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rb.metric("hr").mean == doctest::Approx(1.0).epsilon(1e-12));

  // Report formats.
  const std::string j = rb.to_json();
  CHECK(j.find("\"model_id\": \"prodbert\"") != std::string::npos);
  CHECK(j.find("\"cases_hash\"") != std::string::npos);
  const std::string t = rb.to_text();
  CHECK(t.find("ndcg") != std::string::npos);
  CHECK(t.find("prodbert") != std::string::npos);

  // OOV truth scores zero and is tallied.
  std::vector<NepCase> oov_cases = cases;
  oov_cases[0].truth = "never-seen-product";
  EvalReport ro = eval_prod2vec(p2v_model, oov_cases, 10);
  CHECK(ro.oov_truth_count == 1);
  CHECK(ro.metric("hr").per_case[0] == 0.0);
}
