// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prodembed/eval_intent.hpp"
#include "prodembed/optim.hpp"

using namespace prodembed;
using namespace prodembed::intent;
using sessions::Session;
using num::Rng;
using num::Tensor;
using Var = num::GradTape::Var;

namespace {

std::vector<Session> labeled_corpus(int n, int vocab, double pos_rate, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Session> out;
  for (int i = 0; i < n; ++i) {
    Session s;
    const int len = 3 + rng.uniform_int(5);
    for (int j = 0; j < len; ++j) s.items.push_back("p" + std::to_string(rng.uniform_int(vocab)));
    s.add_to_cart = rng.bernoulli(pos_rate);
    out.push_back(std::move(s));
  }
  return out;
}

// Gaussian blobs: positives centered at +mu, negatives at -mu.
void separable_features(int n, int dim, double mu, double noise, std::uint64_t seed, Tensor* x,
                        std::vector<int>* y) {
  Rng rng(seed);
  *x = Tensor({n, dim});
  y->resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    (*y)[static_cast<std::size_t>(i)] = label;
    for (int d = 0; d < dim; ++d)
      x->at(i, d) = (label ? mu : -mu) + rng.normal(0.0, noise);
  }
}

bert::ProdBertModel trained_tiny_backbone(std::uint64_t seed, const std::vector<Session>& corpus) {
  bert::ProdBertConfig c;
  c.layers = 2;
  c.dim = 16;
  c.heads = 2;
  c.ffn_hidden = 32;
  c.batch_size = 64;
  c.epochs = 3;
  c.lr = 3e-3;
  c.seed = seed;
  auto vocab = sessions::build_vocab(corpus);
  Rng rng(seed);
  auto model = bert::init(c, vocab, rng);
  bert::train_mlm(model, corpus);
  return model;
}

}  // namespace

TEST_CASE("build_intent_dataset: counts, balance, errors") {
  auto corpus = labeled_corpus(6000, 40, 0.5, 3);
  IntentDataset ds = build_intent_dataset(corpus, 2000, 7);
  CHECK(ds.train.size() == 3200);
  CHECK(ds.val.size() == 400);
  CHECK(ds.test.size() == 400);

  for (const auto* part : {&ds.train, &ds.val, &ds.test}) {
    auto y = IntentDataset::labels(*part);
    const double marginal = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    CHECK(std::abs(marginal - 0.5) < 0.01);
  }

  // Reproducible for a seed.
  IntentDataset ds2 = build_intent_dataset(corpus, 2000, 7);
  CHECK(ds.train == ds2.train);
  CHECK(ds.test == ds2.test);

  CHECK_THROWS_WITH_AS(build_intent_dataset(corpus, 5000, 7), doctest::Contains("positive"),
                       std::invalid_argument);
}

TEST_CASE("featurize: wal stack, one-hot weighting degenerates to enc_i, concat dims") {
  auto corpus = labeled_corpus(400, 30, 0.5, 5);
  auto model = trained_tiny_backbone(11, corpus);
  const int l = model.config.layers;
  const int D = model.config.dim;

  Session probe = corpus[0];
  Tensor stack = featurize(model, probe.items, Strategy::kWal);
  CHECK(stack.size() == static_cast<std::int64_t>(l) * D);
  Tensor cat = featurize(model, probe.items, Strategy::kConcat);
  CHECK(cat.size() == static_cast<std::int64_t>(l) * D);
  Tensor enc0 = featurize(model, probe.items, Strategy::kEnc, 0);
  Tensor enc1 = featurize(model, probe.items, Strategy::kEnc, l - 1);
  REQUIRE(enc0.size() == D);

  // The stacked layout holds enc_i in block i.
  for (int d = 0; d < D; ++d) {
    CHECK(stack[d] == doctest::Approx(enc0[d]).epsilon(1e-12));
    CHECK(stack[(l - 1) * D + d] == doctest::Approx(enc1[d]).epsilon(1e-12));
  }

  // Layers of a trained model differ.
  double diff = 0.0;
  for (int d = 0; d < D; ++d) diff = std::max(diff, std::abs(enc0[d] - enc1[d]));
  CHECK(diff > 1e-6);

  // One-hot mixing weights reproduce the single-layer feature exactly.
  num::GradTape t;
  Tensor stack_rows(std::vector<int>{l, D}, std::vector<double>(stack.data(), stack.data() + stack.size()));
  Tensor onehot({l});
  onehot[l - 1] = 1.0;
  Var combined = t.layer_weighted_sum(t.constant(stack_rows), t.constant(onehot), 1, l);
  for (int d = 0; d < D; ++d) CHECK(t.value(combined)[d] == doctest::Approx(enc1[d]).epsilon(1e-12));

  CHECK_THROWS(featurize(model, probe.items, Strategy::kFineTune));
  CHECK_THROWS(featurize(model, probe.items, Strategy::kEnc, l));
}

TEST_CASE("train_intent_classifier: separable data, chance on shuffled labels, single class") {
  Tensor x_train, x_val, x_test;
  std::vector<int> y_train, y_val, y_test;
  separable_features(800, 8, 2.0, 0.5, 1, &x_train, &y_train);
  separable_features(200, 8, 2.0, 0.5, 2, &x_val, &y_val);
  separable_features(400, 8, 2.0, 0.5, 3, &x_test, &y_test);

  IntentConfig cfg;
  cfg.hidden = 16;
  cfg.max_epochs = 60;
  cfg.seed = 5;
  IntentResult r = train_intent_classifier(x_train, y_train, x_val, y_val, x_test, y_test, cfg);
  CHECK(r.log.test_accuracy > 0.95);
  CHECK(r.log.test_auc > 0.95);
  CHECK(r.log.best_epoch >= 0);

  // Shuffled labels: test accuracy within 0.5 +- 0.05.
  Rng shuffle_rng(9);
  std::vector<int> y_shuffled = y_train;
  shuffle_rng.shuffle(y_shuffled);
  std::vector<int> yv_sh = y_val, yt_sh = y_test;
  shuffle_rng.shuffle(yv_sh);
  shuffle_rng.shuffle(yt_sh);
  IntentResult r2 = train_intent_classifier(x_train, y_shuffled, x_val, yv_sh, x_test, yt_sh, cfg);
  CHECK(r2.log.test_accuracy > 0.45);
  CHECK(r2.log.test_accuracy < 0.55);

  std::vector<int> ones(y_train.size(), 1);
  CHECK_THROWS(train_intent_classifier(x_train, ones, x_val, y_val, x_test, y_test, cfg));
}

TEST_CASE("wal: mixing weights stay a convex combination and find the informative layer") {
  // Three stacked layers; only layer 2 carries the signal.
  const int n = 600, dim = 6, layers = 3;
  Rng rng(13);
  Tensor x({n, layers * dim});
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    y[static_cast<std::size_t>(i)] = label;
    for (int li = 0; li < layers; ++li)
      for (int d = 0; d < dim; ++d) {
        const double signal = (li == 2) ? (label ? 1.5 : -1.5) : 0.0;
        x.at(i, li * dim + d) = signal + rng.normal(0.0, 0.8);
      }
  }
  Tensor xv({200, layers * dim}), xt({200, layers * dim});
  std::vector<int> yv(200), yt(200);
  for (int i = 0; i < 200; ++i) {
    const int label = i % 2;
    yv[static_cast<std::size_t>(i)] = yt[static_cast<std::size_t>(i)] = label;
    for (int li = 0; li < layers; ++li)
      for (int d = 0; d < dim; ++d) {
        const double signal = (li == 2) ? (label ? 1.5 : -1.5) : 0.0;
        xv.at(i, li * dim + d) = signal + rng.normal(0.0, 0.8);
        xt.at(i, li * dim + d) = signal + rng.normal(0.0, 0.8);
      }
  }
  IntentConfig cfg;
  cfg.hidden = 12;
  cfg.max_epochs = 80;
  cfg.seed = 3;
  IntentResult r = train_intent_classifier(x, y, xv, yv, xt, yt, cfg, layers);
  CHECK(r.log.test_accuracy > 0.85);
  auto w = r.classifier.wal_weights();
  REQUIRE(w.size() == 3);
  CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) < 1e-9);
  for (double wi : w) {
    CHECK(wi > 0.0);
    CHECK(wi < 1.0);
  }
}

TEST_CASE("wal: layer-weight gradients match finite differences") {
  const int batch = 5, dim = 4, layers = 3;
  Rng rng(21);
  Tensor feats = num::random_normal({batch, layers * dim}, 0.0, 1.0, rng);
  std::vector<double> labels = {1, 0, 1, 1, 0};
  Rng init(7);
  MlpClassifier clf;
  clf.in_dim = dim;
  clf.hidden = 6;
  clf.wal_layers = layers;
  clf.w1 = num::random_normal({dim, 6}, 0.0, 0.5, init);
  clf.b1 = num::random_normal({6}, 0.0, 0.1, init);
  clf.w2 = num::random_normal({6, 1}, 0.0, 0.5, init);
  clf.b2 = num::random_normal({1}, 0.0, 0.1, init);
  clf.wal_theta = num::random_normal({layers}, 0.0, 0.3, init);

  std::vector<Tensor*> params = clf.params();
  num::LossFn f = [&](std::vector<Tensor>* grads) {
    num::GradTape t;
    Var loss = mlp_loss_graph(t, clf, feats, labels, true);
    const double v = t.scalar_value(loss);
    if (grads) {
      t.backward(loss);
      grads->clear();
      for (Tensor* p : params) grads->push_back(t.grad(t.param(p)));
    }
    return v;
  };
  Rng check(2);
  auto res = num::grad_check(f, params, 1e-5, 24, check);
  CHECK(res.max_rel_err < 1e-3);
  CHECK(res.max_rel_err < 1e-7);
}

TEST_CASE("fine_tune: zero-epoch identity, frozen backbone equivalence, overfit flag, errors") {
  auto corpus = labeled_corpus(1200, 30, 0.5, 17);
  auto model = trained_tiny_backbone(19, corpus);
  IntentDataset ds = build_intent_dataset(corpus, 300, 23);

  IntentConfig cfg;
  cfg.hidden = 16;
  cfg.seed = 29;

  // Zero fine-tune epochs: predictions equal frozen enc_{l-1} + fresh head.
  IntentConfig zero = cfg;
  zero.ft_max_epochs = 0;
  FineTuneResult ft0 = fine_tune(model, ds, zero);
  Tensor x_test = extract_features(model, ds.test, Strategy::kEnc, model.config.layers - 1);
  Rng head_rng = Rng(cfg.seed).derive(0x6d6c7069ULL);
  auto probs_ft = fine_tune_predict(ft0.model, ft0.head, ds.test);
  auto probs_frozen = ft0.head.predict(x_test);
  REQUIRE(probs_ft.size() == probs_frozen.size());
  for (std::size_t i = 0; i < probs_ft.size(); ++i)
    CHECK(probs_ft[i] == doctest::Approx(probs_frozen[i]).epsilon(1e-9));

  // backbone lr = 0: backbone bitwise untouched, accuracy within 1% of the
  // frozen extraction route.
  IntentConfig frozen_cfg = cfg;
  frozen_cfg.backbone_lr = 0.0;
  frozen_cfg.ft_max_epochs = 8;
  frozen_cfg.max_epochs = 8;
  FineTuneResult ft = fine_tune(model, ds, frozen_cfg);
  auto before = model.named_params();
  auto after = ft.model.named_params();
  for (std::size_t i = 0; i < before.size(); ++i)
    for (std::int64_t j = 0; j < before[i].second->size(); ++j)
      CHECK((*before[i].second)[j] == (*after[i].second)[j]);

  Tensor x_train = extract_features(model, ds.train, Strategy::kEnc, model.config.layers - 1);
  Tensor x_val = extract_features(model, ds.val, Strategy::kEnc, model.config.layers - 1);
  IntentResult frozen = train_intent_classifier(x_train, IntentDataset::labels(ds.train), x_val,
                                                IntentDataset::labels(ds.val), x_test,
                                                IntentDataset::labels(ds.test), frozen_cfg);
  CHECK(std::abs(frozen.log.test_accuracy - ft.log.test_accuracy) <= 0.01);

  // Tiny random-labeled set with a large model overfits and raises the flag.
  Rng lab_rng(31);
  std::vector<Session> tiny_sessions(corpus.begin(), corpus.begin() + 200);
  for (auto& s : tiny_sessions) s.add_to_cart = lab_rng.bernoulli(0.5);
  IntentDataset tiny = build_intent_dataset(tiny_sessions, 80, 3);
  IntentConfig hungry = cfg;
  hungry.ft_max_epochs = 25;
  hungry.backbone_lr = 1e-3;
  hungry.lr = 3e-3;
  hungry.patience = 25;
  FineTuneResult over = fine_tune(model, tiny, hungry);
  CHECK(over.log.overfit_flag);

  // A fresh (untrained) backbone is rejected.
  Rng fresh_rng(1);
  auto fresh = bert::init(model.config, model.vocab, fresh_rng);
  CHECK_THROWS_WITH_AS(fine_tune(fresh, ds, cfg), doctest::Contains("pretrained"), std::invalid_argument);
}

TEST_CASE("lstm: cell gradients match finite differences (width 4)") {
  Rng init(3);
  LstmClassifier m;
  m.in_dim = 3;
  m.hidden = 4;
  m.wx = num::random_normal({3, 16}, 0.0, 0.5, init);
  m.wh = num::random_normal({4, 16}, 0.0, 0.5, init);
  m.b = num::random_normal({16}, 0.0, 0.2, init);
  m.w_out = num::random_normal({4, 1}, 0.0, 0.5, init);
  m.b_out = num::random_normal({1}, 0.0, 0.1, init);

  const int batch = 2, len = 3;
  Tensor embedded = num::random_normal({batch * len, 3}, 0.0, 1.0, init);
  std::vector<std::uint8_t> pads = {0, 0, 0, 0, 0, 1};  // second row is shorter
  std::vector<double> labels = {1.0, 0.0};

  std::vector<Tensor*> params = m.params();
  num::LossFn f = [&](std::vector<Tensor>* grads) {
    num::GradTape t;
    Var logits = lstm_logits_graph(t, m, embedded, pads, batch, len, true);
    Var loss = t.bce_with_logits(logits, labels);
    const double v = t.scalar_value(loss);
    if (grads) {
      t.backward(loss);
      grads->clear();
      for (Tensor* p : params) grads->push_back(t.grad(t.param(p)));
    }
    return v;
  };
  Rng check(11);
  auto res = num::grad_check(f, params, 1e-5, 30, check);
  CHECK(res.max_rel_err < 1e-3);
  CHECK(res.max_rel_err < 1e-7);
}

TEST_CASE("lstm: no signal means chance; trigger product is learnable") {
  // Constant embeddings plus random labels: accuracy stays near 0.5.
  std::vector<Session> flat;
  Rng rng(41);
  for (int i = 0; i < 700; ++i) {
    Session s;
    const int len = 3 + rng.uniform_int(4);
    for (int j = 0; j < len; ++j) s.items.push_back("p" + std::to_string(rng.uniform_int(20)));
    s.add_to_cart = rng.bernoulli(0.5);
    flat.push_back(std::move(s));
  }
  p2v::Prod2vecConfig pcfg;
  pcfg.dim = 8;
  p2v::Prod2vecModel constant_emb = p2v::make_untrained(flat, pcfg);
  for (std::int64_t i = 0; i < constant_emb.input_emb.size(); ++i) constant_emb.input_emb[i] = 0.3;
  constant_emb.trained = true;

  IntentDataset flat_ds = build_intent_dataset(flat, 250, 1);
  IntentConfig cfg;
  cfg.hidden = 8;
  cfg.max_epochs = 15;
  cfg.seed = 2;
  LstmResult chance = train_intent_lstm(constant_emb, flat_ds, cfg);
  CHECK(chance.log.test_accuracy > 0.40);
  CHECK(chance.log.test_accuracy < 0.60);

  // Intent decided by the presence of a trigger product.
  std::vector<Session> trig;
  Rng rng2(43);
  for (int i = 0; i < 900; ++i) {
    Session s;
    const int len = 4 + rng2.uniform_int(4);
    for (int j = 0; j < len; ++j) s.items.push_back("p" + std::to_string(1 + rng2.uniform_int(19)));
    const bool fire = rng2.bernoulli(0.5);
    if (fire) s.items[static_cast<std::size_t>(rng2.uniform_int(len))] = "p0";
    s.add_to_cart = fire;
    trig.push_back(std::move(s));
  }
  p2v::Prod2vecModel rnd_emb = p2v::make_untrained(trig, pcfg);
  Rng ernd(7);
  rnd_emb.input_emb = num::random_normal(rnd_emb.input_emb.shape(), 0.0, 0.5, ernd);
  rnd_emb.trained = true;
  IntentDataset trig_ds = build_intent_dataset(trig, 300, 5);
  IntentConfig cfg2;
  cfg2.hidden = 16;
  cfg2.max_epochs = 40;
  cfg2.patience = 12;
  cfg2.seed = 6;
  LstmResult learned = train_intent_lstm(rnd_emb, trig_ds, cfg2);
  CHECK(learned.log.test_accuracy > 0.9);
}
