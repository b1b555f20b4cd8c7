// SPDX-License-Identifier: Apache-2.0
#include "prodembed/eval_intent.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "prodembed/hashing.hpp"
#include "prodembed/log.hpp"
#include "prodembed/optim.hpp"

namespace prodembed::intent {

using sessions::MaskedBatch;
using sessions::Session;
using Var = GradTape::Var;

std::vector<int> IntentDataset::labels(const std::vector<Session>& part) {
  std::vector<int> out;
  out.reserve(part.size());
  for (const Session& s : part) {
    if (!s.add_to_cart.has_value()) throw std::invalid_argument("IntentDataset: unlabeled session");
    out.push_back(*s.add_to_cart ? 1 : 0);
  }
  return out;
}

IntentDataset build_intent_dataset(const std::vector<Session>& corpus, int n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("build_intent_dataset: n_per_class must be >= 1");
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].add_to_cart.has_value()) continue;
    (*corpus[i].add_to_cart ? pos : neg).push_back(static_cast<int>(i));
  }
  if (static_cast<int>(pos.size()) < n_per_class || static_cast<int>(neg.size()) < n_per_class)
    throw std::invalid_argument("build_intent_dataset: need " + std::to_string(n_per_class) +
                                " sessions per class but corpus has " + std::to_string(pos.size()) +
                                " positive and " + std::to_string(neg.size()) + " negative");
  Rng root(seed);
  Rng prng = root.derive(0x706f73ULL);
  Rng nrng = root.derive(0x6e6567ULL);
  prng.shuffle(pos);
  nrng.shuffle(neg);

  const int n_train = static_cast<int>(std::llround(0.8 * n_per_class));
  const int n_val = static_cast<int>(std::llround(0.1 * n_per_class));
  IntentDataset ds;
  ds.seed = seed;
  auto take = [&corpus](const std::vector<int>& idx, int from, int to, std::vector<Session>& dst) {
    for (int i = from; i < to; ++i) dst.push_back(corpus[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
  };
  take(pos, 0, n_train, ds.train);
  take(neg, 0, n_train, ds.train);
  take(pos, n_train, n_train + n_val, ds.val);
  take(neg, n_train, n_train + n_val, ds.val);
  take(pos, n_train + n_val, n_per_class, ds.test);
  take(neg, n_train + n_val, n_per_class, ds.test);
  Rng m0 = root.derive(0x6d697830ULL), m1 = root.derive(0x6d697831ULL), m2 = root.derive(0x6d697832ULL);
  m0.shuffle(ds.train);
  m1.shuffle(ds.val);
  m2.shuffle(ds.test);
  return ds;
}

std::string strategy_name(Strategy s, int enc_index) {
  switch (s) {
    case Strategy::kEnc:
      return "enc_" + std::to_string(enc_index);
    case Strategy::kConcat:
      return "concat";
    case Strategy::kWal:
      return "wal";
    case Strategy::kFineTune:
      return "fine-tune";
  }
  throw std::invalid_argument("strategy_name: invalid strategy");
}

std::string IntentConfig::json() const {
  nlohmann::json j;
  j["hidden"] = hidden;
  j["lr"] = lr;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["batch_size"] = batch_size;
  j["backbone_lr"] = backbone_lr;
  j["ft_max_epochs"] = ft_max_epochs;
  j["seed"] = seed;
  return j.dump();
}

std::string IntentConfig::hash() const { return fnv1a64_hex(json()); }

std::vector<Tensor*> MlpClassifier::params() {
  std::vector<Tensor*> out = {&w1, &b1, &w2, &b2};
  if (wal_layers > 0) out.push_back(&wal_theta);
  return out;
}

std::vector<double> MlpClassifier::wal_weights() const {
  if (wal_layers == 0) return {};
  const Tensor w = num::softmax(wal_theta);
  return std::vector<double>(w.data(), w.data() + w.size());
}

namespace {

MlpClassifier make_mlp(int in_dim, int hidden, int wal_layers, Rng& rng) {
  MlpClassifier m;
  m.in_dim = in_dim;
  m.hidden = hidden;
  m.wal_layers = wal_layers;
  const double lim1 = std::sqrt(6.0 / (in_dim + hidden));
  const double lim2 = std::sqrt(6.0 / (hidden + 1));
  m.w1 = num::random_uniform({in_dim, hidden}, -lim1, lim1, rng);
  m.b1 = Tensor::zeros({hidden});
  m.w2 = num::random_uniform({hidden, 1}, -lim2, lim2, rng);
  m.b2 = Tensor::zeros({1});
  if (wal_layers > 0) m.wal_theta = Tensor::zeros({wal_layers});
  return m;
}

Tensor rows_subset(const Tensor& x, const std::vector<int>& idx) {
  const int d = x.cols();
  Tensor out({static_cast<int>(idx.size()), d});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(x.data() + static_cast<std::int64_t>(idx[r]) * d, d, out.data() + static_cast<std::int64_t>(r) * d);
  return out;
}

}  // namespace

// Shared head graph: features (already combined for non-wal) -> logits [B,1].
Var mlp_graph(GradTape& t, MlpClassifier& m, Var features, bool trainable) {
  auto bind = [&t, trainable](Tensor& p) { return trainable ? t.param(&p) : t.input(&p); };
  Var h = t.tanh(t.add_bias(t.matmul(features, bind(m.w1)), bind(m.b1)));
  return t.add_bias(t.matmul(h, bind(m.w2)), bind(m.b2));
}

Var mlp_loss_graph(GradTape& t, MlpClassifier& m, const Tensor& x_batch, const std::vector<double>& labels,
                   bool trainable) {
  Var feats;
  if (m.wal_layers > 0) {
    const int layers = m.wal_layers;
    const int batch = static_cast<int>(x_batch.rows());
    Tensor stacked(std::vector<int>{batch * layers, m.in_dim},
                   std::vector<double>(x_batch.data(), x_batch.data() + x_batch.size()));
    Var stack_c = t.constant(std::move(stacked));
    Var theta = trainable ? t.param(&m.wal_theta) : t.input(&m.wal_theta);
    feats = t.layer_weighted_sum(stack_c, t.softmax_rows(theta), batch, layers);
  } else {
    feats = t.constant(x_batch);
  }
  return t.bce_with_logits(mlp_graph(t, m, feats, trainable), labels);
}

namespace {

void check_two_classes(const std::vector<int>& y, const char* who) {
  bool has0 = false, has1 = false;
  for (int v : y) (v ? has1 : has0) = true;
  if (!has0 || !has1) throw std::invalid_argument(std::string(who) + ": training labels contain a single class");
}

}  // namespace

std::vector<double> MlpClassifier::predict(const Tensor& features) const {
  const std::int64_t n = features.rows();
  std::vector<double> probs(static_cast<std::size_t>(n));
  std::vector<double> combined(static_cast<std::size_t>(in_dim));
  const std::vector<double> w = wal_weights();
  for (std::int64_t r = 0; r < n; ++r) {
    const double* row = features.data() + r * features.cols();
    const double* x = row;
    if (wal_layers > 0) {
      std::fill(combined.begin(), combined.end(), 0.0);
      for (int li = 0; li < wal_layers; ++li)
        for (int d = 0; d < in_dim; ++d) combined[static_cast<std::size_t>(d)] += w[static_cast<std::size_t>(li)] * row[li * in_dim + d];
      x = combined.data();
    }
    double logit = b2[0];
    for (int hidx = 0; hidx < hidden; ++hidx) {
      double z = b1[hidx];
      for (int d = 0; d < in_dim; ++d) z += x[d] * w1.at(d, hidx);
      logit += std::tanh(z) * w2.at(hidx, 0);
    }
    probs[static_cast<std::size_t>(r)] = 1.0 / (1.0 + std::exp(-logit));
  }
  return probs;
}

double accuracy_of(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size() || probs.empty())
    throw std::invalid_argument("accuracy_of: size mismatch or empty");
  std::int64_t hit = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) hit += ((probs[i] >= 0.5 ? 1 : 0) == labels[i]);
  return static_cast<double>(hit) / static_cast<double>(probs.size());
}

double auc_of(const std::vector<double>& probs, const std::vector<int>& labels) {
  const std::size_t n = probs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&probs](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
  // Average ranks over ties.
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && probs[order[j + 1]] == probs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos_ranks = 0.0;
  std::int64_t pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k]) {
      pos_ranks += rank[k];
      ++pos;
    }
  const std::int64_t negc = static_cast<std::int64_t>(n) - pos;
  if (pos == 0 || negc == 0) return 0.5;
  return (pos_ranks - static_cast<double>(pos) * (pos + 1) / 2.0) /
         (static_cast<double>(pos) * static_cast<double>(negc));
}

Tensor extract_features(const bert::ProdBertModel& model, const std::vector<Session>& part, Strategy strategy,
                        int enc_index) {
  if (strategy == Strategy::kFineTune)
    throw std::invalid_argument("extract_features: fine-tune is not a static feature strategy");
  if (part.empty()) throw std::invalid_argument("extract_features: empty session list");
  const int l = model.config.layers;
  const int D = model.config.dim;
  if (strategy == Strategy::kEnc && (enc_index < 0 || enc_index >= l))
    throw std::invalid_argument("extract_features: enc layer index out of range");
  auto pooled = bert::pooled_all_layers(model, part);
  const int n = static_cast<int>(part.size());
  if (strategy == Strategy::kEnc) return pooled[static_cast<std::size_t>(enc_index)];
  // concat and wal share the stacked layout: layer blocks side by side.
  Tensor out({n, l * D});
  for (int li = 0; li < l; ++li)
    for (int r = 0; r < n; ++r)
      std::copy_n(pooled[static_cast<std::size_t>(li)].data() + static_cast<std::int64_t>(r) * D, D,
                  out.data() + static_cast<std::int64_t>(r) * l * D + static_cast<std::int64_t>(li) * D);
  return out;
}

Tensor featurize(const bert::ProdBertModel& model, const std::vector<std::string>& items, Strategy strategy,
                 int enc_index) {
  Session s;
  s.items = items;
  Tensor rows = extract_features(model, {s}, strategy, enc_index);
  Tensor out({rows.cols()});
  std::copy_n(rows.data(), rows.cols(), out.data());
  return out;
}

IntentResult train_intent_classifier(const Tensor& x_train, const std::vector<int>& y_train,
                                     const Tensor& x_val, const std::vector<int>& y_val,
                                     const Tensor& x_test, const std::vector<int>& y_test,
                                     const IntentConfig& cfg, int wal_layers) {
  if (x_train.rows() != static_cast<std::int64_t>(y_train.size()))
    throw std::invalid_argument("train_intent_classifier: features/labels mismatch");
  check_two_classes(y_train, "train_intent_classifier");
  const int cols = x_train.cols();
  const int in_dim = wal_layers > 0 ? cols / wal_layers : cols;
  if (wal_layers > 0 && in_dim * wal_layers != cols)
    throw std::invalid_argument("train_intent_classifier: feature width not divisible by layer count");

  Rng root(cfg.seed);
  Rng init_rng = root.derive(0x6d6c7069ULL);
  IntentResult res;
  res.classifier = make_mlp(in_dim, cfg.hidden, wal_layers, init_rng);
  MlpClassifier& clf = res.classifier;

  std::vector<Tensor*> params = clf.params();
  num::AdamState adam;
  adam.lr = cfg.lr;

  const int n = static_cast<int>(x_train.rows());
  double best_val = -1.0;
  int since = 0;
  std::vector<Tensor> snapshot;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng order_rng = root.derive(0x73687566ULL, static_cast<std::uint64_t>(epoch));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int hi = std::min(start + cfg.batch_size, n);
      std::vector<int> idx(order.begin() + start, order.begin() + hi);
      Tensor xb = rows_subset(x_train, idx);
      std::vector<double> yb(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = static_cast<double>(y_train[static_cast<std::size_t>(idx[i])]);
      GradTape t;
      Var loss = mlp_loss_graph(t, clf, xb, yb, /*trainable=*/true);
      t.backward(loss);
      std::vector<const Tensor*> grads;
      for (Tensor* p : params) grads.push_back(&t.grad(t.param(p)));
      num::adam_step(params, grads, adam);
    }
    res.log.train_acc.push_back(accuracy_of(clf.predict(x_train), y_train));
    res.log.val_acc.push_back(accuracy_of(clf.predict(x_val), y_val));
    res.log.epochs_run = epoch + 1;
    if (res.log.val_acc.back() > best_val) {
      best_val = res.log.val_acc.back();
      res.log.best_epoch = epoch;
      since = 0;
      snapshot.clear();
      for (Tensor* p : params) snapshot.push_back(*p);
    } else if (++since > cfg.patience) {
      break;
    }
  }
  if (!snapshot.empty())
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = snapshot[i];
  if (!res.log.train_acc.empty())
    res.log.overfit_flag = res.log.train_acc.back() - res.log.val_acc.back() > 0.10;
  res.log.test_accuracy = accuracy_of(clf.predict(x_test), y_test);
  res.log.test_auc = auc_of(clf.predict(x_test), y_test);
  return res;
}

namespace {

Tensor pooled_last_layer(const bert::ProdBertModel& model, const std::vector<Session>& part) {
  auto pooled = bert::pooled_all_layers(model, part);
  return pooled.back();
}

}  // namespace

std::vector<double> fine_tune_predict(const bert::ProdBertModel& model, const MlpClassifier& head,
                                      const std::vector<Session>& part) {
  return head.predict(pooled_last_layer(model, part));
}

FineTuneResult fine_tune(const bert::ProdBertModel& pretrained, const IntentDataset& data,
                         const IntentConfig& cfg) {
  if (!pretrained.trained)
    throw std::invalid_argument("fine_tune: backbone has no pretrained weights");
  const std::vector<int> y_train = IntentDataset::labels(data.train);
  const std::vector<int> y_val = IntentDataset::labels(data.val);
  const std::vector<int> y_test = IntentDataset::labels(data.test);
  check_two_classes(y_train, "fine_tune");

  FineTuneResult res;
  res.model = pretrained;
  Rng root(cfg.seed);
  Rng init_rng = root.derive(0x6d6c7069ULL);
  res.head = make_mlp(pretrained.config.dim, cfg.hidden, 0, init_rng);

  std::vector<Tensor*> backbone_params;
  for (auto& [name, p] : res.model.named_params()) {
    (void)name;
    backbone_params.push_back(p);
  }
  std::vector<Tensor*> head_params = res.head.params();
  num::AdamState adam_backbone, adam_head;
  adam_backbone.lr = cfg.backbone_lr;
  adam_head.lr = cfg.lr;

  const int n = static_cast<int>(data.train.size());
  double best_val = -1.0;
  int since = 0;
  std::vector<Tensor> snapshot;
  auto snap = [&]() {
    snapshot.clear();
    for (Tensor* p : backbone_params) snapshot.push_back(*p);
    for (Tensor* p : head_params) snapshot.push_back(*p);
  };
  for (int epoch = 0; epoch < cfg.ft_max_epochs; ++epoch) {
    Rng order_rng = root.derive(0x73687566ULL, static_cast<std::uint64_t>(epoch));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int hi = std::min(start + cfg.batch_size, n);
      std::vector<Session> batch;
      std::vector<double> yb;
      for (int i = start; i < hi; ++i) {
        batch.push_back(data.train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
        yb.push_back(static_cast<double>(y_train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]));
      }
      MaskedBatch mb = sessions::pad_batch(batch, res.model.vocab);
      GradTape t;
      // Dropout stays off: early stopping and the overfit flag are the
      // regularizers, and a zero backbone rate reduces exactly to frozen
      // feature extraction.
      bert::EncoderGraph g = bert::build_encoder_graph(t, res.model, mb, false, nullptr, nullptr);
      Var pooledv = t.masked_mean_pool(g.layer_out.back(), mb.batch, mb.max_len, mb.pad_flags);
      Var loss = t.bce_with_logits(mlp_graph(t, res.head, pooledv, true), yb);
      t.backward(loss);
      std::vector<const Tensor*> bg, hg;
      for (Tensor* p : backbone_params) bg.push_back(&t.grad(t.param(p)));
      for (Tensor* p : head_params) hg.push_back(&t.grad(t.param(p)));
      num::adam_step(backbone_params, bg, adam_backbone);
      num::adam_step(head_params, hg, adam_head);
    }
    res.log.train_acc.push_back(accuracy_of(fine_tune_predict(res.model, res.head, data.train), y_train));
    res.log.val_acc.push_back(accuracy_of(fine_tune_predict(res.model, res.head, data.val), y_val));
    res.log.epochs_run = epoch + 1;
    if (res.log.val_acc.back() > best_val) {
      best_val = res.log.val_acc.back();
      res.log.best_epoch = epoch;
      since = 0;
      snap();
    } else if (++since > cfg.patience) {
      break;
    }
  }
  if (!snapshot.empty()) {
    std::size_t k = 0;
    for (Tensor* p : backbone_params) *p = snapshot[k++];
    for (Tensor* p : head_params) *p = snapshot[k++];
  }
  if (!res.log.train_acc.empty()) {
    const double gap = res.log.train_acc.back() - res.log.val_acc.back();
    res.log.overfit_flag = gap > 0.10;
    if (res.log.overfit_flag)
      log::warn("fine_tune: train/val accuracy gap " + std::to_string(gap) + " exceeds 10%; overfitting");
  }
  res.log.test_accuracy = accuracy_of(fine_tune_predict(res.model, res.head, data.test), y_test);
  res.log.test_auc = auc_of(fine_tune_predict(res.model, res.head, data.test), y_test);
  return res;
}

// --- LSTM baseline ----------------------------------------------------------

std::vector<Tensor*> LstmClassifier::params() { return {&wx, &wh, &b, &w_out, &b_out}; }

namespace {

LstmClassifier make_lstm(int in_dim, int hidden, Rng& rng) {
  LstmClassifier m;
  m.in_dim = in_dim;
  m.hidden = hidden;
  const double lim = 1.0 / std::sqrt(static_cast<double>(hidden));
  m.wx = num::random_uniform({in_dim, 4 * hidden}, -lim, lim, rng);
  m.wh = num::random_uniform({hidden, 4 * hidden}, -lim, lim, rng);
  m.b = Tensor::zeros({4 * hidden});
  for (int i = hidden; i < 2 * hidden; ++i) m.b[i] = 1.0;  // forget-gate bias
  const double lim2 = std::sqrt(6.0 / (hidden + 1));
  m.w_out = num::random_uniform({hidden, 1}, -lim2, lim2, rng);
  m.b_out = Tensor::zeros({1});
  return m;
}

Tensor embed_batch(const p2v::Prod2vecModel& emb, const std::vector<Session>& batch, int max_len,
                   std::vector<std::uint8_t>* pad_flags) {
  const int B = static_cast<int>(batch.size());
  const int E = emb.config.dim;
  Tensor out({B * max_len, E});
  pad_flags->assign(static_cast<std::size_t>(B) * static_cast<std::size_t>(max_len), 1);
  for (int r = 0; r < B; ++r) {
    const auto& items = batch[static_cast<std::size_t>(r)].items;
    for (int t = 0; t < static_cast<int>(items.size()) && t < max_len; ++t) {
      (*pad_flags)[static_cast<std::size_t>(r) * max_len + t] = 0;
      if (!emb.vocab.contains(items[static_cast<std::size_t>(t)])) continue;  // OOV -> zero vector
      const int idx = emb.vocab.index_of(items[static_cast<std::size_t>(t)]);
      std::copy_n(emb.input_emb.data() + static_cast<std::int64_t>(idx) * E, E,
                  out.data() + (static_cast<std::int64_t>(r) * max_len + t) * E);
    }
  }
  return out;
}

}  // namespace

GradTape::Var lstm_logits_graph(GradTape& t, LstmClassifier& m, const Tensor& embedded,
                                const std::vector<std::uint8_t>& pad_flags, int batch, int len,
                                bool trainable) {
  if (embedded.rows() != static_cast<std::int64_t>(batch) * len || embedded.cols() != m.in_dim)
    throw std::invalid_argument("lstm_logits_graph: embedded batch shape mismatch");
  auto bind = [&t, trainable](Tensor& p) { return trainable ? t.param(&p) : t.input(&p); };
  const int H = m.hidden;
  Var wx = bind(m.wx), wh = bind(m.wh), b = bind(m.b);
  Var h = t.constant(Tensor::zeros({batch, H}));
  Var c = t.constant(Tensor::zeros({batch, H}));
  for (int step = 0; step < len; ++step) {
    Tensor x_t({batch, m.in_dim});
    Tensor keep({batch, H}), drop({batch, H});
    for (int r = 0; r < batch; ++r) {
      std::copy_n(embedded.data() + (static_cast<std::int64_t>(r) * len + step) * m.in_dim, m.in_dim,
                  x_t.data() + static_cast<std::int64_t>(r) * m.in_dim);
      const double live = pad_flags[static_cast<std::size_t>(r) * len + step] ? 0.0 : 1.0;
      for (int k = 0; k < H; ++k) {
        keep.at(r, k) = live;
        drop.at(r, k) = 1.0 - live;
      }
    }
    Var gates = t.add_bias(t.add(t.matmul(t.constant(std::move(x_t)), wx), t.matmul(h, wh)), b);
    Var ig = t.sigmoid(t.slice_cols(gates, 0, H));
    Var fg = t.sigmoid(t.slice_cols(gates, H, 2 * H));
    Var gg = t.tanh(t.slice_cols(gates, 2 * H, 3 * H));
    Var og = t.sigmoid(t.slice_cols(gates, 3 * H, 4 * H));
    Var c_new = t.add(t.mul(fg, c), t.mul(ig, gg));
    Var h_new = t.mul(og, t.tanh(c_new));
    Var keep_c = t.constant(std::move(keep));
    Var drop_c = t.constant(std::move(drop));
    c = t.add(t.mul(c_new, keep_c), t.mul(c, drop_c));
    h = t.add(t.mul(h_new, keep_c), t.mul(h, drop_c));
  }
  return t.add_bias(t.matmul(h, bind(m.w_out)), bind(m.b_out));
}

namespace {

std::vector<double> lstm_predict(LstmClassifier& m, const p2v::Prod2vecModel& emb,
                                 const std::vector<Session>& part, int batch_size) {
  std::vector<double> probs;
  probs.reserve(part.size());
  for (std::size_t start = 0; start < part.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi = std::min(start + static_cast<std::size_t>(batch_size), part.size());
    std::vector<Session> chunk(part.begin() + static_cast<std::ptrdiff_t>(start),
                               part.begin() + static_cast<std::ptrdiff_t>(hi));
    int max_len = 1;
    for (const Session& s : chunk) max_len = std::max(max_len, static_cast<int>(s.items.size()));
    std::vector<std::uint8_t> pads;
    Tensor embedded = embed_batch(emb, chunk, max_len, &pads);
    GradTape t;
    Var logits = lstm_logits_graph(t, m, embedded, pads, static_cast<int>(chunk.size()), max_len, false);
    const Tensor& z = t.value(logits);
    for (std::int64_t i = 0; i < z.size(); ++i) probs.push_back(1.0 / (1.0 + std::exp(-z[i])));
  }
  return probs;
}

}  // namespace

LstmResult train_intent_lstm(const p2v::Prod2vecModel& embeddings, const IntentDataset& data,
                             const IntentConfig& cfg) {
  if (!embeddings.trained) throw std::invalid_argument("train_intent_lstm: embeddings are untrained");
  const std::vector<int> y_train = IntentDataset::labels(data.train);
  const std::vector<int> y_val = IntentDataset::labels(data.val);
  const std::vector<int> y_test = IntentDataset::labels(data.test);
  check_two_classes(y_train, "train_intent_lstm");

  Rng root(cfg.seed);
  Rng init_rng = root.derive(0x6c73746dULL);
  LstmResult res;
  res.classifier = make_lstm(embeddings.config.dim, cfg.hidden, init_rng);
  LstmClassifier& clf = res.classifier;
  std::vector<Tensor*> params = clf.params();
  num::AdamState adam;
  adam.lr = cfg.lr;

  const int n = static_cast<int>(data.train.size());
  double best_val = -1.0;
  int since = 0;
  std::vector<Tensor> snapshot;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng order_rng = root.derive(0x73687566ULL, static_cast<std::uint64_t>(epoch));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int hi = std::min(start + cfg.batch_size, n);
      std::vector<Session> batch;
      std::vector<double> yb;
      for (int i = start; i < hi; ++i) {
        batch.push_back(data.train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
        yb.push_back(static_cast<double>(y_train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]));
      }
      int max_len = 1;
      for (const Session& s : batch) max_len = std::max(max_len, static_cast<int>(s.items.size()));
      std::vector<std::uint8_t> pads;
      Tensor embedded = embed_batch(embeddings, batch, max_len, &pads);
      GradTape t;
      Var logits = lstm_logits_graph(t, clf, embedded, pads, static_cast<int>(batch.size()), max_len, true);
      Var loss = t.bce_with_logits(logits, yb);
      t.backward(loss);
      std::vector<const Tensor*> grads;
      for (Tensor* p : params) grads.push_back(&t.grad(t.param(p)));
      num::adam_step(params, grads, adam);
    }
    res.log.train_acc.push_back(accuracy_of(lstm_predict(clf, embeddings, data.train, cfg.batch_size), y_train));
    res.log.val_acc.push_back(accuracy_of(lstm_predict(clf, embeddings, data.val, cfg.batch_size), y_val));
    res.log.epochs_run = epoch + 1;
    if (res.log.val_acc.back() > best_val) {
      best_val = res.log.val_acc.back();
      res.log.best_epoch = epoch;
      since = 0;
      snapshot.clear();
      for (Tensor* p : params) snapshot.push_back(*p);
    } else if (++since > cfg.patience) {
      break;
    }
  }
  if (!snapshot.empty())
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = snapshot[i];
  if (!res.log.train_acc.empty())
    res.log.overfit_flag = res.log.train_acc.back() - res.log.val_acc.back() > 0.10;
  res.log.test_accuracy = accuracy_of(lstm_predict(clf, embeddings, data.test, cfg.batch_size), y_test);
  res.log.test_auc = auc_of(lstm_predict(clf, embeddings, data.test, cfg.batch_size), y_test);
  return res;
}

std::string IntentReport::to_json() const {
  nlohmann::json j;
  j["strategy"] = strategy;
  j["accuracy"] = accuracy;
  j["auc"] = auc;
  j["epochs_run"] = epochs_run;
  j["overfit_flag"] = overfit_flag;
  j["seed"] = seed;
  j["backbone_hash"] = backbone_hash;
  j["head_hash"] = head_hash;
  return j.dump(2);
}

}  // namespace prodembed::intent
