// SPDX-License-Identifier: Apache-2.0
#include "prodembed/prodbert.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "prodembed/hashing.hpp"
#include "prodembed/log.hpp"

namespace prodembed::bert {

using json = nlohmann::json;
using sessions::MaskedBatch;
using sessions::Session;
using sessions::Vocabulary;
using Var = GradTape::Var;

void ProdBertConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("ProdBertConfig: epochs must be >= 1");
  if (layers < 1) throw std::invalid_argument("ProdBertConfig: layers must be >= 1");
  if (!(masking > 0.0 && masking < 1.0)) throw std::invalid_argument("ProdBertConfig: masking must lie in (0,1)");
  if (dim < 1 || heads < 1 || dim % heads != 0)
    throw std::invalid_argument("ProdBertConfig: dim must be positive and divisible by heads");
  if (ffn_hidden < 1 || batch_size < 1 || max_len < 1)
    throw std::invalid_argument("ProdBertConfig: ffn_hidden/batch_size/max_len must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("ProdBertConfig: dropout must lie in [0,1)");
}

std::string ProdBertConfig::json() const {
  nlohmann::json j;
  j["epochs"] = epochs;
  j["layers"] = layers;
  j["masking"] = masking;
  j["duplicated"] = duplicated;
  j["dim"] = dim;
  j["heads"] = heads;
  j["ffn_hidden"] = ffn_hidden;
  j["batch_size"] = batch_size;
  j["max_len"] = max_len;
  j["dropout"] = dropout;
  j["lr"] = lr;
  j["bert_8020"] = bert_8020;
  j["seed"] = seed;
  return j.dump();
}

std::string ProdBertConfig::hash() const { return fnv1a64_hex(json()); }

ProdBertConfig ProdBertConfig::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ProdBertConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.layers = j.at("layers").get<int>();
  c.masking = j.at("masking").get<double>();
  c.duplicated = j.at("duplicated").get<bool>();
  c.dim = j.at("dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_hidden = j.at("ffn_hidden").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.lr = j.at("lr").get<double>();
  c.bert_8020 = j.at("bert_8020").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::vector<std::pair<std::string, Tensor*>> ProdBertModel::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("tok_emb", &tok_emb);
  out.emplace_back("pos_emb", &pos_emb);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    AttentionLayer& L = layers[i];
    const std::string p = "layer" + std::to_string(i) + ".";
    out.emplace_back(p + "ln1_g", &L.ln1_g);
    out.emplace_back(p + "ln1_b", &L.ln1_b);
    out.emplace_back(p + "wq", &L.wq);
    out.emplace_back(p + "bq", &L.bq);
    out.emplace_back(p + "wk", &L.wk);
    out.emplace_back(p + "bk", &L.bk);
    out.emplace_back(p + "wv", &L.wv);
    out.emplace_back(p + "bv", &L.bv);
    out.emplace_back(p + "wo", &L.wo);
    out.emplace_back(p + "bo", &L.bo);
    out.emplace_back(p + "ln2_g", &L.ln2_g);
    out.emplace_back(p + "ln2_b", &L.ln2_b);
    out.emplace_back(p + "w1", &L.w1);
    out.emplace_back(p + "b1", &L.b1);
    out.emplace_back(p + "w2", &L.w2);
    out.emplace_back(p + "b2", &L.b2);
  }
  out.emplace_back("final_ln_g", &final_ln_g);
  out.emplace_back("final_ln_b", &final_ln_b);
  out.emplace_back("out_bias", &out_bias);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ProdBertModel::named_params() const {
  auto mut = const_cast<ProdBertModel*>(this)->named_params();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [n, p] : mut) out.emplace_back(n, p);
  return out;
}

std::int64_t ProdBertModel::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, p] : named_params()) {
    (void)name;
    n += p->size();
  }
  return n;
}

ProdBertModel init(const ProdBertConfig& config, const Vocabulary& vocab, Rng& rng) {
  config.validate();
  const int V = vocab.size();
  const int D = config.dim;
  const int F = config.ffn_hidden;
  ProdBertModel m;
  m.config = config;
  m.vocab = vocab;
  m.tok_emb = num::random_truncnorm({V, D}, 0.0, 0.02, rng);
  m.pos_emb = num::random_truncnorm({config.max_len, D}, 0.0, 0.02, rng);
  m.layers.resize(static_cast<std::size_t>(config.layers));
  for (AttentionLayer& L : m.layers) {
    L.ln1_g = Tensor::full({D}, 1.0);
    L.ln1_b = Tensor::zeros({D});
    L.wq = num::random_truncnorm({D, D}, 0.0, 0.02, rng);
    L.bq = Tensor::zeros({D});
    L.wk = num::random_truncnorm({D, D}, 0.0, 0.02, rng);
    L.bk = Tensor::zeros({D});
    L.wv = num::random_truncnorm({D, D}, 0.0, 0.02, rng);
    L.bv = Tensor::zeros({D});
    L.wo = num::random_truncnorm({D, D}, 0.0, 0.02, rng);
    L.bo = Tensor::zeros({D});
    L.ln2_g = Tensor::full({D}, 1.0);
    L.ln2_b = Tensor::zeros({D});
    L.w1 = num::random_truncnorm({D, F}, 0.0, 0.02, rng);
    L.b1 = Tensor::zeros({F});
    L.w2 = num::random_truncnorm({F, D}, 0.0, 0.02, rng);
    L.b2 = Tensor::zeros({D});
  }
  m.final_ln_g = Tensor::full({D}, 1.0);
  m.final_ln_b = Tensor::zeros({D});
  m.out_bias = Tensor::zeros({V});
  return m;
}

namespace {

// Shared graph construction over either trainable params or read-only inputs.
template <class ModelT, class BindFn>
EncoderGraph encode_impl(GradTape& t, ModelT& m, const MaskedBatch& b, bool training, Rng* drop_rng,
                         BindFn bind) {
  const ProdBertConfig& cfg = m.config;
  const int B = b.batch;
  const int L = b.max_len;
  const int D = cfg.dim;
  const int H = cfg.heads;
  if (L > cfg.max_len) throw std::invalid_argument("forward: sequence longer than max_len");
  const int V = m.vocab.size();
  for (int id : b.input_ids)
    if (id < 0 || id >= V) throw std::invalid_argument("forward: unknown token index " + std::to_string(id));
  if (training && drop_rng == nullptr) throw std::invalid_argument("forward: training mode needs a dropout rng");

  std::vector<int> pos_ids(static_cast<std::size_t>(B) * static_cast<std::size_t>(L));
  for (int r = 0; r < B; ++r)
    for (int c = 0; c < L; ++c) pos_ids[static_cast<std::size_t>(r) * L + c] = c;

  EncoderGraph g;
  g.tok_emb = bind(m.tok_emb);
  g.out_bias = bind(m.out_bias);
  Var x = t.add(t.lookup(g.tok_emb, b.input_ids), t.lookup(bind(m.pos_emb), pos_ids));

  // Additive key mask shared by all layers: -1e9 on pad keys underflows to an
  // exact zero attention weight after the stabilized softmax.
  Tensor mask({B * H * L, L});
  for (int r = 0; r < B; ++r)
    for (int kcol = 0; kcol < L; ++kcol)
      if (b.pad_flags[static_cast<std::size_t>(r) * L + kcol])
        for (int h = 0; h < H; ++h)
          for (int q = 0; q < L; ++q) mask.at((static_cast<std::int64_t>(r) * H + h) * L + q, kcol) = -1e9;
  Var mask_c = t.constant(std::move(mask));

  const double scale = 1.0 / std::sqrt(static_cast<double>(D / H));
  const double p = cfg.dropout;
  Rng dummy(0);
  Rng& dr = drop_rng ? *drop_rng : dummy;

  for (auto& layer : m.layers) {
    Var h1 = t.layer_norm(x, bind(layer.ln1_g), bind(layer.ln1_b));
    Var q = t.add_bias(t.matmul(h1, bind(layer.wq)), bind(layer.bq));
    Var k = t.add_bias(t.matmul(h1, bind(layer.wk)), bind(layer.bk));
    Var v = t.add_bias(t.matmul(h1, bind(layer.wv)), bind(layer.bv));
    Var q2 = t.split_heads(q, B, L, H);
    Var k2 = t.split_heads(k, B, L, H);
    Var v2 = t.split_heads(v, B, L, H);
    Var scores = t.add(t.attn_scores(q2, k2, B * H, L, scale), mask_c);
    Var probs = t.softmax_rows(scores);
    g.attn_probs.push_back(probs);
    Var ctx = t.attn_apply(t.dropout(probs, p, dr, training), v2, B * H, L);
    Var merged = t.merge_heads(ctx, B, L, H);
    Var attn_out = t.dropout(t.add_bias(t.matmul(merged, bind(layer.wo)), bind(layer.bo)), p, dr, training);
    x = t.add(x, attn_out);

    Var h2 = t.layer_norm(x, bind(layer.ln2_g), bind(layer.ln2_b));
    Var f = t.relu(t.add_bias(t.matmul(h2, bind(layer.w1)), bind(layer.b1)));
    Var f2 = t.dropout(t.add_bias(t.matmul(f, bind(layer.w2)), bind(layer.b2)), p, dr, training);
    x = t.add(x, f2);
    g.layer_out.push_back(x);
  }
  g.final_norm = t.layer_norm(x, bind(m.final_ln_g), bind(m.final_ln_b));
  return g;
}

}  // namespace

EncoderGraph build_encoder_graph(GradTape& tape, ProdBertModel& model, const MaskedBatch& batch,
                                 bool training, Rng* dropout_rng, std::vector<Var>* params_out) {
  auto bind = [&tape, params_out](Tensor& p) {
    Var v = tape.param(&p);
    if (params_out) params_out->push_back(v);
    return v;
  };
  return encode_impl(tape, model, batch, training, dropout_rng, bind);
}

EncoderGraph build_encoder_graph(GradTape& tape, const ProdBertModel& model, const MaskedBatch& batch) {
  auto bind = [&tape](const Tensor& p) { return tape.input(&p); };
  return encode_impl(tape, model, batch, false, nullptr, bind);
}

Var mlm_loss(GradTape& tape, const EncoderGraph& graph, const MaskedBatch& batch) {
  std::vector<int> rows;
  std::vector<int> targets;
  for (std::int64_t i = 0; i < batch.positions(); ++i)
    if (batch.mask_flags[static_cast<std::size_t>(i)]) {
      rows.push_back(static_cast<int>(i));
      targets.push_back(batch.target_ids[static_cast<std::size_t>(i)]);
    }
  if (rows.empty()) throw std::invalid_argument("mlm_loss: batch has no masked positions");
  Var hidden = tape.gather_rows(graph.final_norm, rows);
  Var logits = tape.add_bias(tape.matmul(hidden, graph.tok_emb, false, true), graph.out_bias);
  return tape.cross_entropy_mean(logits, targets);
}

ForwardResult forward(const ProdBertModel& model, const MaskedBatch& batch, bool keep_attention) {
  GradTape t;
  EncoderGraph g = build_encoder_graph(t, model, batch);
  ForwardResult r;
  r.batch = batch.batch;
  r.len = batch.max_len;
  for (Var v : g.layer_out) r.hidden.push_back(t.value(v));
  r.final_norm = t.value(g.final_norm);
  Var logits = t.add_bias(t.matmul(g.final_norm, g.tok_emb, false, true), g.out_bias);
  r.logits = t.value(logits);
  if (keep_attention)
    for (Var v : g.attn_probs) r.attn.push_back(t.value(v));
  return r;
}

Tensor logits_at_positions(const ProdBertModel& model, const MaskedBatch& batch,
                           const std::vector<int>& positions) {
  if (static_cast<int>(positions.size()) != batch.batch)
    throw std::invalid_argument("logits_at_positions: one position per row required");
  GradTape t;
  EncoderGraph g = build_encoder_graph(t, model, batch);
  std::vector<int> rows(positions.size());
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const int p = positions[r];
    if (p < 0 || p >= batch.max_len || batch.pad_flags[r * static_cast<std::size_t>(batch.max_len) + p])
      throw std::invalid_argument("logits_at_positions: position out of range at row " + std::to_string(r));
    rows[r] = static_cast<int>(r) * batch.max_len + p;
  }
  Var hidden = t.gather_rows(g.final_norm, rows);
  Var logits = t.add_bias(t.matmul(hidden, g.tok_emb, false, true), g.out_bias);
  return t.value(logits);
}

namespace {

// Shuffled, length-bucketed batches: shuffle the corpus, locally sort windows
// by length so padding stays tight, then shuffle batch order.
std::vector<std::vector<int>> plan_batches(const std::vector<Session>& corpus, int batch_size, Rng& rng) {
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const std::size_t window = static_cast<std::size_t>(std::max(batch_size * 16, 1024));
  for (std::size_t start = 0; start < order.size(); start += window) {
    const auto end = order.begin() + static_cast<std::ptrdiff_t>(std::min(start + window, order.size()));
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start), end, [&corpus](int a, int b) {
      return corpus[static_cast<std::size_t>(a)].items.size() < corpus[static_cast<std::size_t>(b)].items.size();
    });
  }
  std::vector<std::vector<int>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi = std::min(i + static_cast<std::size_t>(batch_size), order.size());
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  rng.shuffle(batches);
  return batches;
}

std::vector<Session> gather_sessions(const std::vector<Session>& corpus, const std::vector<int>& idx) {
  std::vector<Session> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(corpus[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

MlmTrainReport train_mlm(ProdBertModel& model, const std::vector<Session>& corpus,
                         const std::vector<Session>& val_sessions) {
  const ProdBertConfig& cfg = model.config;
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train_mlm: empty corpus");
  for (const Session& s : corpus)
    if (static_cast<int>(s.items.size()) > cfg.max_len)
      throw std::invalid_argument("train_mlm: corpus contains a session longer than max_len");

  auto named = model.named_params();
  std::vector<Tensor*> params;
  for (auto& [n, p] : named) {
    (void)n;
    params.push_back(p);
  }
  num::AdamState adam;
  adam.lr = cfg.lr;

  Rng root(cfg.seed);
  sessions::MaskingOptions mopts;
  mopts.bert_8020 = cfg.bert_8020;

  // Validation batches get one fixed mask pattern, reused every epoch.
  std::vector<MaskedBatch> val_batches;
  if (!val_sessions.empty()) {
    Rng vrng = root.derive(0x76616c6dULL);  // validation masking stream
    for (std::size_t i = 0; i < val_sessions.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(i + static_cast<std::size_t>(cfg.batch_size), val_sessions.size());
      std::vector<Session> chunk(val_sessions.begin() + static_cast<std::ptrdiff_t>(i),
                                 val_sessions.begin() + static_cast<std::ptrdiff_t>(hi));
      val_batches.push_back(sessions::mask_batch(chunk, model.vocab, cfg.masking, vrng, mopts));
    }
  }

  MlmTrainReport report;
  report.config_hash = cfg.hash();
  const double ln_v = std::log(static_cast<double>(model.vocab.size()));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = root.derive(0x73687566ULL, static_cast<std::uint64_t>(epoch));
    auto batches = plan_batches(corpus, cfg.batch_size, shuffle_rng);
    long double loss_sum = 0.0L;
    std::int64_t mask_count = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      Rng mask_rng = root.derive(0x6d61736bULL, static_cast<std::uint64_t>(epoch) * 1000003ULL + bi);
      Rng drop_rng = root.derive(0x64726f70ULL, static_cast<std::uint64_t>(epoch) * 1000003ULL + bi);
      auto chunk = gather_sessions(corpus, batches[bi]);
      MaskedBatch batch = sessions::mask_batch(chunk, model.vocab, cfg.masking, mask_rng, mopts);

      GradTape t;
      EncoderGraph g = build_encoder_graph(t, model, batch, /*training=*/true, &drop_rng, nullptr);
      Var loss = mlm_loss(t, g, batch);
      const double loss_v = t.scalar_value(loss);
      if (!std::isfinite(loss_v))
        throw std::runtime_error("train_mlm: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(bi));
      t.backward(loss);
      std::vector<const Tensor*> grads;
      grads.reserve(params.size());
      for (Tensor* p : params) grads.push_back(&t.grad(t.param(p)));
      num::adam_step(params, grads, adam);

      std::int64_t masked = 0;
      for (auto f : batch.mask_flags) masked += f;
      loss_sum += static_cast<long double>(loss_v) * static_cast<long double>(masked);
      mask_count += masked;
    }
    report.epoch_train_loss.push_back(static_cast<double>(loss_sum / static_cast<long double>(mask_count)));

    if (!val_batches.empty()) {
      long double vsum = 0.0L;
      std::int64_t vcount = 0;
      for (const MaskedBatch& vb : val_batches) {
        GradTape t;
        EncoderGraph g = build_encoder_graph(t, const_cast<const ProdBertModel&>(model), vb);
        const double lv = t.scalar_value(mlm_loss(t, g, vb));
        std::int64_t masked = 0;
        for (auto f : vb.mask_flags) masked += f;
        vsum += static_cast<long double>(lv) * static_cast<long double>(masked);
        vcount += masked;
      }
      const double vloss = static_cast<double>(vsum / static_cast<long double>(vcount));
      report.epoch_val_loss.push_back(vloss);
      if (!report.diverged && epoch + 1 >= (cfg.epochs + 4) / 5 && vloss > ln_v) {
        report.diverged = true;
        log::warn("train_mlm: validation loss " + std::to_string(vloss) + " above ln(vocab) " +
                  std::to_string(ln_v) + " after epoch " + std::to_string(epoch + 1) + "; model may be diverging");
      }
    }
    log::info("train_mlm: epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) +
              " loss " + std::to_string(report.epoch_train_loss.back()) +
              (report.epoch_val_loss.empty() ? "" : " val " + std::to_string(report.epoch_val_loss.back())));
  }

  model.trained = true;
  model.epochs_completed = cfg.epochs;
  model.train_seed = cfg.seed;
  report.epochs_completed = cfg.epochs;
  return report;
}

std::vector<ScoredProduct> predict_masked(const ProdBertModel& model, const std::vector<std::string>& items,
                                          int masked_position, int k) {
  if (k < 1) throw std::invalid_argument("predict_masked: k must be >= 1");
  if (k > model.vocab.size()) throw std::invalid_argument("predict_masked: k exceeds vocabulary size");
  if (masked_position < 0 || masked_position >= static_cast<int>(items.size()))
    throw std::invalid_argument("predict_masked: masked_position out of range");
  if (static_cast<int>(items.size()) > model.config.max_len)
    throw std::invalid_argument("predict_masked: session longer than max_len");

  Session s;
  s.items = items;
  MaskedBatch b = sessions::pad_batch({s}, model.vocab);
  const std::size_t at = static_cast<std::size_t>(masked_position);
  b.input_ids[at] = Vocabulary::kMask;
  b.mask_flags[at] = 1;

  Tensor logits = logits_at_positions(model, b, {masked_position});
  Tensor probs = num::softmax(logits);

  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(model.vocab.product_count()));
  for (int i = Vocabulary::kNumSpecials; i < model.vocab.size(); ++i) idx.push_back(i);
  const int take = std::min(k, static_cast<int>(idx.size()));
  std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&probs](int a, int b2) {
    if (probs[a] != probs[b2]) return probs[a] > probs[b2];
    return a < b2;
  });
  std::vector<ScoredProduct> out;
  out.reserve(static_cast<std::size_t>(take));
  for (int i = 0; i < take; ++i) out.push_back({model.vocab.token_of(idx[static_cast<std::size_t>(i)]), probs[idx[static_cast<std::size_t>(i)]]});
  return out;
}

std::vector<Tensor> pooled_all_layers(const ProdBertModel& model, const std::vector<Session>& batch) {
  if (batch.empty()) throw std::invalid_argument("pooled_all_layers: empty batch");
  const int n = static_cast<int>(batch.size());
  const int D = model.config.dim;
  const int l = model.config.layers;
  std::vector<Tensor> pooled(static_cast<std::size_t>(l), Tensor({n, D}));
  const int chunk_rows = model.config.batch_size;
  for (int start = 0; start < n; start += chunk_rows) {
    const int hi = std::min(start + chunk_rows, n);
    std::vector<Session> chunk(batch.begin() + start, batch.begin() + hi);
    MaskedBatch mb = sessions::pad_batch(chunk, model.vocab);
    ForwardResult fr = forward(model, mb);
    for (int li = 0; li < l; ++li) {
      const Tensor& H = fr.hidden[static_cast<std::size_t>(li)];
      for (int r = 0; r < mb.batch; ++r) {
        double* dst = pooled[static_cast<std::size_t>(li)].data() + static_cast<std::int64_t>(start + r) * D;
        int count = 0;
        for (int c = 0; c < mb.max_len; ++c) {
          if (mb.pad_flags[static_cast<std::size_t>(r) * mb.max_len + c]) continue;
          const double* src = H.data() + (static_cast<std::int64_t>(r) * mb.max_len + c) * D;
          for (int d = 0; d < D; ++d) dst[d] += src[d];
          ++count;
        }
        for (int d = 0; d < D; ++d) dst[d] /= count;
      }
    }
  }
  return pooled;
}

Tensor encode_session(const ProdBertModel& model, const std::vector<std::string>& items,
                      Selector selector, int layer_index) {
  if (items.empty()) throw std::invalid_argument("encode_session: empty session");
  if (selector == Selector::kEncLayer && (layer_index < 0 || layer_index >= model.config.layers))
    throw std::invalid_argument("encode_session: layer index out of range");
  Session s;
  s.items = items;
  auto pooled = pooled_all_layers(model, {s});
  const int D = model.config.dim;
  if (selector == Selector::kEncLayer) {
    Tensor out({D});
    std::copy_n(pooled[static_cast<std::size_t>(layer_index)].data(), D, out.data());
    return out;
  }
  const int l = model.config.layers;
  Tensor out({l * D});
  for (int li = 0; li < l; ++li)
    std::copy_n(pooled[static_cast<std::size_t>(li)].data(), D, out.data() + static_cast<std::int64_t>(li) * D);
  return out;
}

// --- checkpoint io ----------------------------------------------------------

namespace {
constexpr char kMagic[9] = "PBERTCK1";
}

void save_checkpoint(const ProdBertModel& model, const std::string& path) {
  json header;
  header["format"] = "prodbert-checkpoint-v1";
  header["config"] = json::parse(model.config.json());
  header["config_hash"] = model.config.hash();
  header["vocab_hash"] = model.vocab.fingerprint();
  header["vocab_size"] = model.vocab.size();
  header["trained"] = model.trained;
  header["epochs_completed"] = model.epochs_completed;
  header["train_seed"] = model.train_seed;
  json tensors = json::array();
  for (const auto& [name, p] : model.named_params()) {
    json t;
    t["name"] = name;
    t["shape"] = p->shape();
    tensors.push_back(t);
  }
  header["tensors"] = tensors;
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, 8);
  const std::uint64_t hlen = head.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, p] : model.named_params()) {
    (void)name;
    out.write(reinterpret_cast<const char*>(p->data()), static_cast<std::streamsize>(p->size() * 8));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ProdBertModel load_checkpoint(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string head(hlen, '\0');
  in.read(head.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);
  const json header = json::parse(head);

  const std::string want_hash = header.at("vocab_hash").get<std::string>();
  if (want_hash != vocab.fingerprint())
    throw std::runtime_error("load_checkpoint: vocabulary hash mismatch (checkpoint " + want_hash +
                             ", provided " + vocab.fingerprint() + ")");

  ProdBertConfig cfg = ProdBertConfig::from_json(header.at("config").dump());
  Rng dummy(0);
  ProdBertModel model = init(cfg, vocab, dummy);
  model.trained = header.at("trained").get<bool>();
  model.epochs_completed = header.at("epochs_completed").get<int>();
  model.train_seed = header.at("train_seed").get<std::uint64_t>();

  auto named = model.named_params();
  const json& tensors = header.at("tensors");
  if (tensors.size() != named.size()) throw std::runtime_error("load_checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != named[i].first)
      throw std::runtime_error("load_checkpoint: tensor order mismatch at " + named[i].first);
    const auto shape = t.at("shape").get<std::vector<int>>();
    if (shape != named[i].second->shape())
      throw std::runtime_error("load_checkpoint: shape mismatch at " + named[i].first);
    in.read(reinterpret_cast<char*>(named[i].second->data()),
            static_cast<std::streamsize>(named[i].second->size() * 8));
  }
  if (!in) throw std::runtime_error("load_checkpoint: truncated tensor data in " + path);
  return model;
}

}  // namespace prodembed::bert
