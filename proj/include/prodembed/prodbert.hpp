// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prodembed/optim.hpp"
#include "prodembed/rng.hpp"
#include "prodembed/session_data.hpp"
#include "prodembed/tape.hpp"
#include "prodembed/tensor.hpp"

namespace prodembed::bert {

using num::GradTape;
using num::Rng;
using num::Tensor;

struct ProdBertConfig {
  int epochs = 10;         // e
  int layers = 4;          // l
  double masking = 0.25;   // m
  bool duplicated = true;  // d: corpus repeated x5 before training
  int dim = 64;
  int heads = 4;
  int ffn_hidden = 256;
  int batch_size = 256;
  int max_len = 20;
  double dropout = 0.1;
  double lr = 1e-3;
  bool bert_8020 = false;  // 80/10/10 substitution ablation
  std::uint64_t seed = 1;

  void validate() const;
  std::string json() const;       // canonical serialization
  std::string hash() const;       // fingerprint of json()
  static ProdBertConfig from_json(const std::string& text);
};

struct AttentionLayer {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;
};

// Encoder with learned positional embeddings and a vocab-logit projection
// tied to the token embedding table.
struct ProdBertModel {
  ProdBertConfig config;
  sessions::Vocabulary vocab;
  Tensor tok_emb;  // [V, dim]; also the (transposed) output projection
  Tensor pos_emb;  // [max_len, dim]
  std::vector<AttentionLayer> layers;
  Tensor final_ln_g, final_ln_b;
  Tensor out_bias;  // [V]

  bool trained = false;
  int epochs_completed = 0;
  std::uint64_t train_seed = 0;

  // Stable parameter ordering used by the optimizer and the checkpoint file.
  std::vector<std::pair<std::string, Tensor*>> named_params();
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;
  std::int64_t param_count() const;
};

// Fresh weights ~ truncated normal (std 0.02); deterministic for a seed.
ProdBertModel init(const ProdBertConfig& config, const sessions::Vocabulary& vocab, Rng& rng);

struct ForwardResult {
  int batch = 0;
  int len = 0;
  std::vector<Tensor> hidden;  // one [batch*len, dim] per layer (post-block)
  Tensor final_norm;           // [batch*len, dim]
  Tensor logits;               // [batch*len, vocab]
  std::vector<Tensor> attn;    // per layer [batch*heads*len, len] (probabilities)
};

// Evaluation-mode forward over a padded batch. Pad keys are excluded from
// attention by additive masking; every attention row over non-pad keys sums
// to 1. Rejects token indices outside the vocabulary and rows longer than
// max_len.
ForwardResult forward(const ProdBertModel& model, const sessions::MaskedBatch& batch,
                      bool keep_attention = false);

// Vocab logits only at one chosen position per row: [batch, vocab].
Tensor logits_at_positions(const ProdBertModel& model, const sessions::MaskedBatch& batch,
                           const std::vector<int>& positions);

struct MlmTrainReport {
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_val_loss;
  bool diverged = false;
  int epochs_completed = 0;
  std::string config_hash;
};

// Masked-modeling training over an already filtered (and, when configured,
// duplicated) corpus. val_sessions, when non-empty, get a fixed mask pattern
// and are scored every epoch; a validation loss still above ln(vocab) after
// 20% of the epochs raises the diverged flag (training continues).
MlmTrainReport train_mlm(ProdBertModel& model, const std::vector<sessions::Session>& corpus,
                         const std::vector<sessions::Session>& val_sessions = {});

struct ScoredProduct {
  std::string product_id;
  double probability = 0.0;
};

// Top-K products for the masked position, highest softmax probability first,
// specials excluded, ties broken by vocabulary index.
std::vector<ScoredProduct> predict_masked(const ProdBertModel& model, const std::vector<std::string>& items,
                                          int masked_position, int k);

enum class Selector { kEncLayer, kConcat };

// Mean-pooled session features: layer index i pools that layer's states
// (dim), concat stacks every layer (layers*dim).
Tensor encode_session(const ProdBertModel& model, const std::vector<std::string>& items,
                      Selector selector, int layer_index = 0);

// Batched pooling used by feature extraction: one [n_sessions, dim] matrix
// per layer, pooled over non-pad positions.
std::vector<Tensor> pooled_all_layers(const ProdBertModel& model, const std::vector<sessions::Session>& batch);

// Binary container: header (config, vocab fingerprint, tensor index) plus raw
// parameter data. Loading verifies the provided vocabulary's fingerprint.
void save_checkpoint(const ProdBertModel& model, const std::string& path);
ProdBertModel load_checkpoint(const std::string& path, const sessions::Vocabulary& vocab);

// Internal graph plumbing, exposed for the fine-tuning head and grad checks.
struct EncoderGraph {
  std::vector<GradTape::Var> layer_out;
  std::vector<GradTape::Var> attn_probs;  // per layer, post-softmax
  GradTape::Var final_norm;
  GradTape::Var tok_emb;  // for the tied projection
  GradTape::Var out_bias;
};
EncoderGraph build_encoder_graph(GradTape& tape, ProdBertModel& model, const sessions::MaskedBatch& batch,
                                 bool training, Rng* dropout_rng, std::vector<GradTape::Var>* params_out);
EncoderGraph build_encoder_graph(GradTape& tape, const ProdBertModel& model, const sessions::MaskedBatch& batch);

// Scalar MLM loss over the batch's masked positions (tied projection + bias).
GradTape::Var mlm_loss(GradTape& tape, const EncoderGraph& graph, const sessions::MaskedBatch& batch);

}  // namespace prodembed::bert
