// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prodembed/prod2vec.hpp"
#include "prodembed/prodbert.hpp"
#include "prodembed/session_data.hpp"
#include "prodembed/tape.hpp"

namespace prodembed::intent {

using num::GradTape;
using num::Rng;
using num::Tensor;

// Class-balanced labeled sessions with a fixed 80/10/10 split.
struct IntentDataset {
  std::vector<sessions::Session> train, val, test;
  std::uint64_t seed = 0;

  static std::vector<int> labels(const std::vector<sessions::Session>& part);
};

// Samples exactly n_per_class sessions per label. Errors (naming the
// available counts) when the corpus cannot supply them.
IntentDataset build_intent_dataset(const std::vector<sessions::Session>& corpus, int n_per_class,
                                   std::uint64_t seed);

enum class Strategy { kEnc, kConcat, kWal, kFineTune };
std::string strategy_name(Strategy s, int enc_index = 0);

struct IntentConfig {
  int hidden = 64;
  double lr = 1e-3;
  int max_epochs = 200;
  int patience = 10;  // epochs without validation improvement
  int batch_size = 64;
  double backbone_lr = 1e-5;  // fine-tune only
  int ft_max_epochs = 30;
  std::uint64_t seed = 1;

  std::string json() const;
  std::string hash() const;
};

// One-hidden-layer tanh MLP with a sigmoid output. For the wal strategy the
// classifier additionally owns softmax-normalized per-layer mixing weights.
struct MlpClassifier {
  int in_dim = 0;
  int hidden = 0;
  Tensor w1, b1, w2, b2;
  Tensor wal_theta;  // [layers] when wal, empty otherwise
  int wal_layers = 0;

  std::vector<Tensor*> params();
  // Features: [n, in_dim], or [n, layers*in_dim] stacked per layer for wal.
  std::vector<double> predict(const Tensor& features) const;
  std::vector<double> wal_weights() const;  // softmax(theta)
};

struct TrainLog {
  std::vector<double> train_acc, val_acc;
  int best_epoch = -1;
  int epochs_run = 0;
  bool overfit_flag = false;  // train/val gap above 10% at the chosen epoch
  double test_accuracy = 0.0;
  double test_auc = 0.0;
};

// Static feature extraction. enc/concat return pooled vectors; wal returns
// the per-layer pooled stack (combination weights live in the classifier).
Tensor featurize(const bert::ProdBertModel& model, const std::vector<std::string>& items, Strategy strategy,
                 int enc_index = 0);
Tensor extract_features(const bert::ProdBertModel& model, const std::vector<sessions::Session>& part,
                        Strategy strategy, int enc_index = 0);

// Head graph pieces (shared by training, fine-tuning, and the grad checks).
GradTape::Var mlp_graph(GradTape& tape, MlpClassifier& clf, GradTape::Var features, bool trainable);
GradTape::Var mlp_loss_graph(GradTape& tape, MlpClassifier& clf, const Tensor& features,
                             const std::vector<double>& labels, bool trainable);

struct IntentResult {
  MlpClassifier classifier;
  TrainLog log;
};

// Binary cross-entropy training with early stopping on validation accuracy;
// returns the best-validation checkpoint. wal_layers > 0 interprets features
// as per-layer stacks and trains the mixing weights jointly.
IntentResult train_intent_classifier(const Tensor& x_train, const std::vector<int>& y_train,
                                     const Tensor& x_val, const std::vector<int>& y_val,
                                     const Tensor& x_test, const std::vector<int>& y_test,
                                     const IntentConfig& cfg, int wal_layers = 0);

struct FineTuneResult {
  bert::ProdBertModel model;  // adapted copy of the backbone
  MlpClassifier head;
  TrainLog log;
};

// Mean-pooled last hidden layer -> MLP head; backbone and head train jointly
// with separate learning rates. Requires a pretrained backbone.
FineTuneResult fine_tune(const bert::ProdBertModel& pretrained, const IntentDataset& data,
                         const IntentConfig& cfg);
// Fine-tune-path predictions for a session list (eval mode).
std::vector<double> fine_tune_predict(const bert::ProdBertModel& model, const MlpClassifier& head,
                                      const std::vector<sessions::Session>& part);

// Single-layer LSTM over frozen per-item embeddings, final state -> sigmoid.
struct LstmClassifier {
  int in_dim = 0;
  int hidden = 0;
  Tensor wx, wh, b;  // [in,4H], [H,4H], [4H]; gate order i,f,g,o
  Tensor w_out, b_out;

  std::vector<Tensor*> params();
};

struct LstmResult {
  LstmClassifier classifier;
  TrainLog log;
};

// Graph for a padded embedded batch: returns the [batch,1] logits var.
// Embedded input is [batch*len, in_dim] with zero rows at pads.
GradTape::Var lstm_logits_graph(GradTape& tape, LstmClassifier& model, const Tensor& embedded,
                                const std::vector<std::uint8_t>& pad_flags, int batch, int len,
                                bool trainable);

// Items are embedded with the prod2vec input matrix; out-of-vocabulary items
// map to the zero vector. Embeddings stay frozen.
LstmResult train_intent_lstm(const p2v::Prod2vecModel& embeddings, const IntentDataset& data,
                             const IntentConfig& cfg);

double accuracy_of(const std::vector<double>& probs, const std::vector<int>& labels);
double auc_of(const std::vector<double>& probs, const std::vector<int>& labels);

struct IntentReport {
  std::string strategy;
  double accuracy = 0.0;
  double auc = 0.0;
  int epochs_run = 0;
  bool overfit_flag = false;
  std::uint64_t seed = 0;
  std::string backbone_hash;
  std::string head_hash;

  std::string to_json() const;
};

}  // namespace prodembed::intent
