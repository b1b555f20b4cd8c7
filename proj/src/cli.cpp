// SPDX-License-Identifier: Apache-2.0
#include "prodembed/cli.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "prodembed/eval_intent.hpp"
#include "prodembed/eval_nep.hpp"
#include "prodembed/log.hpp"
#include "prodembed/prod2vec.hpp"
#include "prodembed/prodbert.hpp"
#include "prodembed/session_data.hpp"
#include "prodembed/synth.hpp"
#include "prodembed/viz.hpp"

namespace prodembed::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using num::Rng;
using num::Tensor;
using sessions::CorpusSplit;
using sessions::Session;
using sessions::Vocabulary;

namespace {

// Outputs go to fresh paths or the command fails.
std::string fresh_path(const fs::path& dir, const std::string& name) {
  const fs::path p = dir / name;
  if (fs::exists(p)) throw std::runtime_error("output already exists (refusing to overwrite): " + p.string());
  return p.string();
}

fs::path out_dir(const KvConfig& cfg) {
  const fs::path dir(cfg.require_str("out"));
  fs::create_directories(dir);
  return dir;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::vector<Session> load_filtered_corpus(const KvConfig& cfg) {
  auto corpus = sessions::ingest(cfg.require_str("corpus"));
  const std::size_t before = corpus.size();
  corpus = sessions::filter_by_length(corpus);
  log::info("corpus: " + std::to_string(before) + " sessions ingested, " + std::to_string(corpus.size()) +
            " after the length filter");
  if (corpus.empty()) throw std::runtime_error("corpus is empty after filtering");
  return corpus;
}

CorpusSplit split_from(const KvConfig& cfg, const std::vector<Session>& corpus) {
  const double tr = cfg.get_double("split.train", 0.8);
  const double va = cfg.get_double("split.val", 0.1);
  const double te = cfg.get_double("split.test", 0.1);
  const std::uint64_t seed = cfg.get_u64("split.seed", cfg.get_u64("seed", 1));
  return sessions::split(corpus, tr, va, te, seed);
}

bert::ProdBertConfig prodbert_config_from(const KvConfig& cfg) {
  bert::ProdBertConfig c;
  c.epochs = cfg.get_int("prodbert.epochs", 5);
  c.layers = cfg.get_int("prodbert.layers", 4);
  c.masking = cfg.get_double("prodbert.masking", 0.25);
  c.duplicated = cfg.get_bool("prodbert.duplicated", true);
  c.dim = cfg.get_int("prodbert.dim", 64);
  c.heads = cfg.get_int("prodbert.heads", 4);
  c.ffn_hidden = cfg.get_int("prodbert.ffn_hidden", 4 * c.dim);
  c.batch_size = cfg.get_int("prodbert.batch_size", 256);
  c.max_len = cfg.get_int("prodbert.max_len", 20);
  c.dropout = cfg.get_double("prodbert.dropout", 0.1);
  c.lr = cfg.get_double("prodbert.lr", 1e-3);
  c.bert_8020 = cfg.get_bool("prodbert.bert_8020", false);
  c.seed = cfg.get_u64("prodbert.seed", cfg.get_u64("seed", 1));
  c.validate();
  return c;
}

p2v::Prod2vecConfig p2v_config_from(const KvConfig& cfg) {
  p2v::Prod2vecConfig c;
  c.window = cfg.get_int("prod2vec.window", 15);
  c.iterations = cfg.get_int("prod2vec.iterations", 30);
  c.ns_exponent = cfg.get_double("prod2vec.ns_exponent", 0.75);
  c.dim = cfg.get_int("prod2vec.dim", 48);
  c.negatives = cfg.get_int("prod2vec.negatives", 5);
  c.initial_lr = cfg.get_double("prod2vec.initial_lr", 0.025);
  c.threads = cfg.get_int("prod2vec.threads", 1);
  c.seed = cfg.get_u64("prod2vec.seed", cfg.get_u64("seed", 1));
  c.validate();
  return c;
}

intent::IntentConfig intent_config_from(const KvConfig& cfg) {
  intent::IntentConfig c;
  c.hidden = cfg.get_int("intent.hidden", 64);
  c.lr = cfg.get_double("intent.lr", 1e-3);
  c.max_epochs = cfg.get_int("intent.max_epochs", 200);
  c.patience = cfg.get_int("intent.patience", 10);
  c.batch_size = cfg.get_int("intent.batch_size", 64);
  c.backbone_lr = cfg.get_double("intent.backbone_lr", 1e-5);
  c.ft_max_epochs = cfg.get_int("intent.ft_max_epochs", 30);
  c.seed = cfg.get_u64("intent.seed", cfg.get_u64("seed", 1));
  return c;
}

synth::GenParams gen_params_from(const KvConfig& cfg) {
  synth::GenParams p;
  p.n_sessions = cfg.get_int("generate.n_sessions", 20000);
  p.alpha = cfg.get_double("generate.alpha", 0.9);
  p.markov_concentration = cfg.get_double("generate.markov_concentration", 0.85);
  p.p_trigger = cfg.get_double("generate.p_trigger", 0.95);
  p.base_rate = cfg.get_double("generate.base_rate", 0.05);
  p.seed = cfg.get_u64("generate.seed", cfg.get_u64("seed", 1));
  return p;
}

Vocabulary train_vocab(const CorpusSplit& split) { return sessions::build_vocab(split.train); }

// --- subcommands ------------------------------------------------------------

int cmd_generate(const KvConfig& cfg) {
  const fs::path dir = out_dir(cfg);
  const std::string corpus_path = fresh_path(dir, "corpus.txt");
  const std::string catalog_path = fresh_path(dir, "catalog.tsv");
  const std::string snapshot_path = fresh_path(dir, "config_resolved.txt");

  Rng rng(cfg.get_u64("seed", 1));
  synth::Catalog catalog =
      synth::generate_catalog(cfg.get_int("generate.n_products", 500), cfg.get_int("generate.n_types", 10), rng);
  synth::GenParams params = gen_params_from(cfg);
  auto corpus = synth::generate_sessions(catalog, params);

  synth::write_catalog(catalog, catalog_path);
  sessions::write_sessions(corpus, corpus_path);
  cfg.write_snapshot(snapshot_path);
  log::info("generate: wrote " + std::to_string(corpus.size()) + " sessions over " +
            std::to_string(catalog.size()) + " products");
  return 0;
}

int cmd_train_prodbert(const KvConfig& cfg) {
  const fs::path dir = out_dir(cfg);
  const std::string ckpt_path = fresh_path(dir, "prodbert.ckpt");
  const std::string report_path = fresh_path(dir, "train_report.json");
  const std::string snapshot_path = fresh_path(dir, "config_resolved.txt");

  auto corpus = load_filtered_corpus(cfg);
  CorpusSplit split = split_from(cfg, corpus);
  Vocabulary vocab = train_vocab(split);
  bert::ProdBertConfig bcfg = prodbert_config_from(cfg);

  std::vector<Session> train = split.train;
  if (bcfg.duplicated) train = sessions::duplicate(train, 5);

  Rng rng(bcfg.seed);
  bert::ProdBertModel model = bert::init(bcfg, vocab, rng);
  log::info("train-prodbert: vocab " + std::to_string(vocab.size()) + ", " + std::to_string(train.size()) +
            " training rows, " + std::to_string(model.param_count()) + " parameters");
  bert::MlmTrainReport rep = bert::train_mlm(model, train, split.validation);

  bert::save_checkpoint(model, ckpt_path);
  json j;
  j["model"] = "prodbert";
  j["config_hash"] = bcfg.hash();
  j["vocab_hash"] = vocab.fingerprint();
  j["split_seed"] = split.seed;
  j["epochs_completed"] = rep.epochs_completed;
  j["diverged"] = rep.diverged;
  j["epoch_train_loss"] = rep.epoch_train_loss;
  j["epoch_val_loss"] = rep.epoch_val_loss;
  write_text(report_path, j.dump(2) + "\n");
  cfg.write_snapshot(snapshot_path);
  return 0;
}

int cmd_train_prod2vec(const KvConfig& cfg) {
  const fs::path dir = out_dir(cfg);
  const std::string emb_path = fresh_path(dir, "prod2vec_embeddings.txt");
  const std::string report_path = fresh_path(dir, "train_report.json");
  const std::string snapshot_path = fresh_path(dir, "config_resolved.txt");

  auto corpus = load_filtered_corpus(cfg);
  CorpusSplit split = split_from(cfg, corpus);
  p2v::Prod2vecConfig pcfg = p2v_config_from(cfg);
  p2v::CbowTrainReport rep;
  p2v::Prod2vecModel model = p2v::train_cbow(split.train, pcfg, &rep);
  p2v::save_embeddings(model, emb_path);

  json j;
  j["model"] = "prod2vec";
  j["config_hash"] = pcfg.hash();
  j["vocab_hash"] = model.vocab.fingerprint();
  j["split_seed"] = split.seed;
  j["iteration_loss"] = rep.iteration_loss;
  write_text(report_path, j.dump(2) + "\n");
  cfg.write_snapshot(snapshot_path);
  return 0;
}

int cmd_eval_nep(const KvConfig& cfg) {
  const fs::path dir = out_dir(cfg);
  const std::string report_json = fresh_path(dir, "nep_report.json");
  const std::string report_text = fresh_path(dir, "nep_report.txt");
  const std::string snapshot_path = fresh_path(dir, "config_resolved.txt");

  const std::string ckpt = cfg.get_str("prodbert.checkpoint", "");
  const std::string emb = cfg.get_str("prod2vec.embeddings", "");
  if (ckpt.empty() && emb.empty())
    throw std::runtime_error("eval-nep: provide prodbert.checkpoint and/or prod2vec.embeddings");

  auto corpus = load_filtered_corpus(cfg);
  CorpusSplit split = split_from(cfg, corpus);
  const int k = cfg.get_int("eval.k", 10);
  int n_cases = cfg.get_int("eval.n_cases", 0);
  if (n_cases <= 0) n_cases = std::min<int>(10000, static_cast<int>(split.test.size()));
  const std::uint64_t eval_seed = cfg.get_u64("eval.seed", cfg.get_u64("seed", 1));

  // Cases are sampled once and shared by every model under comparison.
  auto cases = nep::sample_nep_cases(split.test, n_cases, eval_seed);
  std::vector<nep::EvalReport> reports;
  if (!ckpt.empty()) {
    Vocabulary vocab = train_vocab(split);
    bert::ProdBertModel model = bert::load_checkpoint(ckpt, vocab);
    nep::EvalReport r = nep::eval_prodbert(model, cases, k);
    r.seed = eval_seed;
    r.split_seed = split.seed;
    reports.push_back(std::move(r));
  }
  if (!emb.empty()) {
    p2v::Prod2vecModel model = p2v::load_embeddings(emb);
    nep::EvalReport r = nep::eval_prod2vec(model, cases, k);
    r.seed = eval_seed;
    r.split_seed = split.seed;
    reports.push_back(std::move(r));
  }

  json arr = json::array();
  std::string text;
  for (const auto& r : reports) {
    arr.push_back(json::parse(r.to_json()));
    text += r.to_text();
  }
  write_text(report_json, arr.dump(2) + "\n");
  write_text(report_text, text);
  cfg.write_snapshot(snapshot_path);
  std::fputs(text.c_str(), stdout);
  return 0;
}

std::vector<std::string> parse_strategies(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const auto comma = csv.find(',', pos);
    const std::string item = csv.substr(pos, (comma == std::string::npos ? csv.size() : comma) - pos);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

int cmd_eval_intent(const KvConfig& cfg) {
  const fs::path dir = out_dir(cfg);
  const std::string report_json = fresh_path(dir, "intent_report.json");
  const std::string report_text = fresh_path(dir, "intent_report.txt");
  const std::string snapshot_path = fresh_path(dir, "config_resolved.txt");

  auto corpus = load_filtered_corpus(cfg);
  const int n_per_class = cfg.get_int("intent.n_per_class", 2000);
  intent::IntentConfig icfg = intent_config_from(cfg);
  intent::IntentDataset ds = intent::build_intent_dataset(corpus, n_per_class, icfg.seed);
  const auto y_train = intent::IntentDataset::labels(ds.train);
  const auto y_val = intent::IntentDataset::labels(ds.val);
  const auto y_test = intent::IntentDataset::labels(ds.test);

  const std::string ckpt = cfg.get_str("prodbert.checkpoint", "");
  const std::string emb = cfg.get_str("prod2vec.embeddings", "");

  bert::ProdBertModel backbone;
  bool have_backbone = false;
  if (!ckpt.empty()) {
    CorpusSplit split = split_from(cfg, corpus);
    Vocabulary vocab = train_vocab(split);
    backbone = bert::load_checkpoint(ckpt, vocab);
    have_backbone = true;
  }

  std::string raw = cfg.get_str("intent.strategies", "enc_0,enc_last,concat,wal,fine-tune,lstm");
  std::vector<intent::IntentReport> reports;

  for (const std::string& name : parse_strategies(raw)) {
    intent::IntentReport rep;
    rep.strategy = name;
    rep.seed = icfg.seed;
    rep.head_hash = icfg.hash();
    if (name == "lstm") {
      if (emb.empty()) throw std::runtime_error("eval-intent: strategy lstm needs prod2vec.embeddings");
      p2v::Prod2vecModel p2v_model = p2v::load_embeddings(emb);
      intent::LstmResult r = intent::train_intent_lstm(p2v_model, ds, icfg);
      rep.accuracy = r.log.test_accuracy;
      rep.auc = r.log.test_auc;
      rep.epochs_run = r.log.epochs_run;
      rep.overfit_flag = r.log.overfit_flag;
      rep.backbone_hash = p2v_model.config.hash();
    } else if (name == "fine-tune") {
      if (!have_backbone) throw std::runtime_error("eval-intent: strategy " + name + " needs prodbert.checkpoint");
      intent::FineTuneResult r = intent::fine_tune(backbone, ds, icfg);
      rep.accuracy = r.log.test_accuracy;
      rep.auc = r.log.test_auc;
      rep.epochs_run = r.log.epochs_run;
      rep.overfit_flag = r.log.overfit_flag;
      rep.backbone_hash = backbone.config.hash();
    } else {
      if (!have_backbone) throw std::runtime_error("eval-intent: strategy " + name + " needs prodbert.checkpoint");
      intent::Strategy strat;
      int enc_index = 0;
      if (name == "concat") {
        strat = intent::Strategy::kConcat;
      } else if (name == "wal") {
        strat = intent::Strategy::kWal;
      } else if (name.rfind("enc_", 0) == 0) {
        strat = intent::Strategy::kEnc;
        const std::string idx = name.substr(4);
        enc_index = idx == "last" ? backbone.config.layers - 1 : std::stoi(idx);
      } else {
        throw std::runtime_error("eval-intent: unknown strategy " + name);
      }
      Tensor x_train = intent::extract_features(backbone, ds.train, strat, enc_index);
      Tensor x_val = intent::extract_features(backbone, ds.val, strat, enc_index);
      Tensor x_test = intent::extract_features(backbone, ds.test, strat, enc_index);
      const int wal_layers = strat == intent::Strategy::kWal ? backbone.config.layers : 0;
      intent::IntentResult r =
          intent::train_intent_classifier(x_train, y_train, x_val, y_val, x_test, y_test, icfg, wal_layers);
      rep.strategy = strategy_name(strat, enc_index);
      rep.accuracy = r.log.test_accuracy;
      rep.auc = r.log.test_auc;
      rep.epochs_run = r.log.epochs_run;
      rep.overfit_flag = r.log.overfit_flag;
      rep.backbone_hash = backbone.config.hash();
    }
    log::info("eval-intent: " + rep.strategy + " accuracy " + std::to_string(rep.accuracy));
    reports.push_back(std::move(rep));
  }

  json arr = json::array();
  char line[160];
  std::string text;
  std::snprintf(line, sizeof(line), "%-10s %10s %8s %8s %8s\n", "strategy", "accuracy", "auc", "epochs",
                "overfit");
  text += line;
  for (const auto& r : reports) {
    arr.push_back(json::parse(r.to_json()));
    std::snprintf(line, sizeof(line), "%-10s %10.4f %8.4f %8d %8s\n", r.strategy.c_str(), r.accuracy, r.auc,
                  r.epochs_run, r.overfit_flag ? "yes" : "no");
    text += line;
  }
  write_text(report_json, arr.dump(2) + "\n");
  write_text(report_text, text);
  cfg.write_snapshot(snapshot_path);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_visualize(const KvConfig& cfg) {
  const fs::path dir = out_dir(cfg);
  const std::string stem = (dir / "projection").string();
  if (fs::exists(stem + ".csv") || fs::exists(stem + ".svg"))
    throw std::runtime_error("output already exists (refusing to overwrite): " + stem + ".{csv,svg}");
  const std::string report_path = fresh_path(dir, "projection_report.json");
  const std::string snapshot_path = fresh_path(dir, "config_resolved.txt");

  auto corpus = load_filtered_corpus(cfg);
  synth::Catalog catalog = synth::read_catalog(cfg.require_str("catalog"));
  const int want = cfg.get_int("viz.n_sessions", 1000);
  const std::uint64_t seed = cfg.get_u64("viz.seed", cfg.get_u64("seed", 1));

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const int n = std::min<int>(want, static_cast<int>(corpus.size()));
  std::vector<Session> sample;
  for (int i = 0; i < n; ++i) sample.push_back(corpus[order[static_cast<std::size_t>(i)]]);

  const std::string ckpt = cfg.get_str("prodbert.checkpoint", "");
  const std::string emb = cfg.get_str("prod2vec.embeddings", "");
  Tensor vectors;
  std::string source;
  if (!ckpt.empty()) {
    CorpusSplit split = split_from(cfg, corpus);
    Vocabulary vocab = train_vocab(split);
    bert::ProdBertModel model = bert::load_checkpoint(ckpt, vocab);
    vectors = intent::extract_features(model, sample, intent::Strategy::kEnc, 0);
    source = "prodbert enc_0";
  } else if (!emb.empty()) {
    p2v::Prod2vecModel model = p2v::load_embeddings(emb);
    vectors = Tensor({n, model.config.dim});
    for (int i = 0; i < n; ++i) {
      std::vector<std::string> known;
      for (const auto& item : sample[static_cast<std::size_t>(i)].items)
        if (model.vocab.contains(item)) known.push_back(item);
      if (known.empty()) continue;  // leaves the zero vector
      Tensor v = p2v::session_vector(model, known);
      std::copy_n(v.data(), v.size(), vectors.data() + static_cast<std::int64_t>(i) * model.config.dim);
    }
    source = "prod2vec mean";
  } else {
    throw std::runtime_error("visualize: provide prodbert.checkpoint or prod2vec.embeddings");
  }

  viz::TsneParams params;
  params.perplexity = cfg.get_double("viz.perplexity", 30.0);
  params.iterations = cfg.get_int("viz.iterations", 1000);
  Rng trng(seed ^ 0x7473e6ULL);
  viz::Projection2D proj = viz::tsne(vectors, params, trng);
  proj.source_model = source;
  for (int i = 0; i < n; ++i) {
    const Session& s = sample[static_cast<std::size_t>(i)];
    proj.types.push_back(viz::majority_type(s.items, catalog));
    proj.session_ids.push_back(s.session_id.value_or(std::to_string(i)));
  }
  viz::export_plot(proj, stem);

  json j;
  j["source"] = source;
  j["points"] = n;
  j["perplexity"] = params.perplexity;
  j["iterations"] = params.iterations;
  json hist = json::array();
  for (const auto& [it, kl] : proj.kl_history) hist.push_back({{"iteration", it}, {"kl", kl}});
  j["kl_history"] = hist;
  write_text(report_path, j.dump(2) + "\n");
  cfg.write_snapshot(snapshot_path);
  return 0;
}

std::vector<std::string> split_csv(const std::string& s) { return parse_strategies(s); }

int cmd_sweep(const KvConfig& cfg) {
  const fs::path dir = out_dir(cfg);
  const std::string report_json = fresh_path(dir, "sweep_results.json");
  const std::string report_text = fresh_path(dir, "sweep_results.txt");
  const std::string snapshot_path = fresh_path(dir, "config_resolved.txt");

  auto corpus = load_filtered_corpus(cfg);
  CorpusSplit split = split_from(cfg, corpus);
  Vocabulary vocab = train_vocab(split);
  const bert::ProdBertConfig base = prodbert_config_from(cfg);

  const auto epochs_list = split_csv(cfg.get_str("sweep.epochs", std::to_string(base.epochs)));
  const auto layers_list = split_csv(cfg.get_str("sweep.layers", "4,8"));
  const auto masking_list = split_csv(cfg.get_str("sweep.masking", "0.15,0.25"));
  const auto dup_list = split_csv(cfg.get_str("sweep.duplicated", base.duplicated ? "1" : "0"));
  const auto p2v_dims = split_csv(cfg.get_str("sweep.p2v_dims", "48,100"));

  const int k = cfg.get_int("eval.k", 10);
  int n_cases = cfg.get_int("eval.n_cases", 0);
  if (n_cases <= 0) n_cases = std::min<int>(10000, static_cast<int>(split.test.size()));
  const std::uint64_t eval_seed = cfg.get_u64("eval.seed", cfg.get_u64("seed", 1));
  auto cases = nep::sample_nep_cases(split.test, n_cases, eval_seed);

  json rows = json::array();
  std::string text;
  char line[200];
  std::snprintf(line, sizeof(line), "%-10s %6s %4s %6s %4s %10s %10s\n", "model", "e", "l", "m", "d", "ndcg",
                "hr");
  text += line;

  for (const auto& e : epochs_list)
    for (const auto& l : layers_list)
      for (const auto& m : masking_list)
        for (const auto& d : dup_list) {
          bert::ProdBertConfig c = base;
          c.epochs = std::stoi(e);
          c.layers = std::stoi(l);
          c.masking = std::stod(m);
          c.duplicated = (d == "1" || d == "true");
          c.validate();
          std::vector<Session> train = split.train;
          if (c.duplicated) train = sessions::duplicate(train, 5);
          Rng rng(c.seed);
          bert::ProdBertModel model = bert::init(c, vocab, rng);
          log::info("sweep: prodbert e=" + e + " l=" + l + " m=" + m + " d=" + d);
          bert::MlmTrainReport trep = bert::train_mlm(model, train, split.validation);
          nep::EvalReport r = nep::eval_prodbert(model, cases, k);
          json row;
          row["model"] = "prodbert";
          row["epochs"] = c.epochs;
          row["layers"] = c.layers;
          row["masking"] = c.masking;
          row["duplicated"] = c.duplicated ? 1 : 0;
          row["ndcg"] = r.metric("ndcg").mean;
          row["hr"] = r.metric("hr").mean;
          row["diverged"] = trep.diverged;
          rows.push_back(row);
          std::snprintf(line, sizeof(line), "%-10s %6d %4d %6.2f %4d %10.4f %10.4f\n", "prodbert", c.epochs,
                        c.layers, c.masking, c.duplicated ? 1 : 0, r.metric("ndcg").mean, r.metric("hr").mean);
          text += line;
        }

  for (const auto& dim : p2v_dims) {
    p2v::Prod2vecConfig pc = p2v_config_from(cfg);
    pc.dim = std::stoi(dim);
    pc.validate();
    log::info("sweep: prod2vec dim=" + dim);
    p2v::Prod2vecModel model = p2v::train_cbow(split.train, pc);
    nep::EvalReport r = nep::eval_prod2vec(model, cases, k);
    json row;
    row["model"] = "prod2vec";
    row["dim"] = pc.dim;
    row["ndcg"] = r.metric("ndcg").mean;
    row["hr"] = r.metric("hr").mean;
    rows.push_back(row);
    std::snprintf(line, sizeof(line), "%-10s dim=%-3d %*s %10.4f %10.4f\n", "prod2vec", pc.dim, 13, "",
                  r.metric("ndcg").mean, r.metric("hr").mean);
    text += line;
  }

  write_text(report_json, rows.dump(2) + "\n");
  write_text(report_text, text);
  cfg.write_snapshot(snapshot_path);
  std::fputs(text.c_str(), stdout);
  return 0;
}

}  // namespace

std::vector<std::string> known_commands() {
  return {"generate", "train-prodbert", "train-prod2vec", "eval-nep", "eval-intent", "visualize", "sweep"};
}

int run_command(const std::string& name, const KvConfig& cfg) {
  if (name == "generate") return cmd_generate(cfg);
  if (name == "train-prodbert") return cmd_train_prodbert(cfg);
  if (name == "train-prod2vec") return cmd_train_prod2vec(cfg);
  if (name == "eval-nep") return cmd_eval_nep(cfg);
  if (name == "eval-intent") return cmd_eval_intent(cfg);
  if (name == "visualize") return cmd_visualize(cfg);
  if (name == "sweep") return cmd_sweep(cfg);
  throw std::runtime_error("unknown command: " + name);
}

}  // namespace prodembed::cli
