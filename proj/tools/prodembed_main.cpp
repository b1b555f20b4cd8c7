// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "prodembed/cli.hpp"
#include "prodembed/config.hpp"

// Pipeline driver: generate -> train -> evaluate -> visualize. Every
// subcommand reads an optional key-value config file, applies flag
// overrides, and snapshots the resolved configuration next to its outputs.
int main(int argc, char** argv) {
  CLI::App app{"prodembed: product embedding training and evaluation"};
  app.require_subcommand(1);

  struct Common {
    std::string config_path, out, corpus, catalog, checkpoint, embeddings;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
  };

  std::vector<std::pair<CLI::App*, std::shared_ptr<Common>>> subs;
  auto add_common = [&](CLI::App* sub) {
    auto c = std::make_shared<Common>();
    sub->add_option("--config", c->config_path, "key-value config file");
    sub->add_option("--out", c->out, "output directory");
    sub->add_option("--seed", c->seed, "global seed")->each([c](const std::string&) { c->seed_given = true; });
    sub->add_option("--set", c->sets, "override: key=value (repeatable)");
    subs.emplace_back(sub, c);
    return c;
  };

  auto* gen = app.add_subcommand("generate", "synthesize a catalog and session corpus");
  auto gen_c = add_common(gen);
  int gen_products = -1, gen_types = -1, gen_sessions = -1;
  gen->add_option("--n-products", gen_products, "catalog size");
  gen->add_option("--n-types", gen_types, "number of product types");
  gen->add_option("--n-sessions", gen_sessions, "number of sessions");

  auto* tb = app.add_subcommand("train-prodbert", "masked-session pretraining");
  auto tb_c = add_common(tb);
  int tb_epochs = -1, tb_layers = -1, tb_batch = -1;
  double tb_masking = -1, tb_lr = -1;
  int tb_dup = -1;
  tb->add_option("--corpus", tb_c->corpus, "session-log file");
  tb->add_option("--epochs", tb_epochs, "training epochs (e)");
  tb->add_option("--layers", tb_layers, "attention layers (l)");
  tb->add_option("--masking", tb_masking, "masking probability (m)");
  tb->add_option("--duplicated", tb_dup, "duplicate corpus x5 (d: 0/1)");
  tb->add_option("--batch-size", tb_batch, "batch size");
  tb->add_option("--lr", tb_lr, "learning rate");

  auto* tp = app.add_subcommand("train-prod2vec", "CBOW negative-sampling baseline");
  auto tp_c = add_common(tp);
  int tp_dim = -1, tp_iters = -1, tp_window = -1, tp_threads = -1;
  tp->add_option("--corpus", tp_c->corpus, "session-log file");
  tp->add_option("--dim", tp_dim, "embedding dimensions");
  tp->add_option("--iterations", tp_iters, "full passes");
  tp->add_option("--window", tp_window, "context window");
  tp->add_option("--threads", tp_threads, "worker threads");

  auto* en = app.add_subcommand("eval-nep", "next event prediction (ndcg@K, hr@K)");
  auto en_c = add_common(en);
  int en_k = -1, en_cases = -1;
  en->add_option("--corpus", en_c->corpus, "session-log file");
  en->add_option("--checkpoint", en_c->checkpoint, "prodbert checkpoint");
  en->add_option("--embeddings", en_c->embeddings, "prod2vec embeddings file");
  en->add_option("--k", en_k, "ranking cutoff K");
  en->add_option("--n-cases", en_cases, "testing cases");

  auto* ei = app.add_subcommand("eval-intent", "add-to-cart intent prediction");
  auto ei_c = add_common(ei);
  int ei_npc = -1;
  std::string ei_strategies;
  ei->add_option("--corpus", ei_c->corpus, "labeled session-log file");
  ei->add_option("--checkpoint", ei_c->checkpoint, "prodbert checkpoint");
  ei->add_option("--embeddings", ei_c->embeddings, "prod2vec embeddings file");
  ei->add_option("--n-per-class", ei_npc, "sessions per class");
  ei->add_option("--strategies", ei_strategies, "comma list: enc_0,enc_last,concat,wal,fine-tune,lstm");

  auto* vz = app.add_subcommand("visualize", "t-SNE projection of session embeddings");
  auto vz_c = add_common(vz);
  int vz_n = -1, vz_iters = -1;
  double vz_perp = -1;
  vz->add_option("--corpus", vz_c->corpus, "session-log file");
  vz->add_option("--catalog", vz_c->catalog, "catalog tsv (product\ttype)");
  vz->add_option("--checkpoint", vz_c->checkpoint, "prodbert checkpoint");
  vz->add_option("--embeddings", vz_c->embeddings, "prod2vec embeddings file");
  vz->add_option("--n-sessions", vz_n, "sessions to project");
  vz->add_option("--perplexity", vz_perp, "t-SNE perplexity");
  vz->add_option("--iterations", vz_iters, "t-SNE iterations");

  auto* sw = app.add_subcommand("sweep", "hyperparameter grid with an NEP results table");
  auto sw_c = add_common(sw);
  std::string sw_layers, sw_masking, sw_epochs, sw_dup, sw_p2v;
  sw->add_option("--corpus", sw_c->corpus, "session-log file");
  sw->add_option("--grid-layers", sw_layers, "comma list of l values");
  sw->add_option("--grid-masking", sw_masking, "comma list of m values");
  sw->add_option("--grid-epochs", sw_epochs, "comma list of e values");
  sw->add_option("--grid-duplicated", sw_dup, "comma list of d values");
  sw->add_option("--grid-p2v-dims", sw_p2v, "comma list of prod2vec dims");

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* active = nullptr;
    std::shared_ptr<Common> common;
    for (auto& [sub, c] : subs)
      if (sub->parsed()) {
        active = sub;
        common = c;
      }
    if (active == nullptr) throw std::runtime_error("no subcommand given");

    prodembed::cli::KvConfig cfg;
    if (!common->config_path.empty()) cfg = prodembed::cli::KvConfig::load_file(common->config_path);
    auto set_if = [&cfg](const std::string& key, const std::string& value, bool given) {
      if (given) cfg.set(key, value);
    };
    set_if("out", common->out, !common->out.empty());
    set_if("corpus", common->corpus, !common->corpus.empty());
    set_if("catalog", common->catalog, !common->catalog.empty());
    set_if("prodbert.checkpoint", common->checkpoint, !common->checkpoint.empty());
    set_if("prod2vec.embeddings", common->embeddings, !common->embeddings.empty());
    if (common->seed_given) cfg.set("seed", std::to_string(common->seed));

    const std::string name = active->get_name();
    set_if("generate.n_products", std::to_string(gen_products), name == "generate" && gen_products >= 0);
    set_if("generate.n_types", std::to_string(gen_types), name == "generate" && gen_types >= 0);
    set_if("generate.n_sessions", std::to_string(gen_sessions), name == "generate" && gen_sessions >= 0);
    set_if("prodbert.epochs", std::to_string(tb_epochs), tb_epochs >= 0);
    set_if("prodbert.layers", std::to_string(tb_layers), tb_layers >= 0);
    set_if("prodbert.masking", std::to_string(tb_masking), tb_masking >= 0);
    set_if("prodbert.duplicated", std::to_string(tb_dup), tb_dup >= 0);
    set_if("prodbert.batch_size", std::to_string(tb_batch), tb_batch >= 0);
    set_if("prodbert.lr", std::to_string(tb_lr), tb_lr >= 0);
    set_if("prod2vec.dim", std::to_string(tp_dim), tp_dim >= 0);
    set_if("prod2vec.iterations", std::to_string(tp_iters), tp_iters >= 0);
    set_if("prod2vec.window", std::to_string(tp_window), tp_window >= 0);
    set_if("prod2vec.threads", std::to_string(tp_threads), tp_threads >= 0);
    set_if("eval.k", std::to_string(en_k), en_k >= 0);
    set_if("eval.n_cases", std::to_string(en_cases), en_cases >= 0);
    set_if("intent.n_per_class", std::to_string(ei_npc), ei_npc >= 0);
    set_if("intent.strategies", ei_strategies, !ei_strategies.empty());
    set_if("viz.n_sessions", std::to_string(vz_n), vz_n >= 0);
    set_if("viz.perplexity", std::to_string(vz_perp), vz_perp >= 0);
    set_if("viz.iterations", std::to_string(vz_iters), vz_iters >= 0);
    set_if("sweep.layers", sw_layers, !sw_layers.empty());
    set_if("sweep.masking", sw_masking, !sw_masking.empty());
    set_if("sweep.epochs", sw_epochs, !sw_epochs.empty());
    set_if("sweep.duplicated", sw_dup, !sw_dup.empty());
    set_if("sweep.p2v_dims", sw_p2v, !sw_p2v.empty());

    for (const std::string& kv : common->sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got: " + kv);
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }

    return prodembed::cli::run_command(name, cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
