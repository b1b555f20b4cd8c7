// SPDX-License-Identifier: Apache-2.0
#include "prodembed/session_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace prodembed::sessions {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<mask>");
  add("<unk>");
  counts_.assign(kNumSpecials, 0);
}

int Vocabulary::index_of(const std::string& token) const {
  auto it = token_to_index_.find(token);
  return it == token_to_index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int index) const {
  if (index < 0 || index >= size()) throw std::out_of_range("Vocabulary: index out of range");
  return index_to_token_[static_cast<std::size_t>(index)];
}

int Vocabulary::add(const std::string& token) {
  auto it = token_to_index_.find(token);
  if (it != token_to_index_.end()) return it->second;
  const int idx = static_cast<int>(index_to_token_.size());
  token_to_index_.emplace(token, idx);
  index_to_token_.push_back(token);
  return idx;
}

std::int64_t Vocabulary::count_of(int index) const {
  if (index < 0 || index >= static_cast<int>(counts_.size())) return 0;
  return counts_[static_cast<std::size_t>(index)];
}

std::string Vocabulary::fingerprint() const {
  // FNV-1a over the ordered token list.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x0a;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : index_to_token_) mix(t);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

namespace {
bool valid_token(const std::string& t) {
  if (t.empty()) return false;
  for (unsigned char c : t)
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') return false;
  return true;
}
}  // namespace

std::vector<Session> ingest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ingest: cannot open " + path);
  std::vector<Session> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) throw std::runtime_error("ingest: empty line " + std::to_string(lineno) + " in " + path);
    Session s;
    std::string body = line;
    const auto tab = line.find('\t');
    if (tab != std::string::npos) {
      body = line.substr(0, tab);
      const std::string label = line.substr(tab + 1);
      if (label == "0")
        s.add_to_cart = false;
      else if (label == "1")
        s.add_to_cart = true;
      else
        throw std::runtime_error("ingest: bad label '" + label + "' at line " + std::to_string(lineno));
    }
    std::size_t pos = 0;
    while (pos <= body.size()) {
      const auto sp = body.find(' ', pos);
      const std::string tok = body.substr(pos, (sp == std::string::npos ? body.size() : sp) - pos);
      if (!valid_token(tok))
        throw std::runtime_error("ingest: malformed token at line " + std::to_string(lineno));
      s.items.push_back(tok);
      if (sp == std::string::npos) break;
      pos = sp + 1;
    }
    out.push_back(std::move(s));
  }
  if (lineno == 0) throw std::runtime_error("ingest: empty file " + path);
  return out;
}

void write_sessions(const std::vector<Session>& sessions, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_sessions: cannot open " + path);
  for (const Session& s : sessions) {
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      if (i) out << ' ';
      out << s.items[i];
    }
    if (s.add_to_cart.has_value()) out << '\t' << (*s.add_to_cart ? '1' : '0');
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_sessions: write failed for " + path);
}

std::vector<Session> filter_by_length(const std::vector<Session>& sessions, int min_len, int max_len) {
  std::vector<Session> out;
  out.reserve(sessions.size());
  for (const Session& s : sessions) {
    const int n = static_cast<int>(s.items.size());
    if (n >= min_len && n <= max_len) out.push_back(s);
  }
  return out;
}

Vocabulary build_vocab(const std::vector<Session>& sessions) {
  if (sessions.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  Vocabulary v;
  for (const Session& s : sessions)
    for (const std::string& item : s.items) {
      const int idx = v.add(item);
      if (static_cast<std::size_t>(idx) >= v.counts_.size()) v.counts_.resize(static_cast<std::size_t>(idx) + 1, 0);
      v.counts_[static_cast<std::size_t>(idx)] += 1;
    }
  return v;
}

std::vector<Session> duplicate(const std::vector<Session>& sessions, int k) {
  if (k < 1) throw std::invalid_argument("duplicate: k must be >= 1");
  std::vector<Session> out;
  out.reserve(sessions.size() * static_cast<std::size_t>(k));
  for (const Session& s : sessions)
    for (int i = 0; i < k; ++i) out.push_back(s);
  return out;
}

MaskedBatch pad_batch(const std::vector<Session>& sessions, const Vocabulary& vocab) {
  if (sessions.empty()) throw std::invalid_argument("pad_batch: empty batch");
  int max_len = 0;
  for (const Session& s : sessions) max_len = std::max(max_len, static_cast<int>(s.items.size()));
  if (max_len == 0) throw std::invalid_argument("pad_batch: empty sessions");
  MaskedBatch b;
  b.batch = static_cast<int>(sessions.size());
  b.max_len = max_len;
  const std::size_t total = static_cast<std::size_t>(b.batch) * static_cast<std::size_t>(max_len);
  b.input_ids.assign(total, Vocabulary::kPad);
  b.target_ids.assign(total, Vocabulary::kPad);
  b.mask_flags.assign(total, 0);
  b.pad_flags.assign(total, 1);
  for (int r = 0; r < b.batch; ++r) {
    const auto& items = sessions[static_cast<std::size_t>(r)].items;
    for (int c = 0; c < static_cast<int>(items.size()); ++c) {
      const int id = vocab.index_of(items[static_cast<std::size_t>(c)]);
      const std::size_t at = static_cast<std::size_t>(r) * static_cast<std::size_t>(max_len) + static_cast<std::size_t>(c);
      b.input_ids[at] = id;
      b.target_ids[at] = id;
      b.pad_flags[at] = 0;
    }
  }
  return b;
}

MaskedBatch mask_batch(const std::vector<Session>& sessions, const Vocabulary& vocab, double m,
                       prodembed::num::Rng& rng, const MaskingOptions& opts) {
  if (!(m > 0.0 && m < 1.0)) throw std::invalid_argument("mask_batch: m must lie in (0,1)");
  MaskedBatch b = pad_batch(sessions, vocab);
  for (int r = 0; r < b.batch; ++r) {
    const int len = static_cast<int>(sessions[static_cast<std::size_t>(r)].items.size());
    const std::size_t row0 = static_cast<std::size_t>(r) * static_cast<std::size_t>(b.max_len);
    std::vector<int> selected;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw std::runtime_error("mask_batch: mask redraw did not terminate");
      selected.clear();
      for (int c = 0; c < len; ++c)
        if (rng.uniform() < m) selected.push_back(c);
      if (!selected.empty()) break;
    }
    for (int c : selected) {
      b.mask_flags[row0 + static_cast<std::size_t>(c)] = 1;
      int replacement = Vocabulary::kMask;
      if (opts.bert_8020) {
        const double u = rng.uniform();
        if (u < 0.8) {
          replacement = Vocabulary::kMask;
        } else if (u < 0.9) {
          replacement = Vocabulary::kNumSpecials + rng.uniform_int(vocab.product_count());
        } else {
          replacement = b.target_ids[row0 + static_cast<std::size_t>(c)];
        }
      }
      b.input_ids[row0 + static_cast<std::size_t>(c)] = replacement;
    }
  }
  return b;
}

CorpusSplit split(const std::vector<Session>& sessions, double train_ratio, double val_ratio,
                  double test_ratio, std::uint64_t seed) {
  const double sum = train_ratio + val_ratio + test_ratio;
  if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0 || std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must be non-negative and sum to 1");
  const std::size_t n = sessions.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  prodembed::num::Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(n)));
  const std::size_t n_val = static_cast<std::size_t>(std::llround(val_ratio * static_cast<double>(n)));
  CorpusSplit out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const Session& s = sessions[order[i]];
    if (i < n_train)
      out.train.push_back(s);
    else if (i < n_train + n_val)
      out.validation.push_back(s);
    else
      out.test.push_back(s);
  }
  return out;
}

}  // namespace prodembed::sessions
