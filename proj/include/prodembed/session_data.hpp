// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "prodembed/rng.hpp"

namespace prodembed::sessions {

// One shopping session: the ordered product interactions, an optional
// add-to-cart label, and an optional identifier.
struct Session {
  std::vector<std::string> items;
  std::optional<bool> add_to_cart;
  std::optional<std::string> session_id;

  bool operator==(const Session& o) const { return items == o.items && add_to_cart == o.add_to_cart; }
};

// Bijective product-ID <-> index map with fixed special slots.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kUnk = 2;
  static constexpr int kNumSpecials = 3;

  Vocabulary();

  int size() const { return static_cast<int>(index_to_token_.size()); }
  int product_count() const { return size() - kNumSpecials; }

  // Index of a token, kUnk when absent.
  int index_of(const std::string& token) const;
  bool contains(const std::string& token) const { return token_to_index_.count(token) > 0; }
  const std::string& token_of(int index) const;
  bool is_special(int index) const { return index < kNumSpecials; }

  int add(const std::string& token);  // returns existing index if present

  // Occurrence count recorded at build time (products only).
  std::int64_t count_of(int index) const;

  // Stable content fingerprint; checkpoints refuse to load across mismatches.
  std::string fingerprint() const;

 private:
  std::unordered_map<std::string, int> token_to_index_;
  std::vector<std::string> index_to_token_;
  std::vector<std::int64_t> counts_;
  friend Vocabulary build_vocab(const std::vector<Session>&);
};

// Session-log file format: one session per line, product IDs separated by
// single spaces, optional trailing tab plus "0"/"1" add-to-cart label.
// UTF-8, LF line endings.
std::vector<Session> ingest(const std::string& path);
void write_sessions(const std::vector<Session>& sessions, const std::string& path);

// Keeps sessions with min <= length <= max, preserving order. Idempotent.
std::vector<Session> filter_by_length(const std::vector<Session>& sessions, int min_len = 3, int max_len = 20);

// Index assignment follows first occurrence; specials occupy 0..2. Errors on
// an empty corpus.
Vocabulary build_vocab(const std::vector<Session>& sessions);

// Repeats each session k times (adjacent copies); each copy later receives
// its own mask pattern. k must be >= 1.
std::vector<Session> duplicate(const std::vector<Session>& sessions, int k = 5);

// Inputs/targets/flags for one masked-modeling batch, padded to the longest
// row. Wherever mask is set the input holds kMask and the target the original
// token; pad positions are never masked; every row has at least one mask.
struct MaskedBatch {
  int batch = 0;
  int max_len = 0;
  std::vector<int> input_ids;        // batch * max_len, row-major
  std::vector<int> target_ids;       // original tokens everywhere (pad at pads)
  std::vector<std::uint8_t> mask_flags;
  std::vector<std::uint8_t> pad_flags;

  int at(const std::vector<int>& m, int r, int c) const { return m[static_cast<std::size_t>(r) * max_len + c]; }
  std::int64_t positions() const { return static_cast<std::int64_t>(batch) * max_len; }
};

struct MaskingOptions {
  // BERT-style 80/10/10 substitution among selected positions (ablation);
  // default replaces every selected position with the mask token.
  bool bert_8020 = false;
};

// Independently selects each non-pad position with probability m; rows that
// draw no selection are redrawn until at least one. m must lie in (0,1).
MaskedBatch mask_batch(const std::vector<Session>& sessions, const Vocabulary& vocab, double m,
                       prodembed::num::Rng& rng, const MaskingOptions& opts = {});

// Unmasked padded batch (evaluation / feature extraction).
MaskedBatch pad_batch(const std::vector<Session>& sessions, const Vocabulary& vocab);

struct CorpusSplit {
  std::vector<Session> train, validation, test;
  std::uint64_t seed = 0;
};

// Random disjoint split with sizes within 1% of the requested ratios;
// reproducible for a given seed. Ratios must be non-negative and sum to 1.
CorpusSplit split(const std::vector<Session>& sessions, double train_ratio, double val_ratio,
                  double test_ratio, std::uint64_t seed);

}  // namespace prodembed::sessions
