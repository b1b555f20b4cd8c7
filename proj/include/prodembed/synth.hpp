// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "prodembed/rng.hpp"
#include "prodembed/session_data.hpp"

namespace prodembed::synth {

using num::Rng;

struct Product {
  std::string id;
  std::string type;
};

struct Catalog {
  std::vector<Product> products;

  int size() const { return static_cast<int>(products.size()); }
  int type_count() const;
  const std::string& type_of(const std::string& product_id) const;
  bool contains(const std::string& product_id) const;
  const std::vector<int>& indices_of_type(const std::string& type) const;
  std::vector<std::string> type_names() const;  // sorted

  void rebuild_index();  // call after filling products

 private:
  std::unordered_map<std::string, int> by_id_;
  std::unordered_map<std::string, std::vector<int>> by_type_;
  std::vector<std::string> types_sorted_;
};

struct GenParams {
  int n_sessions = 20000;
  // Session-length distribution over [3,20]; index i is the weight of length
  // min_len+i. The default targets median 5 and 75th percentile 7.
  int min_len = 3;
  std::vector<double> length_weights;  // empty -> default profile
  double alpha = 0.9;                  // within-type stickiness
  double markov_concentration = 0.85;  // mass on the designated successor
  std::vector<std::string> trigger_products;  // empty -> every product of the first type
  double p_trigger = 0.95;                    // add-to-cart rate when a trigger is present
  double base_rate = 0.05;                    // add-to-cart rate otherwise
  std::uint64_t seed = 1;

  void validate() const;
  static std::vector<double> default_length_weights();
};

// Products spread round-robin over the types. Deterministic; the generator
// argument keeps the signature uniform with the rest of the module.
Catalog generate_catalog(int n_products, int n_types, Rng& rng);

// Latent-type Markov sessions: first item uniform; each following item stays
// in the previous item's type with probability alpha (favoring a fixed
// per-type successor cycle) and is otherwise uniform over the catalog. The
// add-to-cart label fires at p_trigger when any trigger product is present,
// at base_rate otherwise.
std::vector<sessions::Session> generate_sessions(const Catalog& catalog, const GenParams& params);

// One product per line: "<product_id>\t<type>".
void write_catalog(const Catalog& catalog, const std::string& path);
Catalog read_catalog(const std::string& path);

}  // namespace prodembed::synth
