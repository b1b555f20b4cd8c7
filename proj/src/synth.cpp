// SPDX-License-Identifier: Apache-2.0
#include "prodembed/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace prodembed::synth {

using sessions::Session;

void Catalog::rebuild_index() {
  by_id_.clear();
  by_type_.clear();
  for (std::size_t i = 0; i < products.size(); ++i) {
    if (!by_id_.emplace(products[i].id, static_cast<int>(i)).second)
      throw std::invalid_argument("Catalog: duplicate product id " + products[i].id);
    by_type_[products[i].type].push_back(static_cast<int>(i));
  }
  types_sorted_.clear();
  for (const auto& [t, v] : by_type_) {
    (void)v;
    types_sorted_.push_back(t);
  }
  std::sort(types_sorted_.begin(), types_sorted_.end());
}

int Catalog::type_count() const { return static_cast<int>(types_sorted_.size()); }

const std::string& Catalog::type_of(const std::string& product_id) const {
  auto it = by_id_.find(product_id);
  if (it == by_id_.end()) throw std::invalid_argument("Catalog: unknown product " + product_id);
  return products[static_cast<std::size_t>(it->second)].type;
}

bool Catalog::contains(const std::string& product_id) const { return by_id_.count(product_id) > 0; }

const std::vector<int>& Catalog::indices_of_type(const std::string& type) const {
  auto it = by_type_.find(type);
  if (it == by_type_.end()) throw std::invalid_argument("Catalog: unknown type " + type);
  return it->second;
}

std::vector<std::string> Catalog::type_names() const { return types_sorted_; }

std::vector<double> GenParams::default_length_weights() {
  // Lengths 3..20. Head-heavy profile whose cumulative mass crosses 0.5 at
  // length 5 and 0.75 at length 7.
  return {0.20, 0.18, 0.16, 0.13, 0.09, 0.06, 0.045, 0.035, 0.025,
          0.02, 0.015, 0.012, 0.009, 0.007, 0.005, 0.004, 0.003, 0.002};
}

void GenParams::validate() const {
  if (n_sessions < 1) throw std::invalid_argument("GenParams: n_sessions must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("GenParams: alpha must lie in [0,1]");
  if (!(markov_concentration >= 0.0 && markov_concentration <= 1.0))
    throw std::invalid_argument("GenParams: markov_concentration must lie in [0,1]");
  if (!(p_trigger >= 0.0 && p_trigger <= 1.0) || !(base_rate >= 0.0 && base_rate <= 1.0))
    throw std::invalid_argument("GenParams: label rates must lie in [0,1]");
  const auto& w = length_weights.empty() ? default_length_weights() : length_weights;
  if (min_len < 3 || min_len + static_cast<int>(w.size()) - 1 > 20)
    throw std::invalid_argument("GenParams: length support must stay within [3,20]");
  double sum = 0.0;
  for (double x : w) {
    if (x < 0.0) throw std::invalid_argument("GenParams: negative length weight");
    sum += x;
  }
  if (sum <= 0.0) throw std::invalid_argument("GenParams: length weights sum to zero");
}

Catalog generate_catalog(int n_products, int n_types, Rng& rng) {
  (void)rng;
  if (n_types < 1) throw std::invalid_argument("generate_catalog: need at least one type");
  if (n_types > n_products) throw std::invalid_argument("generate_catalog: more types than products");
  Catalog c;
  c.products.reserve(static_cast<std::size_t>(n_products));
  char buf[32];
  for (int i = 0; i < n_products; ++i) {
    Product p;
    std::snprintf(buf, sizeof(buf), "p%05d", i);
    p.id = buf;
    std::snprintf(buf, sizeof(buf), "type%02d", i % n_types);
    p.type = buf;
    c.products.push_back(std::move(p));
  }
  c.rebuild_index();
  return c;
}

std::vector<Session> generate_sessions(const Catalog& catalog, const GenParams& params) {
  params.validate();
  if (catalog.size() < 1) throw std::invalid_argument("generate_sessions: empty catalog");

  const auto weights = params.length_weights.empty() ? GenParams::default_length_weights() : params.length_weights;
  std::vector<double> cdf(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cdf[i] = acc;
  }
  for (double& v : cdf) v /= acc;

  // Fixed per-type successor cycle, derived from the corpus seed.
  Rng root(params.seed);
  std::vector<int> successor(static_cast<std::size_t>(catalog.size()), -1);
  {
    const auto types = catalog.type_names();
    for (std::size_t ti = 0; ti < types.size(); ++ti) {
      std::vector<int> members = catalog.indices_of_type(types[ti]);
      Rng trng = root.derive(0x6d61726bULL, ti);
      trng.shuffle(members);
      for (std::size_t j = 0; j < members.size(); ++j)
        successor[static_cast<std::size_t>(members[j])] = members[(j + 1) % members.size()];
    }
  }

  std::set<std::string> triggers;
  if (params.trigger_products.empty()) {
    const auto types = catalog.type_names();
    for (int idx : catalog.indices_of_type(types.front()))
      triggers.insert(catalog.products[static_cast<std::size_t>(idx)].id);
  } else {
    for (const std::string& t : params.trigger_products) {
      if (!catalog.contains(t)) throw std::invalid_argument("generate_sessions: trigger product not in catalog: " + t);
      triggers.insert(t);
    }
  }

  std::vector<Session> out;
  out.reserve(static_cast<std::size_t>(params.n_sessions));
  char idbuf[32];
  for (int si = 0; si < params.n_sessions; ++si) {
    Rng rng = root.derive(0x73657373ULL, static_cast<std::uint64_t>(si));
    const double u = rng.uniform();
    int len_idx = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    len_idx = std::min<int>(len_idx, static_cast<int>(cdf.size()) - 1);
    const int len = params.min_len + len_idx;

    Session s;
    s.items.reserve(static_cast<std::size_t>(len));
    int prev = rng.uniform_int(catalog.size());
    s.items.push_back(catalog.products[static_cast<std::size_t>(prev)].id);
    for (int t = 1; t < len; ++t) {
      int next;
      if (rng.uniform() < params.alpha) {
        if (rng.uniform() < params.markov_concentration) {
          next = successor[static_cast<std::size_t>(prev)];
        } else {
          const auto& members = catalog.indices_of_type(catalog.products[static_cast<std::size_t>(prev)].type);
          next = members[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(members.size())))];
        }
      } else {
        next = rng.uniform_int(catalog.size());
      }
      s.items.push_back(catalog.products[static_cast<std::size_t>(next)].id);
      prev = next;
    }

    bool has_trigger = false;
    for (const std::string& item : s.items)
      if (triggers.count(item)) {
        has_trigger = true;
        break;
      }
    s.add_to_cart = rng.bernoulli(has_trigger ? params.p_trigger : params.base_rate);
    std::snprintf(idbuf, sizeof(idbuf), "s%06d", si);
    s.session_id = idbuf;
    out.push_back(std::move(s));
  }
  return out;
}

void write_catalog(const Catalog& catalog, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_catalog: cannot open " + path);
  for (const Product& p : catalog.products) out << p.id << '\t' << p.type << '\n';
  if (!out) throw std::runtime_error("write_catalog: write failed for " + path);
}

Catalog read_catalog(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_catalog: cannot open " + path);
  Catalog c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw std::runtime_error("read_catalog: malformed line " + std::to_string(lineno) + " in " + path);
    c.products.push_back(Product{line.substr(0, tab), line.substr(tab + 1)});
  }
  if (c.products.empty()) throw std::runtime_error("read_catalog: empty catalog " + path);
  c.rebuild_index();
  return c;
}

}  // namespace prodembed::synth
