// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "prodembed/viz.hpp"

using namespace prodembed;
using namespace prodembed::viz;
using num::Rng;
using num::Tensor;

namespace {

synth::Catalog mini_catalog() {
  synth::Catalog c;
  c.products = {{"s1", "shoe"}, {"s2", "shoe"}, {"p1", "pant"}, {"p2", "pant"}, {"h1", "hat"}};
  c.rebuild_index();
  return c;
}

// Two well-separated Gaussian blobs in 64 dimensions.
Tensor two_blobs(int per_cluster, double separation, std::vector<int>* labels, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({2 * per_cluster, 64});
  labels->clear();
  for (int i = 0; i < 2 * per_cluster; ++i) {
    const int c = i < per_cluster ? 0 : 1;
    labels->push_back(c);
    for (int d = 0; d < 64; ++d) x.at(i, d) = (c == 0 ? 0.0 : separation) + rng.normal(0.0, 1.0);
  }
  return x;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("majority_type: counts, tie rule, errors") {
  auto cat = mini_catalog();
  CHECK(majority_type({"s1", "s2", "p1"}, cat) == "shoe");
  CHECK(majority_type({"s1", "p1"}, cat) == "pant");  // tie -> lexicographically first
  CHECK(majority_type({"h1", "h1", "h1"}, cat) == "hat");
  CHECK_THROWS(majority_type({"s1", "unknown"}, cat));
  CHECK_THROWS(majority_type({}, cat));
}

TEST_CASE("joint_affinities: normalization and realized perplexity") {
  std::vector<int> labels;
  Tensor x = two_blobs(40, 8.0, &labels, 3);
  std::vector<double> realized;
  Tensor P = joint_affinities(x, 12.0, &realized);
  long double sum = 0.0L;
  for (std::int64_t i = 0; i < P.size(); ++i) {
    CHECK(P[i] >= 0.0);
    sum += P[i];
  }
  CHECK(std::abs(static_cast<double>(sum) - 1.0) < 1e-9);
  // Symmetric.
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) CHECK(P.at(i, j) == doctest::Approx(P.at(j, i)).epsilon(1e-15));
  REQUIRE(realized.size() == x.rows());
  for (double p : realized) CHECK(std::abs(p - 12.0) < 1e-3);

  CHECK_THROWS(joint_affinities(x, 30.0, nullptr));  // 3*30 >= 80
  Tensor bad({4, 2});
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(joint_affinities(bad, 2.0, nullptr));
}

TEST_CASE("tsne: separated clusters stay separated; KL shrinks after exaggeration") {
  std::vector<int> labels;
  Tensor x = two_blobs(60, 10.0, &labels, 7);
  TsneParams params;
  params.perplexity = 10.0;
  params.iterations = 600;
  Rng rng(5);
  Projection2D proj = tsne(x, params, rng);
  REQUIRE(proj.size() == 120);
  const double sil = silhouette_score(proj.x, proj.y, labels);
  CHECK(sil > 0.5);

  double kl_exagg_end = -1, kl_final = -1;
  for (const auto& [iter, kl] : proj.kl_history) {
    if (iter == params.exaggeration_iters) kl_exagg_end = kl;
    if (iter == params.iterations) kl_final = kl;
  }
  REQUIRE(kl_exagg_end > 0);
  REQUIRE(kl_final > 0);
  CHECK(kl_final < kl_exagg_end);
}

TEST_CASE("tsne: duplicate inputs land nearly coincident") {
  std::vector<int> labels;
  Tensor x = two_blobs(40, 9.0, &labels, 11);
  // Make rows 3 and 4 exact duplicates.
  for (int d = 0; d < 64; ++d) x.at(4, d) = x.at(3, d);
  TsneParams params;
  params.perplexity = 8.0;
  params.iterations = 600;
  Rng rng(9);
  Projection2D proj = tsne(x, params, rng);
  double spread = 0.0;
  for (std::size_t i = 0; i < proj.size(); ++i)
    for (std::size_t j = i + 1; j < proj.size(); ++j) {
      const double dx = proj.x[i] - proj.x[j], dy = proj.y[i] - proj.y[j];
      spread = std::max(spread, std::sqrt(dx * dx + dy * dy));
    }
  const double dup_dx = proj.x[3] - proj.x[4], dup_dy = proj.y[3] - proj.y[4];
  const double dup_dist = std::sqrt(dup_dx * dup_dx + dup_dy * dup_dy);
  CHECK(dup_dist < spread / 100.0);
}

TEST_CASE("tsne: KL is invariant to rotating the initialization") {
  std::vector<int> labels;
  Tensor x = two_blobs(35, 10.0, &labels, 13);
  TsneParams params;
  params.perplexity = 8.0;
  params.iterations = 400;

  Rng init_rng(3);
  Tensor y0({70, 2});
  for (std::int64_t i = 0; i < y0.size(); ++i) y0[i] = init_rng.normal(0.0, 1e-4);
  const double theta = 0.73;
  Tensor y0r({70, 2});
  for (int i = 0; i < 70; ++i) {
    y0r.at(i, 0) = std::cos(theta) * y0.at(i, 0) - std::sin(theta) * y0.at(i, 1);
    y0r.at(i, 1) = std::sin(theta) * y0.at(i, 0) + std::cos(theta) * y0.at(i, 1);
  }
  Rng r1(1), r2(1);
  Projection2D a = tsne(x, params, r1, &y0);
  Projection2D b = tsne(x, params, r2, &y0r);
  const double kl_a = a.kl_history.back().second;
  const double kl_b = b.kl_history.back().second;
  CHECK(std::abs(kl_a - kl_b) < 1e-6);
}

TEST_CASE("export_plot: csv line count, legend entries, determinism, empty error") {
  Rng rng(21);
  Projection2D proj;
  const char* types[3] = {"shoe", "pant", "hat"};
  for (int i = 0; i < 100; ++i) {
    proj.x.push_back(rng.normal(0, 1));
    proj.y.push_back(rng.normal(0, 1));
    proj.types.push_back(types[i % 3]);
    proj.session_ids.push_back("s" + std::to_string(i));
  }
  const std::string stem = (std::filesystem::temp_directory_path() / "viz_export_test").string();
  export_plot(proj, stem);

  const std::string csv = slurp(stem + ".csv");
  int lines = 0;
  for (char c : csv) lines += (c == '\n');
  CHECK(lines == 101);  // header + 100 rows
  CHECK(csv.rfind("x,y,type,session_id\n", 0) == 0);

  const std::string svg = slurp(stem + ".svg");
  int legends = 0;
  std::size_t pos = 0;
  while ((pos = svg.find("class=\"legend\"", pos)) != std::string::npos) {
    ++legends;
    pos += 10;
  }
  CHECK(legends == 3);
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("xlink") == std::string::npos);  // self-contained, no external refs

  export_plot(proj, stem);  // re-export: byte identical
  CHECK(slurp(stem + ".csv") == csv);

  Projection2D empty;
  const std::string stem2 = (std::filesystem::temp_directory_path() / "viz_export_empty").string();
  CHECK_THROWS(export_plot(empty, stem2));
  CHECK_FALSE(std::filesystem::exists(stem2 + ".csv"));
  CHECK_FALSE(std::filesystem::exists(stem2 + ".svg"));

  std::remove((stem + ".csv").c_str());
  std::remove((stem + ".svg").c_str());
}
