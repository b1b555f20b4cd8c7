// SPDX-License-Identifier: Apache-2.0
#include "prodembed/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace prodembed::viz {

std::string majority_type(const std::vector<std::string>& items, const synth::Catalog& catalog) {
  if (items.empty()) throw std::invalid_argument("majority_type: empty session");
  std::map<std::string, int> counts;
  for (const std::string& item : items) counts[catalog.type_of(item)]++;
  std::string best;
  int best_count = -1;
  for (const auto& [type, count] : counts) {
    if (count > best_count) {  // map iterates types in lexicographic order
      best = type;
      best_count = count;
    }
  }
  return best;
}

namespace {

Tensor pairwise_sq_dists(const Tensor& v) {
  const std::int64_t n = v.rows();
  const int d = v.cols();
  Tensor out({static_cast<int>(n), static_cast<int>(n)});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = i + 1; j < n; ++j) {
      const double* a = v.data() + i * d;
      const double* b = v.data() + j * d;
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
      }
      out.at(i, j) = s;
      out.at(j, i) = s;
    }
  return out;
}

}  // namespace

Tensor joint_affinities(const Tensor& vectors, double perplexity, std::vector<double>* realized_perplexity) {
  if (!vectors.all_finite()) throw std::invalid_argument("joint_affinities: non-finite input");
  const std::int64_t n = vectors.rows();
  if (perplexity < 2.0) throw std::invalid_argument("joint_affinities: perplexity must be >= 2");
  if (3.0 * perplexity >= static_cast<double>(n))
    throw std::invalid_argument("joint_affinities: need more than 3*perplexity points, have " + std::to_string(n));
  const Tensor D = pairwise_sq_dists(vectors);
  Tensor P({static_cast<int>(n), static_cast<int>(n)});
  if (realized_perplexity) realized_perplexity->assign(static_cast<std::size_t>(n), 0.0);
  const double target_entropy = std::log(perplexity);

  std::vector<double> row(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    double beta = 1.0, beta_min = 0.0, beta_max = std::numeric_limits<double>::infinity();
    double entropy = 0.0;
    for (int it = 0; it < 200; ++it) {
      double sum = 0.0;
      double dmin = std::numeric_limits<double>::infinity();
      for (std::int64_t j = 0; j < n; ++j)
        if (j != i) dmin = std::min(dmin, D.at(i, j));
      for (std::int64_t j = 0; j < n; ++j) {
        row[static_cast<std::size_t>(j)] = (j == i) ? 0.0 : std::exp(-beta * (D.at(i, j) - dmin));
        sum += row[static_cast<std::size_t>(j)];
      }
      entropy = 0.0;
      for (std::int64_t j = 0; j < n; ++j) {
        const double p = row[static_cast<std::size_t>(j)] / sum;
        row[static_cast<std::size_t>(j)] = p;
        if (p > 1e-300) entropy -= p * std::log(p);
      }
      const double diff = entropy - target_entropy;
      if (std::abs(diff) < 1e-9) break;
      if (diff > 0) {  // spread too wide: sharpen
        beta_min = beta;
        beta = std::isinf(beta_max) ? beta * 2.0 : 0.5 * (beta + beta_max);
      } else {
        beta_max = beta;
        beta = 0.5 * (beta + beta_min);
      }
    }
    for (std::int64_t j = 0; j < n; ++j) P.at(i, j) = row[static_cast<std::size_t>(j)];
    if (realized_perplexity) (*realized_perplexity)[static_cast<std::size_t>(i)] = std::exp(entropy);
  }

  // Symmetrize; total mass becomes exactly 1.
  Tensor J({static_cast<int>(n), static_cast<int>(n)});
  const double inv = 1.0 / (2.0 * static_cast<double>(n));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) J.at(i, j) = (P.at(i, j) + P.at(j, i)) * inv;
  return J;
}

namespace {

double kl_against(const Tensor& P, const Tensor& Y) {
  const std::int64_t n = P.rows();
  double z = 0.0;
  Tensor num({static_cast<int>(n), static_cast<int>(n)});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = i + 1; j < n; ++j) {
      const double dx = Y.at(i, 0) - Y.at(j, 0);
      const double dy = Y.at(i, 1) - Y.at(j, 1);
      const double q = 1.0 / (1.0 + dx * dx + dy * dy);
      num.at(i, j) = q;
      num.at(j, i) = q;
      z += 2.0 * q;
    }
  long double kl = 0.0L;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double p = P.at(i, j);
      if (p <= 0.0) continue;
      const double q = std::max(num.at(i, j) / z, 1e-12);
      kl += p * std::log(p / q);
    }
  return static_cast<double>(kl);
}

}  // namespace

Projection2D tsne(const Tensor& vectors, const TsneParams& params, Rng& rng, const Tensor* init_y) {
  if (params.iterations < 1) throw std::invalid_argument("tsne: iterations must be >= 1");
  const std::int64_t n = vectors.rows();
  const Tensor P = joint_affinities(vectors, params.perplexity, nullptr);

  Tensor Y({static_cast<int>(n), 2});
  if (init_y != nullptr) {
    if (init_y->rows() != n || init_y->cols() != 2) throw std::invalid_argument("tsne: init_y must be [n,2]");
    Y = *init_y;
  } else {
    for (std::int64_t i = 0; i < n * 2; ++i) Y[i] = rng.normal(0.0, 1e-4);
  }

  // Plain momentum descent: per-coordinate adaptive gains would break the
  // rotation equivariance of the embedding dynamics. The auto step size sits
  // well below the attraction stability bound (~n/16 under 12x exaggeration);
  // larger steps make the trajectory oscillatory and chaotic.
  const double lr =
      params.learning_rate > 0.0 ? params.learning_rate : std::max(static_cast<double>(n) / 150.0, 0.5);
  Tensor inc({static_cast<int>(n), 2});
  Tensor grad({static_cast<int>(n), 2});
  Tensor num({static_cast<int>(n), static_cast<int>(n)});
  Projection2D out;
  out.kl_history.reserve(static_cast<std::size_t>(params.iterations / 50 + 3));

  for (int iter = 0; iter < params.iterations; ++iter) {
    const bool exaggerate = iter < params.exaggeration_iters;
    const double p_scale = exaggerate ? params.exaggeration : 1.0;
    double z = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = i + 1; j < n; ++j) {
        const double dx = Y.at(i, 0) - Y.at(j, 0);
        const double dy = Y.at(i, 1) - Y.at(j, 1);
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        num.at(i, j) = q;
        num.at(j, i) = q;
        z += 2.0 * q;
      }
    grad.zero();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = num.at(i, j);
        const double mult = 4.0 * (p_scale * P.at(i, j) - q / z) * q;
        grad.at(i, 0) += mult * (Y.at(i, 0) - Y.at(j, 0));
        grad.at(i, 1) += mult * (Y.at(i, 1) - Y.at(j, 1));
      }
    const double momentum = iter < params.exaggeration_iters ? params.momentum_start : params.momentum_late;
    for (std::int64_t i = 0; i < n * 2; ++i) {
      inc[i] = momentum * inc[i] - lr * grad[i];
      Y[i] += inc[i];
    }
    double mx = 0.0, my = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      mx += Y.at(i, 0);
      my += Y.at(i, 1);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      Y.at(i, 0) -= mx;
      Y.at(i, 1) -= my;
    }
    if ((iter + 1) % 50 == 0 || iter + 1 == params.exaggeration_iters || iter + 1 == params.iterations)
      out.kl_history.emplace_back(iter + 1, kl_against(P, Y));
    if (!Y.all_finite()) throw std::runtime_error("tsne: diverged at iteration " + std::to_string(iter));
  }

  out.x.resize(static_cast<std::size_t>(n));
  out.y.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    out.x[static_cast<std::size_t>(i)] = Y.at(i, 0);
    out.y[static_cast<std::size_t>(i)] = Y.at(i, 1);
  }
  return out;
}

double silhouette_score(const std::vector<double>& xs, const std::vector<double>& ys,
                        const std::vector<int>& cluster) {
  const std::size_t n = xs.size();
  if (n != ys.size() || n != cluster.size() || n < 3)
    throw std::invalid_argument("silhouette_score: bad inputs");
  std::set<int> ids(cluster.begin(), cluster.end());
  if (ids.size() < 2) throw std::invalid_argument("silhouette_score: need at least two clusters");
  auto dist = [&](std::size_t i, std::size_t j) {
    const double dx = xs[i] - xs[j];
    const double dy = ys[i] - ys[j];
    return std::sqrt(dx * dx + dy * dy);
  };
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> acc;  // cluster -> (sum dist, count)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto& slot = acc[cluster[j]];
      slot.first += dist(i, j);
      slot.second += 1;
    }
    const auto own = acc.find(cluster[i]);
    if (own == acc.end() || own->second.second == 0) continue;  // singleton: contributes 0
    const double a = own->second.first / own->second.second;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [cid, slot] : acc) {
      if (cid == cluster[i]) continue;
      b = std::min(b, slot.first / slot.second);
    }
    total += (b - a) / std::max(a, b);
  }
  return static_cast<double>(total / static_cast<long double>(n));
}

namespace {

std::string hsl_hex(double hue) {
  // Fixed saturation/lightness palette; hue in degrees.
  const double s = 0.65, l = 0.5;
  const double c = (1.0 - std::abs(2.0 * l - 1.0)) * s;
  const double hp = hue / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c;
    g = x;
  } else if (hp < 2) {
    r = x;
    g = c;
  } else if (hp < 3) {
    g = c;
    b = x;
  } else if (hp < 4) {
    g = x;
    b = c;
  } else if (hp < 5) {
    r = x;
    b = c;
  } else {
    r = c;
    b = x;
  }
  const double m = l - c / 2.0;
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(std::lround((r + m) * 255)),
                static_cast<int>(std::lround((g + m) * 255)), static_cast<int>(std::lround((b + m) * 255)));
  return buf;
}

}  // namespace

void export_plot(const Projection2D& projection, const std::string& stem) {
  if (projection.size() == 0) throw std::invalid_argument("export_plot: empty projection");
  const std::size_t n = projection.size();

  // CSV
  {
    std::ofstream csv(stem + ".csv", std::ios::binary);
    if (!csv) throw std::runtime_error("export_plot: cannot open " + stem + ".csv");
    csv << "x,y,type,session_id\n";
    char buf[64];
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", projection.x[i]);
      csv << buf << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", projection.y[i]);
      csv << buf << ',';
      csv << (i < projection.types.size() ? projection.types[i] : "") << ',';
      csv << (i < projection.session_ids.size() ? projection.session_ids[i] : std::to_string(i)) << '\n';
    }
    if (!csv) throw std::runtime_error("export_plot: CSV write failed");
  }

  // SVG
  std::set<std::string> type_set(projection.types.begin(), projection.types.end());
  std::vector<std::string> types(type_set.begin(), type_set.end());
  std::map<std::string, std::string> color;
  for (std::size_t i = 0; i < types.size(); ++i)
    color[types[i]] = hsl_hex(360.0 * static_cast<double>(i) / std::max<std::size_t>(types.size(), 1));

  double xmin = projection.x[0], xmax = xmin, ymin = projection.y[0], ymax = ymin;
  for (std::size_t i = 0; i < n; ++i) {
    xmin = std::min(xmin, projection.x[i]);
    xmax = std::max(xmax, projection.x[i]);
    ymin = std::min(ymin, projection.y[i]);
    ymax = std::max(ymax, projection.y[i]);
  }
  const double w = 800, h = 600, margin = 40;
  const double xspan = std::max(xmax - xmin, 1e-9), yspan = std::max(ymax - ymin, 1e-9);
  auto sx = [&](double v) { return margin + (v - xmin) / xspan * (w - 2 * margin); };
  auto sy = [&](double v) { return h - margin - (v - ymin) / yspan * (h - 2 * margin); };

  std::ofstream svg(stem + ".svg", std::ios::binary);
  if (!svg) throw std::runtime_error("export_plot: cannot open " + stem + ".svg");
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!projection.source_model.empty())
    svg << "<text x=\"" << margin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">"
        << projection.source_model << "</text>\n";
  char buf[256];
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& t = i < projection.types.size() ? projection.types[i] : "";
    const std::string fill = t.empty() ? std::string("#555555") : color[t];
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.75\"/>\n",
                  sx(projection.x[i]), sy(projection.y[i]), fill.c_str());
    svg << buf;
  }
  double ly = 40;
  for (const std::string& t : types) {
    std::snprintf(buf, sizeof(buf),
                  "<g class=\"legend\"><circle cx=\"%.2f\" cy=\"%.2f\" r=\"5\" fill=\"%s\"/>"
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"12\">%s</text></g>\n",
                  w - 150.0, ly, color[t].c_str(), w - 138.0, ly + 4.0, t.c_str());
    svg << buf;
    ly += 18;
  }
  svg << "</svg>\n";
  if (!svg) throw std::runtime_error("export_plot: SVG write failed");
}

}  // namespace prodembed::viz
