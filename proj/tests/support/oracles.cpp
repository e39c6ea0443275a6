#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "genreprobe/random.hpp"

namespace oracle {

double brute_force_macro_f1(const std::vector<std::size_t>& y_true, const std::vector<std::size_t>& y_pred,
                            std::size_t classes) {
  double sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      const bool t = y_true[i] == c;
      const bool p = y_pred[i] == c;
      if (t && p) ++tp;
      if (!t && p) ++fp;
      if (t && !p) ++fn;
    }
    const std::size_t denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return sum / static_cast<double>(classes);
}

std::vector<double> compensated_mean(const std::vector<std::vector<double>>& rows) {
  const std::size_t d = rows.front().size();
  std::vector<double> out(d);
  for (std::size_t k = 0; k < d; ++k) {
    double sum = 0.0, comp = 0.0;
    for (const auto& row : rows) {
      const double v = row[k];
      const double t = sum + v;
      comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
      sum = t;
    }
    out[k] = (sum + comp) / static_cast<double>(rows.size());
  }
  return out;
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

std::vector<std::size_t> kmeans(const Eigen::MatrixXd& X, std::size_t k, std::uint64_t seed, std::size_t restarts) {
  std::mt19937_64 rng(seed);
  const auto n = X.rows();
  std::vector<std::size_t> best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), X.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = X.row(pick(rng));
    Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
      for (Eigen::Index i = 0; i < n; ++i)
        d2(i) = std::min(d2(i), (X.row(i) - centers.row(static_cast<Eigen::Index>(c) - 1)).squaredNorm());
      std::discrete_distribution<Eigen::Index> weighted(d2.data(), d2.data() + n);
      centers.row(static_cast<Eigen::Index>(c)) = X.row(weighted(rng));
    }
    std::vector<std::size_t> assign(static_cast<std::size_t>(n), 0);
    double inertia = 0.0;
    for (int iter = 0; iter < 300; ++iter) {
      bool changed = false;
      inertia = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t arg = 0;
        double bestd = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
          const double dist = (X.row(i) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
          if (dist < bestd) {
            bestd = dist;
            arg = c;
          }
        }
        inertia += bestd;
        if (assign[static_cast<std::size_t>(i)] != arg) changed = true;
        assign[static_cast<std::size_t>(i)] = arg;
      }
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), X.cols());
      std::vector<std::size_t> counts(k, 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(static_cast<Eigen::Index>(assign[static_cast<std::size_t>(i)])) += X.row(i);
        ++counts[assign[static_cast<std::size_t>(i)]];
      }
      for (std::size_t c = 0; c < k; ++c)
        if (counts[c] > 0) centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / counts[c];
      if (!changed && iter > 0) break;
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = assign;
    }
  }
  return best;
}

double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1;
    rows[a[i]] += 1;
    cols[b[i]] += 1;
  }
  auto choose2 = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sum_rows = 0, sum_cols = 0;
  for (const auto& [key, v] : table) index += choose2(v);
  for (const auto& [key, v] : rows) sum_rows += choose2(v);
  for (const auto& [key, v] : cols) sum_cols += choose2(v);
  const double expected = sum_rows * sum_cols / choose2(static_cast<double>(a.size()));
  const double max_index = (sum_rows + sum_cols) / 2;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

Blobs gaussian_blobs(std::size_t classes, std::size_t dim, std::size_t per_class, double separation,
                     std::uint64_t seed) {
  genreprobe::Rng rng(seed);
  Blobs out;
  out.X.resize(static_cast<Eigen::Index>(classes * per_class), static_cast<Eigen::Index>(dim));
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto row = static_cast<Eigen::Index>(c * per_class + i);
      for (std::size_t k = 0; k < dim; ++k) out.X(row, static_cast<Eigen::Index>(k)) = rng.normal();
      out.X(row, static_cast<Eigen::Index>(c)) += separation;
      out.y.push_back(c);
    }
  }
  return out;
}

void ridge_gradient_descent(const Eigen::MatrixXd& X, const Eigen::VectorXd& t, double l2, Eigen::VectorXd& w,
                            double& b, std::size_t iterations) {
  // Step from the Lipschitz bound of the full quadratic in (w, b).
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A << X, Eigen::VectorXd::Ones(X.rows());
  const double lipschitz = 2.0 * (A.transpose() * A).eigenvalues().real().maxCoeff() + 2.0 * l2;
  const double step = 1.0 / lipschitz;
  w = Eigen::VectorXd::Zero(X.cols());
  b = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    const Eigen::VectorXd r = X * w + Eigen::VectorXd::Constant(X.rows(), b) - t;
    const Eigen::VectorXd gw = 2.0 * X.transpose() * r + 2.0 * l2 * w;
    const double gb = 2.0 * r.sum();
    w -= step * gw;
    b -= step * gb;
  }
}

std::string random_text(std::uint64_t seed, std::size_t words) {
  static const std::vector<std::string> vocabulary = {
      "the",    "river",  "code",     "story",  "explain", "first",   "then",    "speech", "people", "data",
      "light",  "quiet",  "machine",  "step",   "because", "however", "friends", "model",  "city",   "winter",
      "garden", "return", "function", "gather", "history", "future",  "listen",  "simple", "bright", "open"};
  genreprobe::Rng rng(seed);
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i > 0) out += rng.uniform_index(9) == 0 ? ", " : " ";
    out += vocabulary[rng.uniform_index(vocabulary.size())];
  }
  out += ".";
  return out;
}

genreprobe::Dataset labelled_dataset(const std::vector<std::string>& labels, std::size_t per_class,
                                     std::uint64_t seed) {
  genreprobe::Dataset out;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      genreprobe::Chunk chunk;
      chunk.id = labels[c] + "-" + std::to_string(i);
      chunk.text = random_text(seed * 1000003 + c * 1009 + i, 12 + (i % 7));
      chunk.category = labels[c];
      chunk.dataset = "synthetic";
      out.push_back(std::move(chunk));
    }
  }
  return out;
}

genreprobe::ActivationSet make_activation_set(const std::vector<std::string>& ids, std::size_t layers,
                                              std::size_t dim, genreprobe::Condition condition,
                                              const std::function<float(std::size_t, std::size_t, std::size_t,
                                                                        std::size_t)>& value) {
  genreprobe::ActivationHeader header;
  header.model_id = "fixture";
  header.condition = condition;
  header.seed = 0;
  header.layer_count = layers;
  header.hidden_dim = dim;
  header.chunk_ids = ids;
  std::vector<float> values;
  values.reserve(ids.size() * layers * genreprobe::kStreamCount * dim);
  for (std::size_t c = 0; c < ids.size(); ++c)
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t s = 0; s < genreprobe::kStreamCount; ++s)
        for (std::size_t k = 0; k < dim; ++k) values.push_back(value(c, l, s, k));
  return genreprobe::ActivationSet(header, std::move(values));
}

}  // namespace oracle
