#include "genreprobe/phate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "genreprobe/error.hpp"
#include "svg.hpp"

namespace genreprobe {

namespace {

constexpr double kBandwidthFloor = 1e-12;

bool is_symmetric(const Eigen::MatrixXd& M, double tol) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < M.cols(); ++j) {
      if (std::abs(M(i, j) - M(j, i)) > tol * std::max({1.0, std::abs(M(i, j)), std::abs(M(j, i))})) return false;
    }
  }
  return true;
}

}  // namespace

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (X.row(i) - X.row(j)).norm();
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

Eigen::VectorXd knn_bandwidths(const Eigen::MatrixXd& distances, std::size_t k) {
  const Eigen::Index n = distances.rows();
  if (k == 0 || static_cast<Eigen::Index>(k) >= n) throw InvalidArgument("k must lie in [1, n)");
  Eigen::VectorXd eps(n);
  std::vector<double> row(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) row[m++] = distances(i, j);
    }
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    eps(i) = std::max(row[k - 1], kBandwidthFloor);
  }
  return eps;
}

Eigen::MatrixXd alpha_decay_kernel(const Eigen::MatrixXd& distances, std::size_t k, double alpha) {
  const Eigen::VectorXd eps = knn_bandwidths(distances, k);
  const Eigen::Index n = distances.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double d = distances(i, j);
      const double v = 0.5 * std::exp(-std::pow(d / eps(i), alpha)) + 0.5 * std::exp(-std::pow(d / eps(j), alpha));
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

DiffusionOperator diffusion_operator(const Eigen::MatrixXd& X, std::size_t k, double alpha) {
  DiffusionOperator op;
  op.k = k;
  op.alpha = alpha;
  const Eigen::MatrixXd K = alpha_decay_kernel(pairwise_distances(X), k, alpha);
  op.degrees = K.rowwise().sum();
  op.P = K.array().colwise() / op.degrees.array();
  return op;
}

Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& P, std::size_t t) {
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(P.rows(), P.cols());
  Eigen::MatrixXd base = P;
  bool first = true;
  while (t > 0) {
    if (t & 1U) {
      if (first) {
        result = base;
        first = false;
      } else {
        result = result * base;
      }
    }
    t >>= 1U;
    if (t > 0) base = base * base;
  }
  return result;
}

Eigen::VectorXd diffusion_spectrum(const DiffusionOperator& op) {
  const Eigen::MatrixXd& P = op.P;
  if (op.degrees.size() == P.rows()) {
    const Eigen::VectorXd s = op.degrees.cwiseSqrt();
    const Eigen::MatrixXd A = s.asDiagonal() * P * s.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd sym = 0.5 * (A + A.transpose());
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs();
  }
  if (is_symmetric(P, 1e-12)) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs();
  }
  return Eigen::EigenSolver<Eigen::MatrixXd>(P, false).eigenvalues().cwiseAbs();
}

std::vector<double> von_neumann_entropy(const DiffusionOperator& op, std::size_t t_max) {
  if (t_max == 0) throw InvalidArgument("t_max must be positive");
  const Eigen::VectorXd spectrum = diffusion_spectrum(op);
  std::vector<double> entropy(t_max);
  for (std::size_t t = 1; t <= t_max; ++t) {
    const Eigen::ArrayXd powered = spectrum.array().pow(static_cast<double>(t));
    const double total = powered.sum();
    double h = 0.0;
    for (Eigen::Index i = 0; i < powered.size(); ++i) {
      const double eta = powered(i) / total;
      if (eta > 0.0) h -= eta * std::log(eta);
    }
    entropy[t - 1] = h;
  }
  return entropy;
}

std::size_t select_t(const DiffusionOperator& op, std::size_t t_max) {
  const std::vector<double> h = von_neumann_entropy(op, t_max);
  if (t_max < 3) return 1;
  const double x0 = 1.0, y0 = h.front();
  const double x1 = static_cast<double>(t_max), y1 = h.back();
  std::size_t best_t = 1;
  double best = 0.0;
  for (std::size_t t = 1; t <= t_max; ++t) {
    // Unnormalized distance; the chord length is a common factor.
    const double dist = std::abs((y1 - y0) * (static_cast<double>(t) - x0) - (x1 - x0) * (h[t - 1] - y0));
    if (dist > best) {
      best = dist;
      best_t = t;
    }
  }
  return best_t;
}

double raw_stress(const Eigen::MatrixXd& D, const Eigen::MatrixXd& coords) {
  double stress = 0.0;
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < D.cols(); ++j) {
      const double r = D(i, j) - (coords.row(i) - coords.row(j)).norm();
      stress += r * r;
    }
  }
  return stress;
}

Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& D, std::size_t dims) {
  const Eigen::Index n = D.rows();
  const auto p = static_cast<Eigen::Index>(dims);
  Eigen::MatrixXd B = D.array().square().matrix();
  const Eigen::VectorXd row_mean = B.rowwise().mean();
  const Eigen::RowVectorXd col_mean = B.colwise().mean();
  const double grand = B.mean();
  B = -0.5 * ((B.colwise() - row_mean).rowwise() - col_mean).array() - 0.5 * grand;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (B + B.transpose()));
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index a = 0; a < std::min(p, n); ++a) {
    const Eigen::Index col = n - 1 - a;  // eigenvalues ascend
    const double lambda = std::max(solver.eigenvalues()(col), 0.0);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    coords.col(a) = v * std::sqrt(lambda);
  }
  return coords;
}

SmacofResult smacof(const Eigen::MatrixXd& D, const Eigen::MatrixXd& init, std::size_t max_iterations, double tol) {
  const Eigen::Index n = D.rows();
  if (D.cols() != n) throw InvalidArgument("SMACOF needs a square dissimilarity matrix");
  if (init.rows() != n) throw InvalidArgument("SMACOF initial configuration has the wrong row count");
  if (!is_symmetric(D, 1e-9)) throw InvalidArgument("SMACOF dissimilarities must be symmetric");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (D(i, i) != 0.0) throw InvalidArgument("SMACOF dissimilarities must have a zero diagonal");
  }
  if ((D.array() < 0.0).any()) throw InvalidArgument("SMACOF dissimilarities must be non-negative");

  SmacofResult result;
  result.coords = init;
  double stress = raw_stress(D, init);
  result.stress_history.push_back(stress);
  if (stress == 0.0 || n < 2) return result;

  Eigen::MatrixXd B(n, n);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    const Eigen::MatrixXd& X = result.coords;
    B.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double dist = (X.row(i) - X.row(j)).norm();
        const double b = dist > 0.0 ? -D(i, j) / dist : 0.0;
        B(i, j) = b;
        B(j, i) = b;
      }
    }
    B.diagonal() = -B.rowwise().sum();
    Eigen::MatrixXd next = (B * X) / static_cast<double>(n);
    const double next_stress = raw_stress(D, next);
    result.coords = std::move(next);
    result.stress_history.push_back(next_stress);
    result.iterations = it + 1;
    const double previous = stress;
    stress = next_stress;
    if (previous <= 0.0 || (previous - stress) / previous < tol) break;
  }
  return result;
}

PhateEmbedding phate_embed(const Eigen::MatrixXd& X, const PhateParams& params, std::vector<std::string> sample_ids) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (n < params.k + 2) {
    throw InvalidArgument("PHATE needs at least k + 2 = " + std::to_string(params.k + 2) + " samples, got " +
                          std::to_string(n));
  }
  if (!X.allFinite()) throw InvalidArgument("PHATE input contains non-finite values");
  if (!sample_ids.empty() && sample_ids.size() != n) throw InvalidArgument("sample id count differs from row count");
  if (sample_ids.empty()) {
    for (std::size_t i = 0; i < n; ++i) sample_ids.push_back(std::to_string(i));
  }

  PhateEmbedding out;
  out.params = params;
  out.sample_ids = std::move(sample_ids);

  const DiffusionOperator op = diffusion_operator(X, params.k, params.alpha);
  const std::size_t t = params.t.value_or(0) > 0 ? *params.t : select_t(op, params.t_max);
  out.params.t = t;

  const Eigen::MatrixXd diffused = matrix_power(op.P, t);
  const Eigen::MatrixXd potential = -(diffused.array().max(0.0) + params.potential_floor).log().matrix();
  const Eigen::MatrixXd potential_distances = pairwise_distances(potential);

  const Eigen::MatrixXd init = classical_mds(potential_distances, 2);
  SmacofResult refined = smacof(potential_distances, init, params.mds_iterations, params.mds_tol);
  out.coords = std::move(refined.coords);
  out.stress_history = std::move(refined.stress_history);
  return out;
}

std::string embedding_csv(const PhateEmbedding& embedding, std::span<const std::string> categories) {
  if (!categories.empty() && categories.size() != embedding.sample_ids.size()) {
    throw InvalidArgument("category count differs from embedding row count");
  }
  std::string out = "id,x,y,category\n";
  for (std::size_t i = 0; i < embedding.sample_ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out += fmt::format("{},{:.6f},{:.6f},{}\n", embedding.sample_ids[i], embedding.coords(r, 0),
                       embedding.coords(r, 1), categories.empty() ? "" : categories[i]);
  }
  return out;
}

std::string embedding_svg(const PhateEmbedding& embedding, std::span<const std::string> categories,
                          const std::string& title) {
  constexpr double kWidth = 640, kHeight = 520, kMargin = 40, kLegend = 150;
  detail::SvgDocument svg(kWidth + kLegend, kHeight);
  svg.rect(0, 0, kWidth + kLegend, kHeight, "white");
  svg.text(kWidth / 2, 24, title, 16, "middle");

  const Eigen::MatrixXd& c = embedding.coords;
  const double xmin = c.col(0).minCoeff(), xmax = c.col(0).maxCoeff();
  const double ymin = c.col(1).minCoeff(), ymax = c.col(1).maxCoeff();
  const double xspan = xmax > xmin ? xmax - xmin : 1.0;
  const double yspan = ymax > ymin ? ymax - ymin : 1.0;
  svg.rect(kMargin, kMargin, kWidth - 2 * kMargin, kHeight - 2 * kMargin, "none", "#888888");

  std::map<std::string, std::size_t> color_of;
  for (const auto& category : categories) color_of.emplace(category, color_of.size());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    const double px = kMargin + (c(i, 0) - xmin) / xspan * (kWidth - 2 * kMargin);
    const double py = kHeight - kMargin - (c(i, 1) - ymin) / yspan * (kHeight - 2 * kMargin);
    const std::size_t color = categories.empty() ? 0 : color_of.at(categories[static_cast<std::size_t>(i)]);
    svg.circle(px, py, 3.0, detail::palette_color(color));
  }
  double ly = kMargin + 10;
  for (const auto& [category, color] : color_of) {
    svg.circle(kWidth + 10, ly - 4, 5.0, detail::palette_color(color));
    svg.text(kWidth + 22, ly, category, 12);
    ly += 20;
  }
  return svg.finish();
}

}  // namespace genreprobe
