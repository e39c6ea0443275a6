#include "genreprobe/probes.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <set>

#include "genreprobe/error.hpp"

namespace genreprobe {

std::string_view to_string(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::logreg: return "logreg";
    case ProbeKind::ridge: return "ridge";
    case ProbeKind::linear_svm: return "linear_svm";
    case ProbeKind::knn: return "knn";
  }
  return "unknown";
}

ProbeKind parse_probe_kind(std::string_view name) {
  for (ProbeKind kind : kProbeKinds) {
    if (to_string(kind) == name) return kind;
  }
  throw InvalidArgument("unknown probe kind '" + std::string(name) + "'");
}

Scaler fit_scaler(const Eigen::MatrixXd& X) {
  if (X.rows() < 1) throw InvalidArgument("scaler needs at least one row");
  Scaler scaler;
  scaler.means = X.colwise().mean().transpose();
  scaler.scales.resize(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double var = (X.col(c).array() - scaler.means(c)).square().mean();
    const double sd = std::sqrt(var);
    // Spread at rounding level of the mean counts as constant.
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(scaler.means(c)));
    scaler.scales(c) = sd > floor ? sd : 1.0;
  }
  return scaler;
}

Eigen::MatrixXd apply_scaler(const Scaler& scaler, const Eigen::MatrixXd& X) {
  if (X.cols() != scaler.means.size()) {
    throw InvalidArgument("scaler fitted on " + std::to_string(scaler.means.size()) + " features, got " +
                          std::to_string(X.cols()));
  }
  return (X.rowwise() - scaler.means.transpose()).array().rowwise() / scaler.scales.transpose().array();
}

std::size_t argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& row) {
  std::size_t best = 0;
  for (Eigen::Index c = 1; c < row.size(); ++c) {
    if (row(c) > row(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(c);
  }
  return best;
}

double logreg_objective(const Eigen::MatrixXd& X, std::span<const std::size_t> y, const Eigen::MatrixXd& W,
                        const Eigen::VectorXd& b, double l2_strength, Eigen::MatrixXd* grad_W,
                        Eigen::VectorXd* grad_b) {
  const Eigen::Index n = X.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd logits = X * W.transpose();
  logits.rowwise() += b.transpose();

  double loss = 0.0;
  Eigen::MatrixXd residual(n, W.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double peak = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = (logits.row(i).array() - peak).exp().matrix();
    const double total = shifted.sum();
    const auto yi = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
    loss += peak + std::log(total) - logits(i, yi);
    residual.row(i) = shifted / total;
    residual(i, yi) -= 1.0;
  }
  loss = loss * inv_n + 0.5 * l2_strength * inv_n * W.squaredNorm();
  if (grad_W != nullptr) *grad_W = inv_n * (residual.transpose() * X) + (l2_strength * inv_n) * W;
  if (grad_b != nullptr) *grad_b = inv_n * residual.colwise().sum().transpose();
  return loss;
}

double ridge_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets, const Eigen::VectorXd& w,
                       double b, double l2_strength) {
  const Eigen::VectorXd r = targets - (X * w).array().matrix() - Eigen::VectorXd::Constant(X.rows(), b);
  return r.squaredNorm() + l2_strength * w.squaredNorm();
}

double hinge_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets, const Eigen::VectorXd& w,
                       double b, double l2_strength) {
  const double inv_n = 1.0 / static_cast<double>(X.rows());
  const Eigen::VectorXd margins = targets.array() * ((X * w).array() + b);
  return inv_n * (1.0 - margins.array()).max(0.0).sum() + 0.5 * l2_strength * inv_n * w.squaredNorm();
}

namespace {

// Flattened [W row-major | b] parameter vector for the quasi-Newton solver.
Eigen::VectorXd pack(const Eigen::MatrixXd& W, const Eigen::VectorXd& b) {
  Eigen::VectorXd theta(W.size() + b.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < W.rows(); ++r)
    for (Eigen::Index c = 0; c < W.cols(); ++c) theta(k++) = W(r, c);
  theta.tail(b.size()) = b;
  return theta;
}

void unpack(const Eigen::VectorXd& theta, Eigen::MatrixXd& W, Eigen::VectorXd& b) {
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < W.rows(); ++r)
    for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = theta(k++);
  b = theta.tail(b.size());
}

// L-BFGS with Armijo backtracking. Only accepted steps change the iterate, so
// the objective sequence is non-increasing.
void fit_logreg(const Eigen::MatrixXd& X, std::span<const std::size_t> y, ProbeModel& model) {
  const auto C = static_cast<Eigen::Index>(model.class_count());
  const Eigen::Index d = X.cols();
  const auto& hp = model.hyperparams;
  constexpr std::size_t kMemory = 10;
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(C, d), gW(C, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(C), gb(C);
  auto evaluate = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    unpack(theta, W, b);
    const double f = logreg_objective(X, y, W, b, hp.l2_strength, &gW, &gb);
    grad = pack(gW, gb);
    return f;
  };

  Eigen::VectorXd theta = pack(W, b), grad;
  double f = evaluate(theta, grad);
  TrainReport& report = model.report;
  report.loss_history = {f};

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;
  std::size_t iter = 0;
  while (iter < hp.max_iter) {
    if (grad.norm() < hp.tol) {
      report.converged = true;
      break;
    }
    // Two-loop recursion.
    Eigen::VectorXd q = grad;
    std::vector<double> alphas(memory.size());
    for (std::size_t m = memory.size(); m-- > 0;) {
      const auto& [s, yv] = memory[m];
      alphas[m] = s.dot(q) / yv.dot(s);
      q -= alphas[m] * yv;
    }
    if (!memory.empty()) {
      const auto& [s, yv] = memory.back();
      q *= s.dot(yv) / yv.squaredNorm();
    }
    for (std::size_t m = 0; m < memory.size(); ++m) {
      const auto& [s, yv] = memory[m];
      const double beta = yv.dot(q) / yv.dot(s);
      q += (alphas[m] - beta) * s;
    }
    Eigen::VectorXd direction = -q;
    double slope = grad.dot(direction);
    if (!(slope < 0.0)) {
      memory.clear();
      direction = -grad;
      slope = -grad.squaredNorm();
    }

    double step = memory.empty() ? std::min(1.0, 1.0 / grad.norm()) : 1.0;
    Eigen::VectorXd candidate, candidate_grad;
    double candidate_f = f;
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      candidate = theta + step * direction;
      candidate_f = evaluate(candidate, candidate_grad);
      if (std::isfinite(candidate_f) && candidate_f <= f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++iter;
    if (!accepted) {
      if (memory.empty()) break;  // Steepest descent cannot make progress either.
      memory.clear();
      continue;
    }
    Eigen::VectorXd s = candidate - theta;
    Eigen::VectorXd yv = candidate_grad - grad;
    if (s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
      memory.emplace_back(std::move(s), std::move(yv));
      if (memory.size() > kMemory) memory.pop_front();
    }
    theta = std::move(candidate);
    grad = std::move(candidate_grad);
    f = candidate_f;
    report.loss_history.push_back(f);
  }
  if (!report.converged && grad.norm() < hp.tol) report.converged = true;
  report.iterations = iter;
  report.final_gradient_norm = grad.norm();
  unpack(theta, W, b);
  model.weights = W;
  model.bias = b;
}

Eigen::MatrixXd one_vs_all_targets(std::span<const std::size_t> y, std::size_t classes) {
  Eigen::MatrixXd T = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(y.size()),
                                                static_cast<Eigen::Index>(classes), -1.0);
  for (std::size_t i = 0; i < y.size(); ++i) T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y[i])) = 1.0;
  return T;
}

void fit_ridge(const Eigen::MatrixXd& X, std::span<const std::size_t> y, ProbeModel& model) {
  const Eigen::MatrixXd T = one_vs_all_targets(y, model.class_count());
  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const Eigen::RowVectorXd t_mean = T.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::MatrixXd Tc = T.rowwise() - t_mean;
  Eigen::MatrixXd gram = Xc.transpose() * Xc;
  gram.diagonal().array() += model.hyperparams.l2_strength;
  const Eigen::MatrixXd coef = gram.ldlt().solve(Xc.transpose() * Tc);  // d x C
  model.weights = coef.transpose();
  model.bias = (t_mean - x_mean * coef).transpose();
  model.report.converged = true;
}

// Full-batch subgradient descent with step eta0/sqrt(t); the best iterate
// seen by objective value is kept.
void fit_linear_svm(const Eigen::MatrixXd& X, std::span<const std::size_t> y, ProbeModel& model) {
  const auto& hp = model.hyperparams;
  const Eigen::MatrixXd T = one_vs_all_targets(y, model.class_count());
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double mean_row_norm = X.rowwise().norm().mean();
  const double eta0 = 1.0 / std::max(1.0, mean_row_norm);
  const std::size_t iterations = std::min(hp.svm_iterations, hp.max_iter);

  model.weights.resize(T.cols(), d);
  model.bias.resize(T.cols());
  for (Eigen::Index c = 0; c < T.cols(); ++c) {
    const Eigen::VectorXd t = T.col(c);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d), best_w = w;
    double b = 0.0, best_b = 0.0;
    double best = hinge_objective(X, t, w, b, hp.l2_strength);
    for (std::size_t it = 1; it <= iterations; ++it) {
      const Eigen::VectorXd margins = t.array() * ((X * w).array() + b);
      Eigen::VectorXd coeff = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (margins(i) < 1.0) coeff(i) = t(i);
      }
      const Eigen::VectorXd g_w = hp.l2_strength * inv_n * w - inv_n * (X.transpose() * coeff);
      const double g_b = -inv_n * coeff.sum();
      const double eta = eta0 / std::sqrt(static_cast<double>(it));
      w -= eta * g_w;
      b -= eta * g_b;
      const double value = hinge_objective(X, t, w, b, hp.l2_strength);
      if (value < best) {
        best = value;
        best_w = w;
        best_b = b;
      }
    }
    model.weights.row(c) = best_w.transpose();
    model.bias(c) = best_b;
  }
  model.report.iterations = iterations;
}

void check_training_inputs(const Eigen::MatrixXd& X, std::span<const std::size_t> y, const LabelVocabulary& labels) {
  if (labels.size() < 2) throw InvalidArgument("a probe needs at least two classes");
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    throw InvalidArgument("X has " + std::to_string(X.rows()) + " rows but y has " + std::to_string(y.size()));
  }
  if (y.size() < labels.size()) throw InvalidArgument("fewer training rows than classes");
  if (X.cols() < 1) throw InvalidArgument("X has no features");
  if (!X.allFinite()) throw InvalidArgument("training matrix contains non-finite values");
  std::set<std::size_t> seen;
  for (std::size_t label : y) {
    if (label >= labels.size()) throw InvalidArgument("class index " + std::to_string(label) + " out of range");
    seen.insert(label);
  }
  if (seen.size() < 2) throw InvalidArgument("training labels contain a single class");
}

}  // namespace

ProbeModel train_probe(ProbeKind kind, const Eigen::MatrixXd& X, std::span<const std::size_t> y,
                       const LabelVocabulary& labels, const ProbeHyperparams& hyperparams, std::uint64_t /*seed*/) {
  check_training_inputs(X, y, labels);
  ProbeModel model;
  model.kind = kind;
  model.labels = labels;
  model.hyperparams = hyperparams;
  model.scaler = fit_scaler(X);
  const Eigen::MatrixXd scaled = apply_scaler(model.scaler, X);
  switch (kind) {
    case ProbeKind::logreg: fit_logreg(scaled, y, model); break;
    case ProbeKind::ridge: fit_ridge(scaled, y, model); break;
    case ProbeKind::linear_svm: fit_linear_svm(scaled, y, model); break;
    case ProbeKind::knn:
      if (hyperparams.k == 0) throw InvalidArgument("knn needs k >= 1");
      model.train_points = scaled;
      model.train_labels.assign(y.begin(), y.end());
      model.report.converged = true;
      break;
  }
  return model;
}

Prediction predict(const ProbeModel& model, const Eigen::MatrixXd& X) {
  if (static_cast<std::size_t>(X.cols()) != model.feature_count()) {
    throw InvalidArgument("model expects " + std::to_string(model.feature_count()) + " features, got " +
                          std::to_string(X.cols()));
  }
  const Eigen::MatrixXd scaled = apply_scaler(model.scaler, X);
  const auto C = static_cast<Eigen::Index>(model.class_count());
  Prediction out;
  out.scores.resize(X.rows(), C);

  if (model.kind == ProbeKind::knn) {
    const Eigen::Index n = model.train_points.rows();
    const auto k = static_cast<Eigen::Index>(std::min<std::size_t>(model.hyperparams.k, static_cast<std::size_t>(n)));
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
      for (Eigen::Index i = 0; i < n; ++i) {
        dist[static_cast<std::size_t>(i)] = {(model.train_points.row(i) - scaled.row(r)).squaredNorm(), i};
      }
      std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
      out.scores.row(r).setZero();
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto label = model.train_labels[static_cast<std::size_t>(dist[static_cast<std::size_t>(j)].second)];
        out.scores(r, static_cast<Eigen::Index>(label)) += 1.0 / static_cast<double>(k);
      }
    }
  } else {
    out.scores = scaled * model.weights.transpose();
    out.scores.rowwise() += model.bias.transpose();
    if (model.kind == ProbeKind::logreg) {
      // Decide on the logits; the softmax can round distinct logits together.
      out.labels.resize(static_cast<std::size_t>(X.rows()));
      for (Eigen::Index r = 0; r < X.rows(); ++r) {
        out.labels[static_cast<std::size_t>(r)] = argmax_lowest(out.scores.row(r).transpose());
      }
      for (Eigen::Index r = 0; r < out.scores.rows(); ++r) {
        const double peak = out.scores.row(r).maxCoeff();
        out.scores.row(r) = (out.scores.row(r).array() - peak).exp().matrix();
        out.scores.row(r) /= out.scores.row(r).sum();
      }
    }
  }
  if (model.kind == ProbeKind::logreg) return out;
  out.labels.resize(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    out.labels[static_cast<std::size_t>(r)] = argmax_lowest(out.scores.row(r).transpose());
  }
  return out;
}

}  // namespace genreprobe
