#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "genreprobe/probes.hpp"
#include "genreprobe/random.hpp"
#include "oracles.hpp"

namespace gp = genreprobe;

namespace {

const gp::LabelVocabulary kAB({"A", "B"});

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  gp::Rng rng(seed);
  Eigen::MatrixXd X(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) X(r, c) = rng.normal();
  return X;
}

gp::LabelVocabulary vocab(std::size_t classes) {
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < classes; ++c) labels.push_back("class" + std::to_string(c));
  return gp::LabelVocabulary(labels);
}

}  // namespace

TEST(Scaler, MeansAndScales) {
  Eigen::MatrixXd X(2, 2);
  X << 0, 0, 2, 2;
  const auto s = gp::fit_scaler(X);
  EXPECT_EQ(s.means, Eigen::Vector2d(1, 1));
  EXPECT_EQ(s.scales, Eigen::Vector2d(1, 1));
}

TEST(Scaler, ConstantColumnGetsUnitScale) {
  Eigen::MatrixXd X(3, 2);
  X << 5, 1, 5, 2, 5, 3;
  const auto s = gp::fit_scaler(X);
  EXPECT_EQ(s.scales(0), 1.0);
  const auto Z = gp::apply_scaler(s, X);
  EXPECT_EQ(Z.col(0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Scaler, StandardizesTrainingColumns) {
  Eigen::MatrixXd X = random_matrix(200, 6, 3);
  X.col(2) = X.col(2) * 1e4 + Eigen::VectorXd::Constant(200, -3e5);
  const auto Z = gp::apply_scaler(gp::fit_scaler(X), X);
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    const double mean = Z.col(c).mean();
    const double var = (Z.col(c).array() - mean).square().mean();
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(Scaler, ColumnMismatchThrows) {
  const auto s = gp::fit_scaler(random_matrix(5, 3, 1));
  EXPECT_THROW(gp::apply_scaler(s, random_matrix(5, 4, 1)), gp::InvalidArgument);
}

TEST(Logreg, OneDimensionalSeparation) {
  Eigen::MatrixXd X(2, 1);
  X << -1, 1;
  const std::vector<std::size_t> y = {0, 1};
  const auto model = gp::train_probe(gp::ProbeKind::logreg, X, y, kAB);
  EXPECT_EQ(gp::predict(model, X).labels, y);
  EXPECT_EQ(model.labels.label(gp::predict(model, X).labels[1]), "B");
}

TEST(Logreg, ZeroWeightsPredictFirstClass) {
  gp::ProbeModel model;
  model.kind = gp::ProbeKind::logreg;
  model.labels = vocab(3);
  model.scaler = gp::fit_scaler(random_matrix(4, 2, 1));
  model.weights = Eigen::MatrixXd::Zero(3, 2);
  model.bias = Eigen::VectorXd::Zero(3);
  for (auto label : gp::predict(model, random_matrix(10, 2, 2)).labels) EXPECT_EQ(label, 0u);
}

TEST(Logreg, ArgmaxInvariantToPositiveScaling) {
  const auto X = random_matrix(60, 4, 7);
  std::vector<std::size_t> y;
  for (Eigen::Index i = 0; i < X.rows(); ++i) y.push_back(X(i, 0) > 0 ? (X(i, 1) > 0 ? 2 : 1) : 0);
  auto model = gp::train_probe(gp::ProbeKind::logreg, X, y, vocab(3));
  const auto before = gp::predict(model, X).labels;
  model.weights *= 3.5;
  model.bias *= 3.5;
  EXPECT_EQ(gp::predict(model, X).labels, before);
}

TEST(Logreg, GradientMatchesCentralDifferences) {
  const auto X = random_matrix(20, 8, 21);
  gp::Rng rng(22);
  std::vector<std::size_t> y;
  for (int i = 0; i < 20; ++i) y.push_back(rng.uniform_index(3));
  const Eigen::MatrixXd W = random_matrix(3, 8, 23) * 0.5;
  const Eigen::VectorXd b = random_matrix(3, 1, 24).col(0);
  Eigen::MatrixXd gW;
  Eigen::VectorXd gb;
  gp::logreg_objective(X, y, W, b, 1.0, &gW, &gb);

  Eigen::VectorXd theta(3 * 8 + 3);
  theta << Eigen::Map<const Eigen::VectorXd>(W.data(), 24), b;
  Eigen::VectorXd analytic(27);
  analytic << Eigen::Map<const Eigen::VectorXd>(gW.data(), 24), gb;
  const auto numeric = oracle::central_difference(
      [&](const Eigen::VectorXd& t) {
        const Eigen::MatrixXd Wt = Eigen::Map<const Eigen::MatrixXd>(t.data(), 3, 8);
        return gp::logreg_objective(X, y, Wt, t.tail(3), 1.0);
      },
      theta, 1e-5);
  EXPECT_LT((analytic - numeric).norm() / std::max(numeric.norm(), 1e-12), 1e-5);
}

TEST(Logreg, LossHistoryNonIncreasing) {
  const auto X = random_matrix(80, 5, 31);
  std::vector<std::size_t> y;
  for (Eigen::Index i = 0; i < X.rows(); ++i) y.push_back(X(i, 0) + 0.3 * X(i, 1) > 0 ? 1 : 0);
  const auto model = gp::train_probe(gp::ProbeKind::logreg, X, y, kAB);
  ASSERT_GE(model.report.loss_history.size(), 2u);
  for (std::size_t i = 1; i < model.report.loss_history.size(); ++i) {
    EXPECT_LE(model.report.loss_history[i], model.report.loss_history[i - 1]);
  }
  EXPECT_TRUE(model.report.converged);
  EXPECT_LT(model.report.final_gradient_norm, 1e-4);
}

TEST(Probes, TrainingIsBitReproducible) {
  const auto X = random_matrix(50, 6, 41);
  std::vector<std::size_t> y;
  for (Eigen::Index i = 0; i < X.rows(); ++i) y.push_back(static_cast<std::size_t>(i % 3));
  for (auto kind : gp::kProbeKinds) {
    const auto a = gp::train_probe(kind, X, y, vocab(3));
    const auto b = gp::train_probe(kind, X, y, vocab(3));
    EXPECT_EQ(gp::encode_probe_model(a), gp::encode_probe_model(b)) << gp::to_string(kind);
  }
}

TEST(Ridge, ClosedFormMatchesGradientDescent) {
  const auto X = random_matrix(30, 5, 51);
  std::vector<std::size_t> y;
  for (Eigen::Index i = 0; i < X.rows(); ++i) y.push_back(X(i, 2) > 0.2 ? 1 : 0);
  gp::ProbeHyperparams hp;
  hp.l2_strength = 0.7;
  const auto model = gp::train_probe(gp::ProbeKind::ridge, X, y, kAB, hp);
  const Eigen::MatrixXd Z = gp::apply_scaler(gp::fit_scaler(X), X);
  for (std::size_t c = 0; c < 2; ++c) {
    Eigen::VectorXd t(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) t(i) = y[static_cast<std::size_t>(i)] == c ? 1.0 : -1.0;
    Eigen::VectorXd w;
    double b = 0;
    oracle::ridge_gradient_descent(Z, t, 0.7, w, b, 200000);
    EXPECT_LT((model.weights.row(static_cast<Eigen::Index>(c)).transpose() - w).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(model.bias(static_cast<Eigen::Index>(c)), b, 1e-6);
  }
}

TEST(Knn, OneNeighbourMemorizesTraining) {
  const auto X = random_matrix(40, 3, 61);
  std::vector<std::size_t> y;
  for (Eigen::Index i = 0; i < X.rows(); ++i) y.push_back(static_cast<std::size_t>(i % 4));
  gp::ProbeHyperparams hp;
  hp.k = 1;
  const auto model = gp::train_probe(gp::ProbeKind::knn, X, y, vocab(4), hp);
  EXPECT_EQ(gp::predict(model, X).labels, y);
}

TEST(Knn, MatchesBruteForceScan) {
  const auto X = random_matrix(60, 4, 71);
  const auto Q = random_matrix(25, 4, 72);
  std::vector<std::size_t> y;
  for (Eigen::Index i = 0; i < X.rows(); ++i) y.push_back(X(i, 0) > 0 ? (X(i, 3) > 0 ? 2 : 1) : 0);
  const auto model = gp::train_probe(gp::ProbeKind::knn, X, y, vocab(3));
  const auto predicted = gp::predict(model, Q).labels;

  const auto scaler = gp::fit_scaler(X);
  const Eigen::MatrixXd Zx = gp::apply_scaler(scaler, X);
  const Eigen::MatrixXd Zq = gp::apply_scaler(scaler, Q);
  for (Eigen::Index q = 0; q < Q.rows(); ++q) {
    std::vector<std::pair<double, Eigen::Index>> all;
    for (Eigen::Index i = 0; i < X.rows(); ++i) all.emplace_back((Zq.row(q) - Zx.row(i)).squaredNorm(), i);
    std::sort(all.begin(), all.end());
    std::vector<int> votes(3, 0);
    for (int j = 0; j < 5; ++j) ++votes[y[static_cast<std::size_t>(all[static_cast<std::size_t>(j)].second)]];
    const auto expected = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    EXPECT_EQ(predicted[static_cast<std::size_t>(q)], expected) << "query " << q;
  }
}

TEST(LinearSvm, SeparatesSeparableData) {
  const auto blobs = oracle::gaussian_blobs(3, 6, 40, 6.0, 81);
  const auto model = gp::train_probe(gp::ProbeKind::linear_svm, blobs.X, blobs.y, vocab(3));
  const auto predicted = gp::predict(model, blobs.X).labels;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == blobs.y[i];
  EXPECT_GE(static_cast<double>(correct) / predicted.size(), 0.97);
}

TEST(Probes, RejectsDegenerateInput) {
  const auto X = random_matrix(6, 2, 91);
  const std::vector<std::size_t> one_class(6, 0);
  EXPECT_THROW(gp::train_probe(gp::ProbeKind::logreg, X, one_class, kAB), gp::InvalidArgument);
  const std::vector<std::size_t> short_y = {0, 1};
  EXPECT_THROW(gp::train_probe(gp::ProbeKind::logreg, X, short_y, kAB), gp::InvalidArgument);
  Eigen::MatrixXd bad = X;
  bad(0, 0) = std::nan("");
  const std::vector<std::size_t> y = {0, 1, 0, 1, 0, 1};
  EXPECT_THROW(gp::train_probe(gp::ProbeKind::ridge, bad, y, kAB), gp::InvalidArgument);
  const std::vector<std::size_t> out_of_range = {0, 1, 0, 1, 0, 2};
  EXPECT_THROW(gp::train_probe(gp::ProbeKind::ridge, X, out_of_range, kAB), gp::InvalidArgument);
  const auto model = gp::train_probe(gp::ProbeKind::ridge, X, y, kAB);
  EXPECT_THROW(gp::predict(model, random_matrix(2, 3, 1)), gp::InvalidArgument);
}

TEST(ProbeModelFile, RoundTripAllKinds) {
  const auto X = random_matrix(30, 4, 101);
  std::vector<std::size_t> y;
  for (Eigen::Index i = 0; i < X.rows(); ++i) y.push_back(static_cast<std::size_t>(i % 3));
  for (auto kind : gp::kProbeKinds) {
    const auto model = gp::train_probe(kind, X, y, vocab(3));
    const auto bytes = gp::encode_probe_model(model);
    const auto decoded = gp::decode_probe_model(bytes);
    EXPECT_EQ(gp::encode_probe_model(decoded), bytes);
    EXPECT_EQ(gp::predict(decoded, X).labels, gp::predict(model, X).labels);
    EXPECT_THROW(gp::decode_probe_model(bytes.substr(0, bytes.size() - 8)), gp::InvalidArgument);
  }
  EXPECT_THROW(gp::decode_probe_model("not a model"), gp::InvalidArgument);
}
