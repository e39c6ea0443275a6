#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "genreprobe/corpus.hpp"

namespace genreprobe {

enum class ProbeKind : std::uint8_t { logreg = 0, ridge = 1, linear_svm = 2, knn = 3 };

inline constexpr std::array<ProbeKind, 4> kProbeKinds = {ProbeKind::logreg, ProbeKind::ridge,
                                                         ProbeKind::linear_svm, ProbeKind::knn};

std::string_view to_string(ProbeKind kind);
ProbeKind parse_probe_kind(std::string_view name);

/// Per-feature standardization. Scales are population standard deviations;
/// a feature without spread gets scale 1.
struct Scaler {
  Eigen::VectorXd means;
  Eigen::VectorXd scales;
};

Scaler fit_scaler(const Eigen::MatrixXd& X);
Eigen::MatrixXd apply_scaler(const Scaler& scaler, const Eigen::MatrixXd& X);

struct ProbeHyperparams {
  double l2_strength = 1.0;
  std::size_t max_iter = 100000;
  double tol = 1e-4;
  std::size_t k = 5;
  /// Fixed length of the linear SVM subgradient schedule.
  std::size_t svm_iterations = 1000;

  bool operator==(const ProbeHyperparams&) const = default;
};

/// Outcome of the iterative solvers (logreg, linear SVM).
struct TrainReport {
  std::size_t iterations = 0;
  double final_gradient_norm = 0.0;
  bool converged = false;
  /// Objective after each accepted step, starting with the initial point.
  std::vector<double> loss_history;
};

struct ProbeModel {
  ProbeKind kind = ProbeKind::logreg;
  Scaler scaler;
  LabelVocabulary labels;
  ProbeHyperparams hyperparams;
  /// Linear kinds: C x d weights and C biases.
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
  /// knn: scaled training rows and their class indices.
  Eigen::MatrixXd train_points;
  std::vector<std::size_t> train_labels;
  TrainReport report;

  std::size_t feature_count() const { return static_cast<std::size_t>(scaler.means.size()); }
  std::size_t class_count() const { return labels.size(); }
};

struct Prediction {
  std::vector<std::size_t> labels;
  /// m x C decision scores; logreg reports class probabilities, knn vote shares.
  Eigen::MatrixXd scores;
};

/// Fits the scaler on X, then the classifier on the scaled rows. `y` holds
/// class indices into `labels`. All four kinds are deterministic; `seed` is
/// accepted for interface stability and recorded nowhere else.
///
/// Throws InvalidArgument when y has a single class, X is non-finite, the
/// shapes disagree, or n < C.
ProbeModel train_probe(ProbeKind kind, const Eigen::MatrixXd& X, std::span<const std::size_t> y,
                       const LabelVocabulary& labels, const ProbeHyperparams& hyperparams = {},
                       std::uint64_t seed = 0);

/// Applies the model's scaler and decision rule. Throws InvalidArgument on a
/// feature-count mismatch.
Prediction predict(const ProbeModel& model, const Eigen::MatrixXd& X);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& row);

/// Multinomial logistic objective on already-scaled rows:
///   (1/n) sum_i [logsumexp(z_i) - z_{i,y_i}] + l2/(2n) * ||W||_F^2,  z_i = W x_i + b.
/// Fills the gradients when the pointers are non-null.
double logreg_objective(const Eigen::MatrixXd& X, std::span<const std::size_t> y, const Eigen::MatrixXd& W,
                        const Eigen::VectorXd& b, double l2_strength, Eigen::MatrixXd* grad_W = nullptr,
                        Eigen::VectorXd* grad_b = nullptr);

/// Ridge objective of one one-vs-all column: ||t - X w - b||^2 + l2 * ||w||^2.
double ridge_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets, const Eigen::VectorXd& w,
                       double b, double l2_strength);

/// Linear SVM objective of one one-vs-all column:
///   (1/n) sum_i max(0, 1 - t_i (w.x_i + b)) + l2/(2n) * ||w||^2.
double hinge_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets, const Eigen::VectorXd& w,
                       double b, double l2_strength);

/// JSON header + little-endian float64 payload. See probe_io.cpp for layout.
std::string encode_probe_model(const ProbeModel& model);
ProbeModel decode_probe_model(std::string_view bytes);
void write_probe_model(const std::filesystem::path& path, const ProbeModel& model);
ProbeModel read_probe_model(const std::filesystem::path& path);

}  // namespace genreprobe
