#pragma once

// PHATE embedding: alpha-decay affinities, a diffusion operator powered to a
// time chosen by the von Neumann entropy knee, log potentials, and metric MDS
// (classical initialization refined by SMACOF).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace genreprobe {

struct PhateParams {
  std::size_t k = 5;
  double alpha = 40.0;
  /// Diffusion time; chosen by select_t() when empty.
  std::optional<std::size_t> t;
  std::size_t t_max = 100;
  double potential_floor = 1e-7;
  std::size_t mds_iterations = 500;
  double mds_tol = 1e-6;
  std::uint64_t seed = 0;
};

/// Row-stochastic P = diag(degrees)^-1 K for a symmetric kernel K.
struct DiffusionOperator {
  Eigen::MatrixXd P;
  /// Row sums of K. Empty when P was supplied directly.
  Eigen::VectorXd degrees;
  std::size_t k = 0;
  double alpha = 0.0;
};

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& X);

/// Adaptive bandwidth: distance from each row to its k-th nearest other row,
/// floored at 1e-12.
Eigen::VectorXd knn_bandwidths(const Eigen::MatrixXd& distances, std::size_t k);

/// K(x,y) = 0.5 exp(-(d/eps_x)^alpha) + 0.5 exp(-(d/eps_y)^alpha); symmetric.
Eigen::MatrixXd alpha_decay_kernel(const Eigen::MatrixXd& distances, std::size_t k, double alpha);

DiffusionOperator diffusion_operator(const Eigen::MatrixXd& X, std::size_t k, double alpha);

/// P^t by repeated squaring.
Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& P, std::size_t t);

/// Moduli of the eigenvalues of P. Uses the symmetric conjugate
/// D^1/2 P D^-1/2 when degrees are known or P itself is symmetric.
Eigen::VectorXd diffusion_spectrum(const DiffusionOperator& op);

/// H(t) for t = 1..t_max over the normalized spectrum of P^t.
std::vector<double> von_neumann_entropy(const DiffusionOperator& op, std::size_t t_max = 100);

/// Knee of H(t): the t farthest from the chord joining its end points. Ties
/// resolve to the smallest t.
std::size_t select_t(const DiffusionOperator& op, std::size_t t_max = 100);

/// Sum over i<j of (D_ij - ||x_i - x_j||)^2.
double raw_stress(const Eigen::MatrixXd& D, const Eigen::MatrixXd& coords);

/// Torgerson scaling into `dims` dimensions. Each axis is signed so its
/// largest-magnitude coordinate is positive.
Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& D, std::size_t dims = 2);

struct SmacofResult {
  Eigen::MatrixXd coords;
  /// Raw stress of the initial configuration followed by each iteration.
  std::vector<double> stress_history;
  std::size_t iterations = 0;
};

/// Stress majorization (Guttman transform) from `init`. Stops after
/// `max_iterations` or once the relative stress decrease falls below `tol`.
/// Throws InvalidArgument if D is not square, symmetric, zero-diagonal and
/// non-negative.
SmacofResult smacof(const Eigen::MatrixXd& D, const Eigen::MatrixXd& init, std::size_t max_iterations = 500,
                    double tol = 1e-6);

struct PhateEmbedding {
  Eigen::MatrixXd coords;  // n x 2
  PhateParams params;      // t holds the time actually used
  std::vector<std::string> sample_ids;
  std::vector<double> stress_history;
};

/// Throws InvalidArgument when n < k + 2 or X has non-finite entries.
PhateEmbedding phate_embed(const Eigen::MatrixXd& X, const PhateParams& params = {},
                           std::vector<std::string> sample_ids = {});

/// CSV with header "id,x,y,category".
std::string embedding_csv(const PhateEmbedding& embedding, std::span<const std::string> categories);

/// Scatter plot, one color per category.
std::string embedding_svg(const PhateEmbedding& embedding, std::span<const std::string> categories,
                          const std::string& title = "PHATE");

}  // namespace genreprobe
