#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>

#include "rbrn/errors.hpp"

namespace rbrn {

// Covariance given as A^{-2} for A = delta*I - gamma*Lap_h, where Lap_h is
// the 5-point Laplacian with homogeneous Neumann boundary rows (mirrored
// ghost nodes, zero row sums) on an n-by-n grid over the unit square with
// spacing 1/(n-1).  delta, gamma > 0 keep A symmetric positive definite.
struct GridMaternSpec {
  int grid_n = 0;
  double delta = 1.0;
  double gamma = 0.1;
};

// Largest grid side supported by the dense materialization path.
inline constexpr int kGridMaternMaxSide = 64;

// Gaussian measure N(mean, C) over R^d.  The covariance is either an
// explicit dense SPD matrix or a GridMatern operator.  Instances are
// immutable after construction: validation and factorization happen in the
// factory functions, so sampling is pure and safe to call concurrently.
class GaussianMeasure {
 public:
  // mean may be empty (treated as zero).  Throws InvalidCovariance if the
  // matrix is asymmetric beyond 1e-12 relative or fails Cholesky.
  static GaussianMeasure dense_spd(Eigen::VectorXd mean,
                                   const Eigen::MatrixXd& covariance);

  // Throws InvalidCovariance for delta <= 0 or gamma <= 0, BudgetExceeded
  // for grid_n > kGridMaternMaxSide, ShapeError for a mean of wrong length.
  static GaussianMeasure grid_matern(const GridMaternSpec& spec,
                                     Eigen::VectorXd mean = Eigen::VectorXd());

  Eigen::Index dim() const { return mean_.size(); }
  const Eigen::VectorXd& mean() const { return mean_; }

  bool is_grid_matern() const { return matern_.has_value(); }
  const GridMaternSpec& matern_spec() const;

  // Materializes the covariance as a dense SPD matrix.  For GridMatern this
  // forms A^{-2} by dense factorization.
  Eigen::MatrixXd realize_covariance() const;

  // n-by-dim matrix whose rows are i.i.d. draws m = mean + L w with
  // L L^T = C and w standard normal.  Row i depends only on (seed, i).
  Eigen::MatrixXd sample(Eigen::Index n, std::uint64_t seed) const;

  // trace(C); used by perturbation bounds.
  double covariance_trace() const;

 private:
  GaussianMeasure() = default;

  Eigen::VectorXd mean_;
  // Dense path: lower Cholesky factor of the covariance.
  Eigen::MatrixXd chol_;
  // GridMatern path: sparse A with a cached factorization (read-only after
  // construction).
  std::optional<GridMaternSpec> matern_;
  std::shared_ptr<const Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>
      matern_llt_;
};

// Assembles A = delta*I - gamma*Lap_h for GridMaternSpec as a sparse matrix.
// Exposed for tests that need the operator itself.
Eigen::SparseMatrix<double> grid_matern_operator(const GridMaternSpec& spec);

}  // namespace rbrn
