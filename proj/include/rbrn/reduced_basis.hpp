#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rbrn/errors.hpp"
#include "rbrn/measures.hpp"

namespace rbrn {

enum class BasisKind { Pod, Kle, ActiveSubspace };

std::string to_string(BasisKind kind);             // "pod", "kle", "as"
BasisKind parse_basis_kind(const std::string& text);  // UsageError

// Rank-r linear reduced basis together with the full eigenvalue spectrum it
// was truncated from.  POD and KLE vectors are l2-orthonormal; active
// subspace vectors are orthonormal in the C^{-1} inner product, recorded by
// metric_factor (a factor L with L L^T = C).
struct ReducedBasis {
  Eigen::MatrixXd vectors;       // d x r, columns ordered by eigenvalue
  Eigen::VectorXd eigenvalues;   // length d, descending, clipped to >= 0
  BasisKind kind = BasisKind::Pod;
  Eigen::Index n_samples = 0;    // 0 when computed from an analytic covariance
  Eigen::MatrixXd metric_factor; // empty unless kind == ActiveSubspace

  Eigen::Index dim() const { return vectors.rows(); }
  Eigen::Index rank() const { return vectors.cols(); }
  bool l2_orthonormal() const { return kind != BasisKind::ActiveSubspace; }
};

struct EigenPairs {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns aligned with values
};

// (1/N) sum_i a_i a_i^T over the rows of `rows`; result is symmetrized.
// Throws EmptySample for zero rows.
Eigen::MatrixXd empirical_second_moment(const Eigen::MatrixXd& rows);

// Fixes eigenvector sign ambiguity: each column is flipped so its entry of
// largest magnitude (lowest index on ties) is positive.
void apply_sign_convention(Eigen::MatrixXd& vectors);

// Dense symmetric eigendecomposition, descending order, sign convention
// applied.  Requires ||M - M^T|| <= 1e-10 ||M|| (NotSymmetric otherwise) and
// verifies the residual ||MQ - Q Lambda|| <= 1e-8 ||M|| (SolveFailure).
EigenPairs symmetric_eig(const Eigen::MatrixXd& m);

// Solves A v = lambda B v for symmetric A and SPD B via Cholesky whitening;
// eigenvectors are B-orthonormal.  Never forms B^{-1}.
EigenPairs generalized_eig(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Proper orthogonal decomposition of output samples (rows of `outputs`,
// raw, mean not subtracted).  1 <= r <= min(N, d).
ReducedBasis compute_pod(const Eigen::MatrixXd& outputs, Eigen::Index r);

// Karhunen-Loeve basis from the analytic covariance of a measure.
ReducedBasis compute_kle(const GaussianMeasure& measure, Eigen::Index r);

// Karhunen-Loeve basis estimated from input samples; rows are centered by
// the sample mean before the second moment is formed.
ReducedBasis compute_kle(const Eigen::MatrixXd& inputs, Eigen::Index r);

// Active subspace basis from Jacobian samples: solves
//   mean(J^T J) v = lambda C^{-1} v
// by whitening with a Cholesky factor of C.  Vectors are C^{-1}-orthonormal.
ReducedBasis compute_as(const std::vector<Eigen::MatrixXd>& jacobians,
                        const Eigen::MatrixXd& covariance, Eigen::Index r);

// Monte Carlo estimate of the root mean squared projection error
// sqrt(E ||x - P_B x||^2) over the rows of `samples`, measured in the
// basis' native inner product (whitened for active subspaces).
double projection_error_mc(const ReducedBasis& basis,
                           const Eigen::MatrixXd& samples);

enum class RidgeBoundVariant { ActiveSubspace, Kle };

// Squared-error ridge truncation bound at rank r:
//   AS : 2 * tail(input) + 2 * tail(output)
//   KLE: 2 * L^2 * tail(input) + 2 * tail(output)
// where tail(v) = sum of v[i] for i >= r.  The KLE variant requires the
// map's Lipschitz constant (MissingLipschitz otherwise).
double ridge_bound(const Eigen::VectorXd& input_eigenvalues,
                   const Eigen::VectorXd& output_eigenvalues, Eigen::Index r,
                   RidgeBoundVariant variant,
                   std::optional<double> lipschitz = std::nullopt);

// L2 error bound for a ridge approximation evaluated with perturbed bases:
//   eps_ridge * (1 + eps_output) + eps_output * q_norm
//     + latent_lipschitz * eps_input * (sqrt(trace_cov) + mean_norm).
// All arguments must be nonnegative (DomainError otherwise).
double basis_perturbation_bound(double eps_ridge, double eps_output,
                                double eps_input, double latent_lipschitz,
                                double trace_cov, double mean_norm,
                                double q_norm);

}  // namespace rbrn
