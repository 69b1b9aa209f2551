#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rbrn/errors.hpp"
#include "rbrn/measures.hpp"

namespace rbrn {

// Aligned input/output samples of a parametric map, with optional Jacobians.
struct SampleSet {
  Eigen::MatrixXd inputs;                  // N x d_M
  Eigen::MatrixXd outputs;                 // N x d_Q
  std::vector<Eigen::MatrixXd> jacobians;  // empty, or N of d_Q x d_M
  std::uint64_t seed = 0;
  std::string problem_tag;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index input_dim() const { return inputs.cols(); }
  Eigen::Index output_dim() const { return outputs.cols(); }
  bool has_jacobians() const { return !jacobians.empty(); }

  // Throws EmptySample for zero rows, ShapeError for misaligned pieces.
  void validate() const;
};

// Deterministic map m -> q with an attached Gaussian input measure.
// evaluate/jacobian are pure, so instances can be shared across threads.
struct ParametricProblem {
  std::string name;
  GaussianMeasure measure;
  Eigen::Index d_q = 0;
  std::optional<double> lipschitz_estimate;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> evaluate;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;

  Eigen::Index d_m() const { return measure.dim(); }
  bool has_jacobian() const { return static_cast<bool>(jacobian); }

  // Draws n inputs from the measure and evaluates the map on each row.
  // Requesting Jacobians on a problem without them throws MissingJacobians.
  SampleSet sample_batch(Eigen::Index n, std::uint64_t seed,
                         bool with_jacobians = false) const;
};

// --- Poisson flow cell ---------------------------------------------------
// -div(e^m grad u) = 0 on the unit square with u = 1 on the top edge,
// u = 0 on the bottom edge and zero flux on the sides, discretized by
// 5-point finite differences on an n-by-n vertex grid (spacing 1/(n-1))
// with harmonic-mean face coefficients.  m holds one log-coefficient per
// node in row-major order (bottom row first).

// Full state solve; the Dirichlet rows carry their boundary values.
Eigen::VectorXd poisson_solve(const Eigen::VectorXd& m, int n);

// Dense Jacobian du/dm via forward sensitivity solves that reuse the
// factorized stiffness matrix.  Dirichlet rows are identically zero.
Eigen::MatrixXd poisson_jacobian(const Eigen::VectorXd& m, int n);

// Problem wrapper; observe_stride > 1 subsamples the state (every
// stride-th node in row-major order) as the observation operator.
ParametricProblem make_poisson_problem(int n, double delta, double gamma,
                                       int observe_stride = 1);

// --- ridge maps ----------------------------------------------------------

enum class RidgeNonlinearity { Linear, Cubic, Sine };

// q(m) = phi_star * g(v_star^T m) with orthonormal v_star and phi_star.
struct RidgeSpec {
  Eigen::MatrixXd v_star;        // d_M x r*
  Eigen::MatrixXd phi_star;      // d_Q x r*
  RidgeNonlinearity g = RidgeNonlinearity::Linear;
  Eigen::MatrixXd linear_coeff;  // r* x r* for Linear; empty = identity
};

// Throws DomainError if either basis is not orthonormal (1e-10).
void validate_ridge_spec(const RidgeSpec& spec);

Eigen::VectorXd ridge_map_evaluate(const Eigen::VectorXd& m,
                                   const RidgeSpec& spec);
Eigen::MatrixXd ridge_map_jacobian(const Eigen::VectorXd& m,
                                   const RidgeSpec& spec);

ParametricProblem make_ridge_problem(
    RidgeSpec spec, GaussianMeasure measure, std::string name,
    std::optional<double> lipschitz = std::nullopt);

// Max ||q(m1)-q(m2)|| / ||m1-m2|| over n_pairs random sample pairs.
double lipschitz_audit(const ParametricProblem& problem, Eigen::Index n_pairs,
                       std::uint64_t seed);

// --- registry ------------------------------------------------------------
// Known tags: poisson17, poisson33, ridge-cubic, ridge-sine.  Unknown tags
// throw UsageError ("csv:" datasets are handled by the CLI, not here).
ParametricProblem make_problem(const std::string& tag);
bool is_registry_tag(const std::string& tag);

// Ridge-sine instance whose input variance is deliberately misaligned with
// the map's active directions: the ridge lives in low-variance coordinates
// while high-variance coordinates carry no signal.  Used by subspace
// comparison studies.
ParametricProblem make_misaligned_ridge_sine();

}  // namespace rbrn
