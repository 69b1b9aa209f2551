#include "rbrn/reduced_basis.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace rbrn {

std::string to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::Pod: return "pod";
    case BasisKind::Kle: return "kle";
    case BasisKind::ActiveSubspace: return "as";
  }
  throw UsageError("unknown basis kind value");
}

BasisKind parse_basis_kind(const std::string& text) {
  if (text == "pod") return BasisKind::Pod;
  if (text == "kle") return BasisKind::Kle;
  if (text == "as") return BasisKind::ActiveSubspace;
  throw UsageError("unknown basis kind '" + text +
                   "' (expected pod, kle, or as)");
}

namespace {

// Roundoff can push eigenvalues of structurally PSD operators slightly below
// zero; clip so downstream tail sums stay nonnegative.
void clip_eigenvalues(Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] < 0.0) v[i] = 0.0;
}

EigenPairs descending(const Eigen::VectorXd& ascending_values,
                      const Eigen::MatrixXd& ascending_vectors) {
  EigenPairs out;
  out.values = ascending_values.reverse();
  out.vectors = ascending_vectors.rowwise().reverse();
  apply_sign_convention(out.vectors);
  return out;
}

void require_symmetric(const Eigen::MatrixXd& m, const char* who) {
  if (m.rows() != m.cols())
    throw ShapeError(std::string(who) + ": matrix must be square");
  if ((m - m.transpose()).norm() > 1e-10 * m.norm())
    throw NotSymmetric(std::string(who) + ": matrix is not symmetric");
}

}  // namespace

Eigen::MatrixXd empirical_second_moment(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0)
    throw EmptySample("empirical_second_moment: no samples");
  Eigen::MatrixXd m =
      rows.transpose() * rows / static_cast<double>(rows.rows());
  return ((m + m.transpose()) * 0.5).eval();
}

void apply_sign_convention(Eigen::MatrixXd& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index pivot = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double a = std::abs(vectors(i, j));
      if (a > best) {  // strict: ties keep the lowest index
        best = a;
        pivot = i;
      }
    }
    if (vectors(pivot, j) < 0.0) vectors.col(j) = -vectors.col(j);
  }
}

EigenPairs symmetric_eig(const Eigen::MatrixXd& m) {
  require_symmetric(m, "symmetric_eig");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw SolveFailure("symmetric_eig: eigensolver failed");
  EigenPairs out = descending(es.eigenvalues(), es.eigenvectors());
  const double resid =
      (m * out.vectors - out.vectors * out.values.asDiagonal()).norm();
  if (resid > 1e-8 * std::max(m.norm(), 1e-300))
    throw SolveFailure("symmetric_eig: residual check failed");
  return out;
}

EigenPairs generalized_eig(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require_symmetric(a, "generalized_eig");
  if (b.rows() != b.cols() || b.rows() != a.rows())
    throw ShapeError("generalized_eig: B must be square and match A");
  if ((b - b.transpose()).norm() > 1e-10 * b.norm())
    throw NotSPD("generalized_eig: B is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  if (llt.info() != Eigen::Success)
    throw NotSPD("generalized_eig: B is not positive definite");

  // Whitened problem: with B = L L^T and v = L^{-T} y, A v = lambda B v
  // becomes (L^{-1} A L^{-T}) y = lambda y, and v^T B v = y^T y.
  const Eigen::MatrixXd l = llt.matrixL();
  Eigen::MatrixXd s = llt.matrixL().solve(a);
  s = llt.matrixL().solve(s.transpose()).eval();
  s = ((s + s.transpose()) * 0.5).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success)
    throw SolveFailure("generalized_eig: eigensolver failed");
  Eigen::MatrixXd vecs =
      l.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors());
  return descending(es.eigenvalues(), vecs);
}

ReducedBasis compute_pod(const Eigen::MatrixXd& outputs, Eigen::Index r) {
  if (outputs.rows() == 0) throw EmptySample("compute_pod: no samples");
  if (r < 1 || r > std::min(outputs.rows(), outputs.cols()))
    throw RankError("compute_pod: rank out of range");
  EigenPairs ep = symmetric_eig(empirical_second_moment(outputs));
  ReducedBasis basis;
  basis.vectors = ep.vectors.leftCols(r);
  basis.eigenvalues = ep.values;
  clip_eigenvalues(basis.eigenvalues);
  basis.kind = BasisKind::Pod;
  basis.n_samples = outputs.rows();
  return basis;
}

ReducedBasis compute_kle(const GaussianMeasure& measure, Eigen::Index r) {
  if (r < 1 || r > measure.dim())
    throw RankError("compute_kle: rank out of range");
  EigenPairs ep = symmetric_eig(measure.realize_covariance());
  ReducedBasis basis;
  basis.vectors = ep.vectors.leftCols(r);
  basis.eigenvalues = ep.values;
  clip_eigenvalues(basis.eigenvalues);
  basis.kind = BasisKind::Kle;
  basis.n_samples = 0;
  return basis;
}

ReducedBasis compute_kle(const Eigen::MatrixXd& inputs, Eigen::Index r) {
  if (inputs.rows() == 0) throw EmptySample("compute_kle: no samples");
  if (r < 1 || r > std::min(inputs.rows(), inputs.cols()))
    throw RankError("compute_kle: rank out of range");
  Eigen::MatrixXd centered = inputs.rowwise() - inputs.colwise().mean();
  EigenPairs ep = symmetric_eig(empirical_second_moment(centered));
  ReducedBasis basis;
  basis.vectors = ep.vectors.leftCols(r);
  basis.eigenvalues = ep.values;
  clip_eigenvalues(basis.eigenvalues);
  basis.kind = BasisKind::Kle;
  basis.n_samples = inputs.rows();
  return basis;
}

ReducedBasis compute_as(const std::vector<Eigen::MatrixXd>& jacobians,
                        const Eigen::MatrixXd& covariance, Eigen::Index r) {
  if (jacobians.empty()) throw EmptySample("compute_as: no jacobians");
  const Eigen::Index dm = jacobians.front().cols();
  const Eigen::Index dq = jacobians.front().rows();
  for (const auto& j : jacobians)
    if (j.rows() != dq || j.cols() != dm)
      throw ShapeError("compute_as: jacobian shapes differ");
  if (covariance.rows() != dm || covariance.cols() != dm)
    throw ShapeError("compute_as: covariance does not match jacobians");
  if (r < 1 || r > dm) throw RankError("compute_as: rank out of range");
  if ((covariance - covariance.transpose()).norm() >
      1e-10 * covariance.norm())
    throw NotSPD("compute_as: covariance is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw NotSPD("compute_as: covariance is not positive definite");

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dm, dm);
  for (const auto& j : jacobians) h.noalias() += j.transpose() * j;
  h /= static_cast<double>(jacobians.size());
  h = ((h + h.transpose()) * 0.5).eval();

  // Whitened form of mean(J^T J) v = lambda C^{-1} v: eigenvectors of
  // L^T H L mapped through L are C^{-1}-orthonormal.
  const Eigen::MatrixXd l = llt.matrixL();
  Eigen::MatrixXd s = l.transpose() * h * l;
  s = ((s + s.transpose()) * 0.5).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success)
    throw SolveFailure("compute_as: eigensolver failed");
  EigenPairs ep = descending(es.eigenvalues(), (l * es.eigenvectors()).eval());

  ReducedBasis basis;
  basis.vectors = ep.vectors.leftCols(r);
  basis.eigenvalues = ep.values;
  clip_eigenvalues(basis.eigenvalues);
  basis.kind = BasisKind::ActiveSubspace;
  basis.n_samples = static_cast<Eigen::Index>(jacobians.size());
  basis.metric_factor = l;
  return basis;
}

double projection_error_mc(const ReducedBasis& basis,
                           const Eigen::MatrixXd& samples) {
  if (samples.rows() == 0) throw EmptySample("projection_error_mc: no samples");
  if (samples.cols() != basis.dim())
    throw ShapeError("projection_error_mc: sample dimension mismatch");
  Eigen::MatrixXd x;
  Eigen::MatrixXd v;
  if (basis.l2_orthonormal()) {
    x = samples;
    v = basis.vectors;
  } else {
    // Whiten both the samples and the basis; the whitened basis columns are
    // orthonormal, so the plain projector applies.
    const auto lt = basis.metric_factor.triangularView<Eigen::Lower>();
    x = lt.solve(samples.transpose()).transpose();
    v = lt.solve(basis.vectors);
  }
  Eigen::MatrixXd resid = x - (x * v) * v.transpose();
  return std::sqrt(resid.rowwise().squaredNorm().mean());
}

namespace {
double tail_sum(const Eigen::VectorXd& v, Eigen::Index r) {
  if (r >= v.size()) return 0.0;
  return v.tail(v.size() - r).sum();
}
}  // namespace

double ridge_bound(const Eigen::VectorXd& input_eigenvalues,
                   const Eigen::VectorXd& output_eigenvalues, Eigen::Index r,
                   RidgeBoundVariant variant,
                   std::optional<double> lipschitz) {
  if (r < 0) throw DomainError("ridge_bound: negative rank");
  const double tin = tail_sum(input_eigenvalues, r);
  const double tout = tail_sum(output_eigenvalues, r);
  if (variant == RidgeBoundVariant::ActiveSubspace)
    return 2.0 * tin + 2.0 * tout;
  if (!lipschitz)
    throw MissingLipschitz("ridge_bound: KLE variant needs a Lipschitz constant");
  return 2.0 * (*lipschitz) * (*lipschitz) * tin + 2.0 * tout;
}

double basis_perturbation_bound(double eps_ridge, double eps_output,
                                double eps_input, double latent_lipschitz,
                                double trace_cov, double mean_norm,
                                double q_norm) {
  const double args[] = {eps_ridge, eps_output,  eps_input, latent_lipschitz,
                         trace_cov, mean_norm, q_norm};
  for (double a : args)
    if (!(a >= 0.0))
      throw DomainError("basis_perturbation_bound: arguments must be >= 0");
  return eps_ridge * (1.0 + eps_output) + eps_output * q_norm +
         latent_lipschitz * eps_input * (std::sqrt(trace_cov) + mean_norm);
}

}  // namespace rbrn
