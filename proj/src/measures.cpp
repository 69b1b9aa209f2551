#include "rbrn/measures.hpp"

#include <Eigen/Cholesky>

#include "rbrn/rng.hpp"

namespace rbrn {

GaussianMeasure GaussianMeasure::dense_spd(Eigen::VectorXd mean,
                                           const Eigen::MatrixXd& covariance) {
  if (covariance.rows() != covariance.cols())
    throw ShapeError("dense_spd: covariance must be square");
  if (covariance.rows() == 0) throw ShapeError("dense_spd: empty covariance");
  if (mean.size() == 0) mean = Eigen::VectorXd::Zero(covariance.rows());
  if (mean.size() != covariance.rows())
    throw ShapeError("dense_spd: mean length does not match covariance");

  const double asym = (covariance - covariance.transpose()).norm();
  if (asym > 1e-12 * covariance.norm())
    throw InvalidCovariance("dense_spd: covariance is not symmetric");

  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw InvalidCovariance("dense_spd: covariance is not positive definite");

  GaussianMeasure g;
  g.mean_ = std::move(mean);
  g.chol_ = llt.matrixL();
  return g;
}

Eigen::SparseMatrix<double> grid_matern_operator(const GridMaternSpec& spec) {
  const int n = spec.grid_n;
  const Eigen::Index d = static_cast<Eigen::Index>(n) * n;
  // Mirrored ghost nodes make the Neumann Laplacian the negated graph
  // Laplacian of the grid scaled by 1/h^2; rows sum to zero and A stays SPD.
  const double h = n > 1 ? 1.0 / (n - 1) : 1.0;
  const double w = spec.gamma / (h * h);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5 * d));
  auto id = [n](int ix, int iy) { return static_cast<Eigen::Index>(iy) * n + ix; };
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const Eigen::Index p = id(ix, iy);
      double diag = spec.delta;
      const int nb[4][2] = {{ix - 1, iy}, {ix + 1, iy}, {ix, iy - 1}, {ix, iy + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[0] >= n || q[1] < 0 || q[1] >= n) continue;
        diag += w;
        trip.emplace_back(p, id(q[0], q[1]), -w);
      }
      trip.emplace_back(p, p, diag);
    }
  }
  Eigen::SparseMatrix<double> a(d, d);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

GaussianMeasure GaussianMeasure::grid_matern(const GridMaternSpec& spec,
                                             Eigen::VectorXd mean) {
  if (spec.grid_n < 1) throw ShapeError("grid_matern: grid_n must be >= 1");
  if (spec.grid_n > kGridMaternMaxSide)
    throw BudgetExceeded("grid_matern: grid_n exceeds supported budget of " +
                         std::to_string(kGridMaternMaxSide));
  if (spec.delta <= 0.0 || spec.gamma <= 0.0)
    throw InvalidCovariance("grid_matern: delta and gamma must be positive");

  const Eigen::Index d =
      static_cast<Eigen::Index>(spec.grid_n) * spec.grid_n;
  if (mean.size() == 0) mean = Eigen::VectorXd::Zero(d);
  if (mean.size() != d)
    throw ShapeError("grid_matern: mean length does not match grid");

  auto llt =
      std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
  llt->compute(grid_matern_operator(spec));
  if (llt->info() != Eigen::Success)
    throw InvalidCovariance("grid_matern: operator factorization failed");

  GaussianMeasure g;
  g.mean_ = std::move(mean);
  g.matern_ = spec;
  g.matern_llt_ = std::move(llt);
  return g;
}

const GridMaternSpec& GaussianMeasure::matern_spec() const {
  if (!matern_) throw DomainError("measure is not GridMatern");
  return *matern_;
}

Eigen::MatrixXd GaussianMeasure::realize_covariance() const {
  const Eigen::Index d = dim();
  if (!matern_) {
    Eigen::MatrixXd c = chol_ * chol_.transpose();
    return ((c + c.transpose()) * 0.5).eval();
  }
  // C = A^{-2} = A^{-1} A^{-1} since A is symmetric.
  Eigen::MatrixXd ainv =
      matern_llt_->solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::MatrixXd c = ainv * ainv;
  return ((c + c.transpose()) * 0.5).eval();
}

Eigen::MatrixXd GaussianMeasure::sample(Eigen::Index n,
                                        std::uint64_t seed) const {
  if (n < 0) throw ShapeError("sample: negative count");
  const Eigen::Index d = dim();
  Eigen::MatrixXd out(n, d);
  Eigen::VectorXd w(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    rng.fill_gaussian(w);
    if (!matern_) {
      out.row(i) = (mean_ + chol_ * w).transpose();
    } else {
      out.row(i) = (mean_ + matern_llt_->solve(w)).transpose();
    }
  }
  return out;
}

double GaussianMeasure::covariance_trace() const {
  if (!matern_) return (chol_ * chol_.transpose()).trace();
  return realize_covariance().trace();
}

}  // namespace rbrn
