#include "spatml/covariance.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <utility>

#include "spatml/optim.hpp"

namespace spatml {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

bool same_site_list(const std::vector<Location>& a, const std::vector<Location>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].x != b[i].x || a[i].y != b[i].y ||
        a[i].metric != b[i].metric)
      return false;
  }
  return true;
}

Eigen::MatrixXd kernel_from_distances(const Eigen::MatrixXd& D, const CovarianceParams& p) {
  return p.psill == 0.0 ? Eigen::MatrixXd::Zero(D.rows(), D.cols())
                        : Eigen::MatrixXd(p.psill * (-D / p.range).array().exp());
}

// Self-covariance from a precomputed distance matrix, with the
// near-singularity ridge applied when the nugget cannot regularize.
Eigen::MatrixXd self_cov_from_distances(const Eigen::MatrixXd& D, const CovarianceParams& p) {
  Eigen::MatrixXd S = kernel_from_distances(D, p);
  double diag = p.nugget;
  if (p.nugget < 1e-12) diag += 1e-10 * (p.psill + p.nugget);  // = 1e-10 * trace/n
  S.diagonal().array() += diag;
  return S;
}

double nll_from_cov(Eigen::MatrixXd S, const Eigen::VectorXd& r) {
  const Eigen::LLT<Eigen::MatrixXd> llt(std::move(S));
  if (llt.info() != Eigen::Success)
    return std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double quad = r.dot(llt.solve(r));
  return 0.5 * (static_cast<double>(r.size()) * kLog2Pi + logdet + quad);
}

double sample_variance(const Eigen::VectorXd& r) {
  if (r.size() < 2) return 0.0;
  const double mean = r.mean();
  return (r.array() - mean).square().sum() / static_cast<double>(r.size() - 1);
}

}  // namespace

void CovarianceParams::validate() const {
  if (!std::isfinite(nugget) || !std::isfinite(psill) || !std::isfinite(range))
    throw DomainError("covariance parameters must be finite");
  if (nugget < 0.0 || psill < 0.0)
    throw DomainError("nugget and partial sill must be nonnegative");
  if (nugget + psill <= 0.0)
    throw DomainError("total variance nugget + psill must be positive");
  if (range <= 0.0) throw DomainError("range must be positive");
}

Eigen::MatrixXd cov_matrix(const std::vector<Location>& sites, const CovarianceParams& params) {
  params.validate();
  Eigen::MatrixXd S = kernel_from_distances(pairwise_distances(sites), params);
  S.diagonal().array() += params.nugget;
  return S;
}

Eigen::MatrixXd cross_cov_matrix(const std::vector<Location>& a, const std::vector<Location>& b,
                                 const CovarianceParams& params) {
  params.validate();
  return kernel_from_distances(cross_distances(a, b), params);
}

Eigen::MatrixXd covariance_cholesky(const std::vector<Location>& sites,
                                    const CovarianceParams& params) {
  params.validate();
  const Eigen::LLT<Eigen::MatrixXd> llt(
      self_cov_from_distances(pairwise_distances(sites), params));
  if (llt.info() != Eigen::Success)
    throw NumericalRankError("covariance matrix is not positive definite at these sites");
  return llt.matrixL();
}

double neg_log_likelihood(const Eigen::VectorXd& residuals, const std::vector<Location>& sites,
                          const CovarianceParams& params) {
  params.validate();
  if (static_cast<std::size_t>(residuals.size()) != sites.size())
    throw DimensionError("residual length does not match site count");
  const double v = nll_from_cov(self_cov_from_distances(pairwise_distances(sites), params),
                                residuals);
  if (!std::isfinite(v))
    throw NumericalRankError("covariance matrix is numerically singular");
  return v;
}

FittedCovariance::FittedCovariance(CovarianceParams params, std::vector<Location> sites,
                                   Eigen::VectorXd residuals)
    : params_(params), sites_(std::move(sites)), residuals_(std::move(residuals)) {
  params_.validate();
  if (static_cast<std::size_t>(residuals_.size()) != sites_.size())
    throw DimensionError("residual length does not match site count");
  if (!residuals_.allFinite()) throw DomainError("residuals contain NaN or Inf");

  const Eigen::MatrixXd S = self_cov_from_distances(pairwise_distances(sites_), params_);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw NumericalRankError("covariance matrix is not positive definite at these sites");
  factor_ = llt.matrixL();
  alpha_ = llt.solve(residuals_);
}

Eigen::VectorXd FittedCovariance::krige(const std::vector<Location>& where) const {
  if (where.empty()) return Eigen::VectorXd(0);
  if (params_.psill == 0.0)
    return Eigen::VectorXd::Zero(static_cast<long>(where.size()));
  return cross_cov_matrix(where, sites_, params_) * alpha_;
}

Eigen::MatrixXd FittedCovariance::precision() const {
  const long n = static_cast<long>(sites_.size());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  return factor_.triangularView<Eigen::Lower>().transpose().solve(
      factor_.triangularView<Eigen::Lower>().solve(I));
}

/* ML fit: Nelder-Mead over z = (log nugget, log psill, log range) with box
 * bounds handled by clamp-plus-penalty, distance matrix computed once. */
FittedCovariance fit_ml(const Eigen::VectorXd& residuals, const std::vector<Location>& sites,
                        const FitMlOptions& options) {
  const long n = residuals.size();
  if (static_cast<std::size_t>(n) != sites.size())
    throw DimensionError("residual length does not match site count");
  if (n < 3) throw DimensionError("covariance fit needs at least 3 sites");

  const double var_r = sample_variance(residuals);
  if (var_r <= 0.0 || !residuals.allFinite())
    throw DegenerateInputError("residuals are constant; no covariance to fit");

  const Eigen::MatrixXd D = pairwise_distances(sites);
  const double dmax = D.maxCoeff();
  if (dmax <= 0.0) throw DegenerateInputError("all sites coincide; range is unidentifiable");

  const double lo_var = 1e-8 * var_r, hi_var = 1e3 * var_r;
  const double lo_rho = 1e-3 * dmax, hi_rho = 10.0 * dmax;
  const Eigen::Vector3d lo(std::log(lo_var), std::log(lo_var), std::log(lo_rho));
  const Eigen::Vector3d hi(std::log(hi_var), std::log(hi_var), std::log(hi_rho));

  CovarianceParams init{var_r / 2.0, var_r / 2.0, dmax / 4.0};
  if (options.init) {
    init = *options.init;
    init.validate();
  }
  Eigen::Vector3d z0(std::log(std::max(init.nugget, lo_var)),
                     std::log(std::max(init.psill, lo_var)),
                     std::log(init.range));
  z0 = z0.cwiseMax(lo).cwiseMin(hi);

  auto unpack = [](const Eigen::Vector3d& z) {
    return CovarianceParams{std::exp(z(0)), std::exp(z(1)), std::exp(z(2))};
  };
  auto objective = [&](const Eigen::VectorXd& z) {
    const Eigen::Vector3d clamped = z.cwiseMax(lo).cwiseMin(hi);
    const double excess = (z - clamped).squaredNorm();
    const double nll = nll_from_cov(self_cov_from_distances(D, unpack(clamped)), residuals);
    return nll + 1e3 * excess;
  };

  const SimplexResult run = nelder_mead(objective, z0, 0.7, options.rel_tol, options.max_iter);
  const Eigen::Vector3d best = Eigen::Vector3d(run.x).cwiseMax(lo).cwiseMin(hi);
  const CovarianceParams theta = unpack(best);
  if (!run.converged)
    throw ConvergenceError("covariance ML did not converge within budget", theta, run.value);
  return FittedCovariance(theta, sites, residuals);
}

}  // namespace spatml
