#ifndef SPATML_COVARIANCE_HPP
#define SPATML_COVARIANCE_HPP

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "spatml/dataset.hpp"
#include "spatml/errors.hpp"

namespace spatml {

/* Exponential covariance with a nugget:
 *
 *   C(d) = psill * exp(-d / range) + nugget * 1{same position, self block}
 *
 * The nugget acts on the diagonal of a self-covariance block only; it never
 * appears in cross blocks, even between sites at zero distance. */
struct CovarianceParams {
  double nugget = 0.0;  // tau^2
  double psill = 1.0;   // sigma^2 (partial sill)
  double range = 1.0;   // rho

  void validate() const;  // nugget,psill >= 0, nugget+psill > 0, range > 0
};

// Self block: psill*exp(-D/range) with nugget added on the diagonal.
Eigen::MatrixXd cov_matrix(const std::vector<Location>& sites,
                           const CovarianceParams& params);
// Cross block between two distinct site lists (no nugget anywhere).
Eigen::MatrixXd cross_cov_matrix(const std::vector<Location>& a,
                                 const std::vector<Location>& b,
                                 const CovarianceParams& params);

// Lower Cholesky factor of the self-covariance block over `sites`,
// including the near-singularity ridge described below.
Eigen::MatrixXd covariance_cholesky(const std::vector<Location>& sites,
                                    const CovarianceParams& params);

/* Gaussian negative log-likelihood of residuals r at the given parameters:
 *   (n/2) log 2*pi + (1/2) log|Sigma| + (1/2) r' Sigma^{-1} r
 * A ridge of 1e-10 * trace(Sigma)/n is added to the diagonal when the
 * nugget is below 1e-12, keeping the Cholesky factorization viable. */
double neg_log_likelihood(const Eigen::VectorXd& residuals,
                          const std::vector<Location>& sites,
                          const CovarianceParams& params);

/* Covariance parameters bound to the residual field they were fit on.
 * Holds the Cholesky factor of Sigma(theta) over the training sites and the
 * weight vector Sigma^{-1} r, which is all kriging needs. */
class FittedCovariance {
 public:
  FittedCovariance(CovarianceParams params, std::vector<Location> sites,
                   Eigen::VectorXd residuals);

  const CovarianceParams& params() const { return params_; }
  const std::vector<Location>& sites() const { return sites_; }
  const Eigen::VectorXd& residuals() const { return residuals_; }
  const Eigen::MatrixXd& cholesky_factor() const { return factor_; }  // lower
  const Eigen::VectorXd& kriging_weights() const { return alpha_; }   // Sigma^{-1} r

  // Simple-kriging predictor of the residual field at new sites:
  //   nu_hat = C(new, train) * Sigma^{-1} r
  Eigen::VectorXd krige(const std::vector<Location>& where) const;

  // Dense inverse of Sigma(theta); used by leave-one-out shortcuts.
  Eigen::MatrixXd precision() const;

 private:
  CovarianceParams params_;
  std::vector<Location> sites_;
  Eigen::VectorXd residuals_;
  Eigen::MatrixXd factor_;
  Eigen::VectorXd alpha_;
};

// Maximum-likelihood fit failed to converge; carries the best point found.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, CovarianceParams best, double nll)
      : Error(msg), best_params(best), best_nll(nll) {}
  const char* kind() const override { return "convergence"; }

  CovarianceParams best_params;
  double best_nll;
};

struct FitMlOptions {
  std::optional<CovarianceParams> init;  // default: variance split evenly, range = dmax/4
  double rel_tol = 1e-8;
  int max_iter = 500;
};

/* Maximum-likelihood covariance fit over (log nugget, log psill, log range).
 * Box bounds: variances in [1e-8, 1e3] * var(r), range in [1e-3, 10] * dmax;
 * out-of-box proposals are evaluated at the clamped point plus a quadratic
 * penalty on the excursion.  The returned fit never has a higher NLL than
 * the initial point (within 1e-9). */
FittedCovariance fit_ml(const Eigen::VectorXd& residuals,
                        const std::vector<Location>& sites,
                        const FitMlOptions& options = {});

}  // namespace spatml

#endif  // SPATML_COVARIANCE_HPP
