#include "spatml/ukpls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "spatml/eval.hpp"

namespace spatml {

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& T) {
  Eigen::MatrixXd Z(T.rows(), T.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(T.cols()) = T;
  return Z;
}

// GLS coefficients via whitening with the lower Cholesky factor of Sigma.
Eigen::VectorXd gls_beta(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                         const Eigen::MatrixXd& chol_lower) {
  const auto L = chol_lower.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd Zw = L.solve(Z);
  const Eigen::VectorXd yw = L.solve(y);
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Zw);
  if (qr.rank() < Z.cols())
    throw NumericalRankError("score design is rank deficient in GLS step");
  return qr.solve(yw);
}

}  // namespace

UkPlsModel::UkPlsModel(Dataset train, PlsProjection projection, Eigen::VectorXd beta,
                       FittedCovariance covariance, LinkFunction link)
    : train_(std::move(train)), projection_(std::move(projection)), beta_(std::move(beta)),
      cov_(std::move(covariance)), link_(link) {
  if (beta_.size() != projection_.components + 1)
    throw DimensionError("beta length must be component count + 1 (intercept)");
  if (!beta_.allFinite()) throw DomainError("beta contains NaN or Inf");
}

Eigen::VectorXd UkPlsModel::mean_term(const Eigen::MatrixXd& X) const {
  return with_intercept(projection_.project(X)) * beta_;
}

Eigen::VectorXd UkPlsModel::kriging_term(const std::vector<Location>& sites) const {
  return cov_.krige(sites);
}

Eigen::VectorXd UkPlsModel::component_mean(std::size_t k, const Eigen::MatrixXd& X) const {
  if (k != 0) throw DimensionError("universal kriging model has a single component");
  return mean_term(X);
}

const CovarianceParams& UkPlsModel::component_params(std::size_t k) const {
  if (k != 0) throw DimensionError("universal kriging model has a single component");
  return cov_.params();
}

Eigen::VectorXd UkPlsModel::predict(const Eigen::MatrixXd& X,
                                    const std::vector<Location>& sites) const {
  if (static_cast<std::size_t>(X.rows()) != sites.size())
    throw DimensionError("covariate rows do not match prediction sites");
  Eigen::VectorXd eta = mean_term(X) + kriging_term(sites);
  for (long i = 0; i < eta.size(); ++i) eta(i) = link_.invert(eta(i));
  return invert_transform(eta, train_.transform());
}

UkPlsModel fit_ukpls(const Dataset& data, const UkPlsOptions& options) {
  int l;
  if (options.components) {
    l = *options.components;
  } else {
    const int l_max = static_cast<int>(std::min<long>(
        {data.p(), data.n() - 1, options.selection_max}));
    l = select_components_cv(data, l_max, options.selection_folds, options.seed).components;
  }

  const Eigen::VectorXd y = data.model_outcome();
  const PlsProjection projection = fit_pls(data.covariates(), y, l);
  const Eigen::MatrixXd Z = with_intercept(projection.project(data.covariates()));

  /* Block-coordinate ML: beta by GLS given theta, theta by covariance ML
   * given beta, until the joint NLL stops improving.  The first beta comes
   * from ordinary least squares (theta = identity-scale start). */
  Eigen::VectorXd beta = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(Z).solve(y);
  FitMlOptions ml = options.ml;
  double prev_nll = std::numeric_limits<double>::infinity();
  std::optional<FittedCovariance> fitted;
  for (int round = 0; round < std::max(1, options.max_rounds); ++round) {
    fitted = fit_ml(y - Z * beta, data.sites(), ml);
    ml.init = fitted->params();  // warm-start subsequent rounds
    beta = gls_beta(Z, y, fitted->cholesky_factor());
    const double nll = neg_log_likelihood(y - Z * beta, data.sites(), fitted->params());
    if (prev_nll - nll < options.rel_tol * (std::abs(nll) + 1.0)) break;
    prev_nll = nll;
  }

  FittedCovariance cov(fitted->params(), data.sites(), y - Z * beta);
  return UkPlsModel(data, projection, std::move(beta), std::move(cov));
}

ComponentSelection select_components_cv(const Dataset& data, int l_max, int folds,
                                        std::uint64_t seed) {
  if (folds < 2) throw ConfigError("component selection needs at least 2 folds");
  const int cap = static_cast<int>(std::min<long>(data.p(), data.n() - 1));
  if (l_max < 1 || l_max > cap)
    throw ConfigError("l_max must lie in [1, min(p, n-1)]");

  const std::vector<int> fold_of = assign_folds(data.n(), folds, seed);
  const double center = data.outcome().mean();

  ComponentSelection selection;
  selection.best_r2 = -std::numeric_limits<double>::infinity();
  for (int l = 1; l <= l_max; ++l) {
    double sum_r2 = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<int> train_rows, test_rows;
      for (long i = 0; i < data.n(); ++i)
        (fold_of[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(
            static_cast<int>(i));
      const Dataset train = data.subset(train_rows);
      const Dataset test = data.subset(test_rows);

      UkPlsOptions opt;
      opt.components = l;
      const UkPlsModel model = fit_ukpls(train, opt);
      const Eigen::VectorXd pred = model.predict(test.covariates(), test.sites());
      sum_r2 += r_squared(test.outcome(), pred, center);
    }
    const double mean_r2 = sum_r2 / folds;
    selection.r2_by_count.push_back(mean_r2);
    if (mean_r2 > selection.best_r2) {  // strict: ties keep the smaller l
      selection.best_r2 = mean_r2;
      selection.components = l;
    }
  }
  selection.no_signal = selection.best_r2 <= 0.0;
  return selection;
}

}  // namespace spatml
