#include "spatml/varimp.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "spatml/covariance.hpp"
#include "spatml/parallel.hpp"

namespace spatml {

RefitPolicy default_policy(long n) {
  return n <= 300 ? RefitPolicy::full_refit : RefitPolicy::weights_only;
}

void QuantileGrid::validate() const {
  if (levels.empty()) throw ConfigError("quantile grid must not be empty");
  double prev = -1.0;
  for (double q : levels) {
    if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level outside [0, 1]");
    if (q <= prev) throw ConfigError("quantile levels must be strictly increasing");
    prev = q;
  }
}

double empirical_quantile(const Eigen::VectorXd& x, double q) {
  if (x.size() == 0) throw DimensionError("empirical quantile of an empty vector");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level outside [0, 1]");
  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  // nearest order statistic: 1-based index ceil(q*n), with a guard against
  // roundoff in q*n (e.g. 0.3 * 10 slightly above 3)
  const double pos = q * static_cast<double>(x.size());
  long idx = static_cast<long>(std::ceil(pos - 1e-9));
  idx = std::max<long>(1, std::min<long>(idx, x.size()));
  return sorted[static_cast<std::size_t>(idx - 1)];
}

Eigen::MatrixXd substitute_quantile(const Eigen::MatrixXd& X, int j, double value) {
  if (j < 0 || j >= X.cols()) throw DimensionError("substitution column out of range");
  Eigen::MatrixXd out = X;
  out.col(j).setConstant(value);
  return out;
}

namespace {

// Kriging estimate at site i from the other n-1 sites, with theta fixed,
// via the partitioned-inverse identity
//   nu_i = -(1/A_ii) * sum_{j != i} A_ij r_j,     A = Sigma^{-1}.
// The sum skips index i explicitly: site i's own residual is never read.
double loo_krige_from_precision(const Eigen::MatrixXd& A, const Eigen::VectorXd& r, long i) {
  double acc = 0.0;
  for (long j = 0; j < r.size(); ++j)
    if (j != i) acc += A(i, j) * r(j);
  return -acc / A(i, i);
}

Eigen::MatrixXd precision_matrix(const std::vector<Location>& sites,
                                 const CovarianceParams& params) {
  const Eigen::MatrixXd L = covariance_cholesky(sites, params);
  const long n = static_cast<long>(sites.size());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  return L.triangularView<Eigen::Lower>().transpose().solve(
      L.triangularView<Eigen::Lower>().solve(I));
}

}  // namespace

Eigen::VectorXd loo_linear_predictor(const AdditiveSpatialModel& model, std::size_t component,
                                     const Eigen::MatrixXd& X_sub, const Eigen::VectorXd& y_model,
                                     RefitPolicy policy, std::vector<ImportanceWarning>* warnings,
                                     const Eigen::MatrixXd* precision) {
  const Dataset& train = model.training_data();
  const std::vector<Location>& sites = train.sites();
  const long n = train.n();
  if (X_sub.rows() != n || X_sub.cols() != train.p())
    throw DimensionError("substituted matrix shape does not match training data");
  if (y_model.size() != n) throw DimensionError("outcome length does not match training data");

  const Eigen::VectorXd zeta = model.component_mean(component, X_sub);
  const Eigen::VectorXd resid = y_model - zeta;
  const CovarianceParams& theta = model.component_params(component);

  Eigen::VectorXd nu(n);
  if (policy == RefitPolicy::weights_only) {
    Eigen::MatrixXd local;
    if (precision == nullptr) {
      local = precision_matrix(sites, theta);
      precision = &local;
    }
    for (long i = 0; i < n; ++i) nu(i) = loo_krige_from_precision(*precision, resid, i);
    return zeta + nu;
  }

  // full_refit: re-estimate theta per left-out site on the n-1 updated
  // residuals, warm-started at the model's fit.
  std::vector<Location> rest(sites.begin() + 1, sites.end());
  Eigen::VectorXd r_rest(n - 1);
  for (long i = 0; i < n; ++i) {
    for (long j = 0, k = 0; j < n; ++j) {
      if (j == i) continue;
      rest[static_cast<std::size_t>(k)] = sites[static_cast<std::size_t>(j)];
      r_rest(k) = resid(j);
      ++k;
    }
    const std::vector<Location> target{sites[static_cast<std::size_t>(i)]};
    try {
      FitMlOptions ml;
      ml.init = theta;
      nu(i) = fit_ml(r_rest, rest, ml).krige(target)(0);
    } catch (const Error& refit_error) {
      if (warnings)
        warnings->push_back({static_cast<int>(i), static_cast<int>(component), -1, -1,
                             std::string("covariance re-fit failed (") + refit_error.what() +
                                 "); kept the model's parameters for this site"});
      try {
        nu(i) = FittedCovariance(theta, rest, r_rest).krige(target)(0);
      } catch (const Error&) {
        nu(i) = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return zeta + nu;
}

ImportanceTrajectory compute_importance(const AdditiveSpatialModel& model, const Dataset& data,
                                        const QuantileGrid& grid, RefitPolicy policy,
                                        unsigned workers) {
  grid.validate();
  const Dataset& train = model.training_data();
  if (train.n() != data.n() || train.p() != data.p())
    throw DimensionError("model was not trained on a dataset of this shape");
  if ((train.outcome().array() != data.outcome().array()).any())
    throw ConfigError("dataset outcome differs from the model's training outcome");
  for (long i = 0; i < data.n(); ++i) {
    const Location& a = train.sites()[static_cast<std::size_t>(i)];
    const Location& b = data.sites()[static_cast<std::size_t>(i)];
    if (a.id != b.id || a.x != b.x || a.y != b.y)
      throw ConfigError("dataset sites differ from the model's training sites");
  }

  const long p = data.p();
  const long m = static_cast<long>(grid.levels.size());
  const long K = static_cast<long>(model.component_count());
  const Eigen::VectorXd y_model = data.model_outcome();
  const double weight = model.combiner_weight();

  ImportanceTrajectory traj;
  traj.names = data.names();
  traj.levels = grid.levels;
  traj.policy = policy;
  traj.quantile_values.resize(p, m);
  traj.eta_bar.resize(p, m);
  traj.mu_bar.resize(p, m);
  for (long j = 0; j < p; ++j)
    for (long l = 0; l < m; ++l)
      traj.quantile_values(j, l) =
          empirical_quantile(data.covariates().col(j), grid.levels[static_cast<std::size_t>(l)]);

  // Sigma^{-1} per component, shared across all (j, l) cells.
  std::vector<Eigen::MatrixXd> precisions;
  if (policy == RefitPolicy::weights_only) {
    precisions.resize(static_cast<std::size_t>(K));
    for (long k = 0; k < K; ++k)
      precisions[static_cast<std::size_t>(k)] =
          precision_matrix(data.sites(), model.component_params(static_cast<std::size_t>(k)));
  }

  // One work item per (covariate, level) cell; each cell owns its slots, so
  // any worker count produces identical results.
  std::vector<std::vector<ImportanceWarning>> cell_warnings(static_cast<std::size_t>(p * m));
  parallel_for(static_cast<std::size_t>(p * m), workers, [&](std::size_t cell) {
    const long j = static_cast<long>(cell) / m;
    const long l = static_cast<long>(cell) % m;
    const Eigen::MatrixXd X_sub =
        substitute_quantile(data.covariates(), static_cast<int>(j), traj.quantile_values(j, l));

    double sum = 0.0;
    std::vector<ImportanceWarning>& warnings = cell_warnings[cell];
    for (long k = 0; k < K; ++k) {
      const std::size_t before = warnings.size();
      const Eigen::VectorXd eta = loo_linear_predictor(
          model, static_cast<std::size_t>(k), X_sub, y_model, policy, &warnings,
          policy == RefitPolicy::weights_only ? &precisions[static_cast<std::size_t>(k)]
                                              : nullptr);
      for (std::size_t w = before; w < warnings.size(); ++w) {
        warnings[w].covariate = static_cast<int>(j);
        warnings[w].level = static_cast<int>(l);
      }
      sum += eta.sum();
    }
    traj.eta_bar(j, l) = weight * sum / static_cast<double>(data.n());
    traj.mu_bar(j, l) =
        invert_transform(model.link().invert(traj.eta_bar(j, l)), data.transform());
  });

  for (std::vector<ImportanceWarning>& w : cell_warnings)
    traj.warnings.insert(traj.warnings.end(), w.begin(), w.end());
  if (!traj.eta_bar.allFinite() || !traj.mu_bar.allFinite())
    throw NumericalRankError("importance trajectory contains non-finite entries");
  return traj;
}

ContrastReport quantile_contrasts(const ImportanceTrajectory& traj) {
  if (traj.mu_bar.cols() != 3 || traj.levels.size() != 3)
    throw ConfigError("contrasts need a three-level quantile grid");

  ContrastReport report;
  const long p = traj.mu_bar.rows();
  report.rows.reserve(static_cast<std::size_t>(p));
  for (long j = 0; j < p; ++j) {
    ContrastRow row;
    row.column = static_cast<int>(j);
    row.name = traj.names[static_cast<std::size_t>(j)];
    row.d21 = traj.mu_bar(j, 1) - traj.mu_bar(j, 0);
    row.d32 = traj.mu_bar(j, 2) - traj.mu_bar(j, 1);
    row.d31 = row.d21 + row.d32;  // identity d31 = d21 + d32 holds exactly
    report.rows.push_back(std::move(row));
  }

  report.ranking.resize(static_cast<std::size_t>(p));
  std::iota(report.ranking.begin(), report.ranking.end(), 0);
  std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](int a, int b) {
    const double va = std::abs(report.rows[static_cast<std::size_t>(a)].d31);
    const double vb = std::abs(report.rows[static_cast<std::size_t>(b)].d31);
    return va != vb ? va > vb : a < b;
  });
  return report;
}

}  // namespace spatml
