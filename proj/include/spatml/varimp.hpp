#ifndef SPATML_VARIMP_HPP
#define SPATML_VARIMP_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "spatml/dataset.hpp"
#include "spatml/model.hpp"

namespace spatml {

/* Quantile-profile variable importance.
 *
 * For covariate j held at its q_l-th empirical quantile everywhere, each
 * training site i gets a leave-one-out linear predictor: the component mean
 * under the substituted matrix plus a kriging estimate of the component
 * residual at s_i computed without observation i.  Averaging over sites
 * (and components, with the model's combiner weight) and mapping through
 * the inverse link and inverse outcome transform gives mu_bar(j, l) — the
 * model's average prediction had covariate j been pinned at that quantile.
 * The trajectory across quantile levels is the importance profile. */

enum class RefitPolicy {
  full_refit,    // re-estimate covariance parameters for every left-out site
  weights_only,  // keep fitted parameters; recompute kriging weights exactly
};

// full_refit up to n = 300, weights_only beyond.
RefitPolicy default_policy(long n);

struct QuantileGrid {
  std::vector<double> levels;  // strictly increasing, within [0, 1]

  void validate() const;
  static QuantileGrid quartiles() { return {{0.25, 0.50, 0.75}}; }
};

// Empirical quantile: nearest-order-statistic, sorted value at 1-based
// index ceil(q*n) (index 1 when q = 0).
double empirical_quantile(const Eigen::VectorXd& x, double q);

// Copy of X with column j pinned to `value` at every row.
Eigen::MatrixXd substitute_quantile(const Eigen::MatrixXd& X, int j, double value);

struct ImportanceWarning {
  int site = 0;
  int component = 0;
  int covariate = 0;
  int level = 0;
  std::string message;
};

struct ImportanceTrajectory {
  std::vector<std::string> names;   // covariate names, row order
  std::vector<double> levels;       // quantile levels, column order
  Eigen::MatrixXd quantile_values;  // p x m, empirical quantiles of each column
  Eigen::MatrixXd eta_bar;          // p x m, averaged linear predictor (model scale)
  Eigen::MatrixXd mu_bar;           // p x m, back-transformed to outcome scale
  RefitPolicy policy = RefitPolicy::full_refit;
  std::vector<ImportanceWarning> warnings;  // per-site refit fallbacks
};

/* Run the full profile over every covariate and grid level.  `data` must be
 * the dataset the model was trained on (checked); it is the source of the
 * substituted matrices and the empirical quantiles. */
ImportanceTrajectory compute_importance(const AdditiveSpatialModel& model, const Dataset& data,
                                        const QuantileGrid& grid, RefitPolicy policy,
                                        unsigned workers = 1);

/* Leave-one-out linear predictors for one component under a substituted
 * covariate matrix: eta_i = zeta_i + nu_i where zeta = component mean under
 * X_sub and nu_i kriges the updated residual field to site i from the other
 * n-1 sites.  y_model is the training outcome on the model scale, passed
 * explicitly so tests can verify site i's result never touches y_i.
 * `precision` (Sigma^{-1} for this component, weights_only path) may be
 * passed to avoid refactorizing per call; warnings collect per-site refit
 * fallbacks (fields covariate/level are left for the caller to fill). */
Eigen::VectorXd loo_linear_predictor(const AdditiveSpatialModel& model, std::size_t component,
                                     const Eigen::MatrixXd& X_sub, const Eigen::VectorXd& y_model,
                                     RefitPolicy policy,
                                     std::vector<ImportanceWarning>* warnings = nullptr,
                                     const Eigen::MatrixXd* precision = nullptr);

/* Quantile contrasts of the importance profile (quartile grids only):
 * d21 = mu(q2) - mu(q1), d32 = mu(q3) - mu(q2), d31 = d21 + d32.
 * Ranking orders covariates by |d31| descending, ties by column index. */
struct ContrastRow {
  int column = 0;
  std::string name;
  double d21 = 0.0;
  double d32 = 0.0;
  double d31 = 0.0;
};

struct ContrastReport {
  std::vector<ContrastRow> rows;  // in covariate order
  std::vector<int> ranking;       // column indices, most important first
};

ContrastReport quantile_contrasts(const ImportanceTrajectory& trajectory);

}  // namespace spatml

#endif  // SPATML_VARIMP_HPP
