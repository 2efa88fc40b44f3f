#ifndef SPATML_PLS_HPP
#define SPATML_PLS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "spatml/dataset.hpp"

namespace spatml {

/* Partial-least-squares projection fitted by NIPALS on standardized
 * covariates.  `weights` maps standardized X to scores in one step:
 *   T = ((X - center) / scale) * weights
 * (weights = W (P'W)^{-1}, so scores of new data match the deflation-based
 * training scores exactly). */
struct PlsProjection {
  Eigen::VectorXd center;   // column means
  Eigen::VectorXd scale;    // column standard deviations (ddof = 1)
  Eigen::MatrixXd weights;  // p x l
  int components = 0;

  Eigen::MatrixXd project(const Eigen::MatrixXd& X) const;
};

/* Fit an l-component PLS1 projection.  Scores are mutually orthogonal in
 * sample; requesting more components than the data support (exactly zero
 * residual covariance left) truncates at the last informative one. */
PlsProjection fit_pls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int l);

struct ComponentSelection {
  int components = 0;
  double best_r2 = 0.0;
  std::vector<double> r2_by_count;  // mean out-of-fold R^2 for l = 1..l_max
  bool no_signal = false;           // best mean R^2 <= 0
};

/* Choose the PLS component count for the spatial regression by k-fold
 * cross-validation, scanning l = 1..l_max and keeping the smallest l that
 * attains the best mean out-of-fold R^2. */
ComponentSelection select_components_cv(const Dataset& data, int l_max, int folds,
                                        std::uint64_t seed);

}  // namespace spatml

#endif  // SPATML_PLS_HPP
