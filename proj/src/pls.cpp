#include "spatml/pls.hpp"

#include <cmath>
#include <string>

namespace spatml {

Eigen::MatrixXd PlsProjection::project(const Eigen::MatrixXd& X) const {
  if (X.cols() != center.size())
    throw DimensionError("projection expects " + std::to_string(center.size()) +
                         " covariates, got " + std::to_string(X.cols()));
  return ((X.rowwise() - center.transpose()).array().rowwise() /
          scale.transpose().array()).matrix() * weights;
}

/* NIPALS PLS1 with y-deflation.  Weight vectors w_a maximize covariance
 * between the standardized-X residual and the current y residual; the
 * returned map H = W (P'W)^{-1} reproduces deflated training scores from
 * raw standardized data in one multiply. */
PlsProjection fit_pls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int l) {
  const long n = X.rows();
  const long p = X.cols();
  if (y.size() != n) throw DimensionError("fit_pls: outcome length mismatch");
  if (n < 2) throw DimensionError("fit_pls: need at least 2 rows");
  if (l < 1 || l > std::min(p, n - 1))
    throw ConfigError("fit_pls: component count must lie in [1, min(p, n-1)]");

  PlsProjection proj;
  proj.center = X.colwise().mean();
  proj.scale = Eigen::VectorXd(p);
  for (long j = 0; j < p; ++j) {
    const double sd = std::sqrt((X.col(j).array() - proj.center(j)).square().sum() /
                                static_cast<double>(n - 1));
    if (sd <= 0.0)
      throw DegenerateInputError("fit_pls: covariate column " + std::to_string(j) +
                                 " has zero variance");
    proj.scale(j) = sd;
  }

  Eigen::MatrixXd E = (X.rowwise() - proj.center.transpose()).array().rowwise() /
                      proj.scale.transpose().array();
  Eigen::VectorXd f = y.array() - y.mean();
  const double f0 = f.norm();
  if (f0 <= 0.0) throw DegenerateInputError("fit_pls: outcome is constant");

  Eigen::MatrixXd W(p, l), P(p, l);
  int kept = 0;
  for (int a = 0; a < l; ++a) {
    Eigen::VectorXd w = E.transpose() * f;
    const double wn = w.norm();
    if (a == 0 && wn <= 1e-12 * f0 * std::sqrt(static_cast<double>(n)))
      throw DegenerateInputError("fit_pls: covariates carry no covariance with the outcome");
    if (wn <= 1e-12 * f0) break;  // response fully explained; truncate
    w /= wn;
    const Eigen::VectorXd t = E * w;
    const double tt = t.squaredNorm();
    if (tt <= 1e-24) break;
    const Eigen::VectorXd pl = E.transpose() * t / tt;
    const double q = f.dot(t) / tt;
    E -= t * pl.transpose();
    f -= q * t;
    W.col(a) = w;
    P.col(a) = pl;
    ++kept;
  }

  W.conservativeResize(p, kept);
  P.conservativeResize(p, kept);
  // P'W is unit upper triangular in exact arithmetic, hence invertible.
  proj.weights = W * (P.transpose() * W).inverse();
  proj.components = kept;
  return proj;
}

}  // namespace spatml
