#ifndef SPATML_MODEL_HPP
#define SPATML_MODEL_HPP

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "spatml/covariance.hpp"
#include "spatml/dataset.hpp"

namespace spatml {

/* Common surface for models of the form
 *
 *   g(mu) = combiner_weight * sum_k [ mean_k(x) + spatial_k(s) ]
 *
 * i.e. an additive combination of components, each a fixed mean function
 * plus a stationary Gaussian residual field.  Universal kriging with PLS
 * scores is the single-component case; the spatial random forest is the
 * K-tree case with weight 1/K.  The importance machinery only talks to this
 * interface, so it works for both (and for test stand-ins). */
class AdditiveSpatialModel {
 public:
  virtual ~AdditiveSpatialModel() = default;

  virtual std::size_t component_count() const = 0;
  virtual double combiner_weight() const = 0;

  // Mean term of component k evaluated at new covariate rows (model scale).
  virtual Eigen::VectorXd component_mean(std::size_t k, const Eigen::MatrixXd& X) const = 0;
  // Covariance parameters of component k's residual field.
  virtual const CovarianceParams& component_params(std::size_t k) const = 0;

  virtual const Dataset& training_data() const = 0;
  virtual LinkFunction link() const = 0;

  // Full prediction at new rows/sites, mapped back to the original outcome
  // scale (link inverse, then outcome transform inverse).
  virtual Eigen::VectorXd predict(const Eigen::MatrixXd& X,
                                  const std::vector<Location>& sites) const = 0;

  virtual std::string kind() const = 0;
};

}  // namespace spatml

#endif  // SPATML_MODEL_HPP
