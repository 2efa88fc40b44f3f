#ifndef SPATML_UKPLS_HPP
#define SPATML_UKPLS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "spatml/covariance.hpp"
#include "spatml/model.hpp"
#include "spatml/pls.hpp"

namespace spatml {

struct UkPlsOptions {
  std::optional<int> components;  // unset: choose by inner cross-validation
  int selection_folds = 5;
  int selection_max = 10;         // scan cap; also clipped to min(p, n-1)
  std::uint64_t seed = 0;         // fold shuffling for component selection
  int max_rounds = 50;            // mean <-> covariance alternation cap
  double rel_tol = 1e-8;          // joint NLL relative improvement cutoff
  FitMlOptions ml;
};

/* Universal kriging on PLS scores.  Mean model: y = beta0 + T beta on the
 * transformed scale with T the PLS scores; residual field: exponential
 * covariance with nugget.  Fit alternates generalized-least-squares for
 * beta with maximum-likelihood covariance updates until the joint
 * likelihood stops improving. */
class UkPlsModel final : public AdditiveSpatialModel {
 public:
  UkPlsModel(Dataset train, PlsProjection projection, Eigen::VectorXd beta,
             FittedCovariance covariance, LinkFunction link = {});

  std::size_t component_count() const override { return 1; }
  double combiner_weight() const override { return 1.0; }
  Eigen::VectorXd component_mean(std::size_t k, const Eigen::MatrixXd& X) const override;
  const CovarianceParams& component_params(std::size_t k) const override;
  const Dataset& training_data() const override { return train_; }
  LinkFunction link() const override { return link_; }
  Eigen::VectorXd predict(const Eigen::MatrixXd& X,
                          const std::vector<Location>& sites) const override;
  std::string kind() const override { return "ukpls"; }

  const PlsProjection& projection() const { return projection_; }
  const Eigen::VectorXd& beta() const { return beta_; }  // [intercept, score coefs]
  const FittedCovariance& covariance() const { return cov_; }
  int components_used() const { return projection_.components; }

  // Mean term and kriging term separately, on the model scale.
  Eigen::VectorXd mean_term(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd kriging_term(const std::vector<Location>& sites) const;

 private:
  Dataset train_;
  PlsProjection projection_;
  Eigen::VectorXd beta_;
  FittedCovariance cov_;
  LinkFunction link_;
};

UkPlsModel fit_ukpls(const Dataset& data, const UkPlsOptions& options = {});

}  // namespace spatml

#endif  // SPATML_UKPLS_HPP
