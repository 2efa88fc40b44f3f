#ifndef SPATML_DATASET_HPP
#define SPATML_DATASET_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "spatml/errors.hpp"

namespace spatml {

enum class Metric { euclidean, haversine_km };

/* A georeferenced observation site.  For haversine_km, x is longitude and
 * y is latitude, both in degrees; distances come out in kilometres. */
struct Location {
  long id = 0;
  double x = 0.0;
  double y = 0.0;
  Metric metric = Metric::euclidean;
};

// Distance between two sites sharing a metric.
double distance(const Location& a, const Location& b);

Eigen::MatrixXd pairwise_distances(const std::vector<Location>& sites);
Eigen::MatrixXd cross_distances(const std::vector<Location>& a,
                                const std::vector<Location>& b);

/* Outcome transforms.  Models operate on the transformed scale; predictions
 * and importance summaries are mapped back before reporting. */
enum class Transform { identity, log, sqrt };

Transform transform_from_string(const std::string& s);
std::string to_string(Transform t);

Eigen::VectorXd apply_transform(const Eigen::VectorXd& y, Transform t);
Eigen::VectorXd invert_transform(const Eigen::VectorXd& y, Transform t);
double invert_transform(double value, Transform t);

/* Link between the additive predictor and the (transformed-scale) mean.
 * Identity for every model in this library today; log is wired through so
 * count-like outcomes can reuse the same importance machinery. */
enum class LinkKind { identity, log };

struct LinkFunction {
  LinkKind kind = LinkKind::identity;

  double apply(double mu) const;    // g(mu)
  double invert(double eta) const;  // g^{-1}(eta)
};

/* Covariates, outcome, and site coordinates, validated once at the edge so
 * model code can assume shapes line up and values are finite. */
class Dataset {
 public:
  Dataset(Eigen::MatrixXd X, Eigen::VectorXd y, std::vector<Location> sites,
          std::vector<std::string> names, Transform transform = Transform::identity);

  long n() const { return X_.rows(); }
  long p() const { return X_.cols(); }

  const Eigen::MatrixXd& covariates() const { return X_; }
  const Eigen::VectorXd& outcome() const { return y_; }  // raw scale
  const std::vector<Location>& sites() const { return sites_; }
  const std::vector<std::string>& names() const { return names_; }
  Transform transform() const { return transform_; }

  // Outcome on the model scale (transform applied).
  Eigen::VectorXd model_outcome() const { return apply_transform(y_, transform_); }

  // Row subsets (copying); keep splits both by index list.
  Dataset subset(const std::vector<int>& rows) const;
  // Column subset: retain the listed covariates (outcome/sites unchanged).
  Dataset retain_columns(const std::vector<int>& cols) const;

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  std::vector<Location> sites_;
  std::vector<std::string> names_;
  Transform transform_;
};

}  // namespace spatml

#endif  // SPATML_DATASET_HPP
