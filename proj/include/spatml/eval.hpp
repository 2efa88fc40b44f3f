#ifndef SPATML_EVAL_HPP
#define SPATML_EVAL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "spatml/dataset.hpp"
#include "spatml/model.hpp"

namespace spatml {

/* Pre-modeling covariate screen.  Rules, applied in this order per column
 * (the first that fires is the recorded reason):
 *   variability  - most frequent value accounts for > 80% of rows
 *   outliers     - more than 2% of rows farther than 5 IQRs from the median
 *   landuse      - a land-use share column whose maximum is below 0.10
 */
struct ScreenExclusion {
  int column = 0;
  std::string name;
  std::string rule;  // "variability" | "outliers" | "landuse"
};

struct ScreenResult {
  std::vector<int> retained;
  std::vector<ScreenExclusion> excluded;
};

ScreenResult screen_covariates(const Eigen::MatrixXd& X,
                               const std::vector<std::string>& names,
                               const std::vector<bool>& landuse);

// R^2 = 1 - SSE/SST with SST about mean(y_true).
double r_squared(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);
// Variant with the centering mean supplied (per-fold R^2 against the
// full-dataset mean).
double r_squared(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred,
                 double center);

// Anything that can fit an AdditiveSpatialModel on a dataset; lets the
// cross-validation loop stay model-agnostic.
class ModelFactory {
 public:
  virtual ~ModelFactory() = default;
  virtual std::unique_ptr<AdditiveSpatialModel> fit(const Dataset& train) const = 0;
  virtual std::string name() const = 0;
};

// Seeded fold assignment: shuffle rows, deal round-robin (near-equal sizes).
std::vector<int> assign_folds(long n, int folds, std::uint64_t seed);

struct CvResult {
  std::vector<int> fold_of_row;
  Eigen::VectorXd predictions;     // out-of-fold, original outcome scale
  Eigen::VectorXd errors;          // y - prediction
  double r2 = 0.0;                 // pooled out-of-fold R^2
  std::vector<double> fold_r2;     // per fold, centered at the full-data mean
};

/* k-fold cross-validation with seeded fold assignment (shuffle, then
 * round-robin).  Each fold refits from scratch via the factory.  Fold fits
 * may run on several workers; outputs are worker-count invariant. */
CvResult kfold_cv(const ModelFactory& factory, const Dataset& data, int folds,
                  std::uint64_t seed, unsigned workers = 1);

}  // namespace spatml

#endif  // SPATML_EVAL_HPP
