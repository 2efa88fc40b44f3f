#ifndef SPATML_SYNTHETIC_HPP
#define SPATML_SYNTHETIC_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "spatml/covariance.hpp"
#include "spatml/dataset.hpp"

namespace spatml {

/* Known-mechanism generator used to check that the toolkit recovers
 * structure it should recover.  Covariates come in five correlated blocks,
 * each led by one "active" variable that enters the mean, padded with pure
 * noise columns.  The outcome stacks three pieces whose variances are
 * calibrated to a fixed 2.21 : 1.07 : 1.02 budget:
 *
 *   y = m(x_active) + eta(s) + eps,   eta ~ GP(0, exponential cov),
 *                                     eps ~ N(0, nugget_sd^2) iid.
 */

struct SyntheticCoefficients {
  double dist_major = -0.5;        // distance-to-road main effect
  double popden_squared = 0.2;     // population density enters squared
  double ndvi = -1.0;              // vegetation index
  double sqrt_mixed_urban = 0.5;   // mixed-urban share, square-root scale
  double residential = 0.5;        // residential share, linear
  double dist_ndvi = -0.25;        // road-distance x vegetation interaction
};

struct SyntheticSpec {
  int n = 300;
  int p = 30;                 // >= 5 * block_size; remainder are noise columns
  int block_size = 4;         // active column plus (block_size - 1) proxies
  double block_corr = 0.8;    // within-block correlation
  double domain_side = 1.5;   // sites uniform on [0, domain_side]^2
  CovarianceParams spatial{0.0, 4.0, 2.5};  // eta field; variance set by domain scale
  double nugget_sd = 1.0;
  double mean_scale = 1.0;    // multiplies m(x); set by calibrate_mean_scale
  SyntheticCoefficients coef;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<int> active_columns() const;  // leading column of each block
};

// Component variance budget the generator is calibrated against
// (mean : spatial : nugget).
inline constexpr std::array<double, 3> kSyntheticVarianceTargets{2.21, 1.07, 1.02};

struct SyntheticData {
  Dataset data;
  Eigen::VectorXd mean_part;
  Eigen::VectorXd spatial_part;
  Eigen::VectorXd nugget_part;
  std::vector<int> active_columns;
  std::array<double, 3> realized_variance{};  // sample variances of the parts
};

// Covariates and site draws alone (deterministic in spec.seed).
std::pair<Eigen::MatrixXd, std::vector<Location>> generate_covariates(const SyntheticSpec& spec);

// Mean surface m(x) (including mean_scale) for given covariates.
Eigen::VectorXd mean_surface(const SyntheticSpec& spec, const Eigen::MatrixXd& X);

// Full draw: covariates, outcome, and the three outcome components.
SyntheticData generate(const SyntheticSpec& spec);

/* Calibrate mean_scale so var(m) matches its target.  Monte Carlo over
 * independent replicates of size spec.n (the mean variance is sample-size
 * dependent through the min-shifted columns, so replicates mirror actual
 * use).  Returns a copy of spec with mean_scale updated. */
SyntheticSpec calibrate_mean_scale(const SyntheticSpec& spec, int mc_draws = 20000);

std::vector<std::string> synthetic_names(const SyntheticSpec& spec);

}  // namespace spatml

#endif  // SPATML_SYNTHETIC_HPP
