#include "spatml/synthetic.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <random>
#include <string>
#include <utility>

namespace spatml {

namespace {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stream tags keep the covariate, outcome, and calibration draws independent.
constexpr std::uint64_t kCovariateStream = 0x636f7661ULL;
constexpr std::uint64_t kOutcomeStream = 0x6f757463ULL;
constexpr std::uint64_t kCalibrationStream = 0x63616c69ULL;

Eigen::VectorXd normal_vector(std::mt19937_64& rng, long n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (long i = 0; i < n; ++i) v(i) = gauss(rng);
  return v;
}

double sample_variance(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

// Column roles within the active set, in block order.
enum ActiveRole { kDistMajor = 0, kPopden = 1, kNdvi = 2, kMixedUrban = 3, kResidential = 4 };

}  // namespace

void SyntheticSpec::validate() const {
  if (n < 3) throw ConfigError("synthetic spec needs n >= 3");
  if (block_size < 1) throw ConfigError("block_size must be at least 1");
  if (p < 5 * block_size)
    throw ConfigError("synthetic spec needs p >= 5 * block_size to hold the active blocks");
  if (block_corr < 0.0 || block_corr >= 1.0)
    throw ConfigError("block correlation must lie in [0, 1)");
  if (domain_side <= 0.0) throw ConfigError("domain side must be positive");
  if (nugget_sd < 0.0) throw ConfigError("nugget standard deviation must be nonnegative");
  if (!(mean_scale >= 0.0)) throw ConfigError("mean scale must be nonnegative");
  if (spatial.psill > 0.0 || spatial.nugget > 0.0) spatial.validate();
}

std::vector<int> SyntheticSpec::active_columns() const {
  std::vector<int> idx(5);
  for (int b = 0; b < 5; ++b) idx[static_cast<std::size_t>(b)] = b * block_size;
  return idx;
}

std::vector<std::string> synthetic_names(const SyntheticSpec& spec) {
  static const char* leads[5] = {"dist_a1", "popden", "ndvi", "lu_mixed", "lu_resid"};
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(spec.p));
  for (int b = 0; b < 5; ++b) {
    names.emplace_back(leads[b]);
    for (int c = 1; c < spec.block_size; ++c)
      names.emplace_back(std::string(leads[b]) + "_p" + std::to_string(c));
  }
  for (int j = 5 * spec.block_size; j < spec.p; ++j)
    names.emplace_back("noise_" + std::to_string(j - 5 * spec.block_size + 1));
  return names;
}

std::pair<Eigen::MatrixXd, std::vector<Location>> generate_covariates(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(mix_seed(spec.seed ^ kCovariateStream));

  std::vector<Location> sites;
  sites.reserve(static_cast<std::size_t>(spec.n));
  std::uniform_real_distribution<double> unif(0.0, spec.domain_side);
  for (int i = 0; i < spec.n; ++i) {
    const double x = unif(rng);
    const double y = unif(rng);
    sites.push_back(Location{i, x, y, Metric::euclidean});
  }

  Eigen::MatrixXd X(spec.n, spec.p);
  const double shared = std::sqrt(spec.block_corr);
  const double own = std::sqrt(1.0 - spec.block_corr);
  for (int b = 0; b < 5; ++b) {
    const Eigen::VectorXd g = normal_vector(rng, spec.n);
    for (int c = 0; c < spec.block_size; ++c)
      X.col(b * spec.block_size + c) = shared * g + own * normal_vector(rng, spec.n);
  }
  for (int j = 5 * spec.block_size; j < spec.p; ++j) X.col(j) = normal_vector(rng, spec.n);

  // Density and mixed-urban columns are used under square root / square in
  // the mean model; shift them to start at zero.
  const std::vector<int> active = spec.active_columns();
  for (int role : {kPopden, kMixedUrban}) {
    const int j = active[static_cast<std::size_t>(role)];
    X.col(j).array() -= X.col(j).minCoeff();
  }
  return {std::move(X), std::move(sites)};
}

Eigen::VectorXd mean_surface(const SyntheticSpec& spec, const Eigen::MatrixXd& X) {
  if (X.cols() < 5 * spec.block_size)
    throw DimensionError("covariate matrix lacks the active blocks");
  const std::vector<int> active = spec.active_columns();
  const auto dist = X.col(active[kDistMajor]).array();
  const auto popden = X.col(active[kPopden]).array();
  const auto ndvi = X.col(active[kNdvi]).array();
  const auto mixed = X.col(active[kMixedUrban]).array();
  const auto resid = X.col(active[kResidential]).array();
  if ((mixed < 0.0).any())
    throw DomainError("mixed-urban column must be nonnegative for its square root");

  const SyntheticCoefficients& c = spec.coef;
  return spec.mean_scale *
         (c.dist_major * dist + c.popden_squared * popden.square() + c.ndvi * ndvi +
          c.sqrt_mixed_urban * mixed.sqrt() + c.residential * resid +
          c.dist_ndvi * dist * ndvi);
}

SyntheticData generate(const SyntheticSpec& spec) {
  auto [X, sites] = generate_covariates(spec);
  std::mt19937_64 rng(mix_seed(spec.seed ^ kOutcomeStream));

  const Eigen::VectorXd mean_part = mean_surface(spec, X);

  Eigen::VectorXd spatial_part;
  if (spec.spatial.psill > 0.0 || spec.spatial.nugget > 0.0) {
    const Eigen::MatrixXd L = covariance_cholesky(sites, spec.spatial);
    spatial_part = L.triangularView<Eigen::Lower>() * normal_vector(rng, spec.n);
  } else {
    normal_vector(rng, spec.n);  // keep the stream layout fixed
    spatial_part = Eigen::VectorXd::Zero(spec.n);
  }
  const Eigen::VectorXd nugget_part = spec.nugget_sd * normal_vector(rng, spec.n);

  const Eigen::VectorXd y = mean_part + spatial_part + nugget_part;

  SyntheticData out{
      Dataset(X, y, sites, synthetic_names(spec)),
      mean_part,
      spatial_part,
      nugget_part,
      spec.active_columns(),
      {sample_variance(mean_part), sample_variance(spatial_part), sample_variance(nugget_part)}};
  return out;
}

SyntheticSpec calibrate_mean_scale(const SyntheticSpec& spec, int mc_draws) {
  spec.validate();
  if (mc_draws < 10000) throw ConfigError("calibration needs at least 1e4 Monte Carlo draws");

  const int replicates = (mc_draws + spec.n - 1) / spec.n;
  double var_sum = 0.0;
  for (int r = 0; r < replicates; ++r) {
    SyntheticSpec draw = spec;
    draw.seed = mix_seed(spec.seed ^ kCalibrationStream ^ (0x1000003ULL * (r + 1)));
    const auto [X, sites] = generate_covariates(draw);
    var_sum += sample_variance(mean_surface(spec, X));
  }
  const double var_mean = var_sum / replicates;
  if (var_mean <= 0.0)
    throw DegenerateInputError("mean surface has zero variance; nothing to calibrate");

  SyntheticSpec scaled = spec;
  scaled.mean_scale = spec.mean_scale * std::sqrt(kSyntheticVarianceTargets[0] / var_mean);
  return scaled;
}

}  // namespace spatml
