#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "spatml/covariance.hpp"
#include "spatml/ukpls.hpp"

using namespace spatml;

namespace {

std::vector<std::string> make_names(int p) {
  std::vector<std::string> names;
  for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

// Dataset whose outcome is a linear mean plus (optionally) a smooth field.
struct SpatialDraw {
  Dataset data;
  Eigen::VectorXd mean;
  Eigen::VectorXd field;
};

SpatialDraw spatial_linear_data(int n, int p, const CovarianceParams& field_params,
                                double noise_sd, std::uint64_t seed) {
  const Eigen::MatrixXd X = oracle::gaussian_matrix(n, p, seed);
  const auto sites = oracle::random_sites(n, seed + 1, 2.0);
  Eigen::VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta(j) = (j % 2 == 0 ? 1.0 : -0.7) / (1.0 + j);
  const Eigen::VectorXd mean = X * beta;

  Eigen::VectorXd field = Eigen::VectorXd::Zero(n);
  if (field_params.psill > 0.0) {
    const Eigen::MatrixXd L = covariance_cholesky(sites, field_params);
    field = L.triangularView<Eigen::Lower>() * oracle::gaussian_vector(n, seed + 2);
  }
  Eigen::VectorXd y = mean + field;
  if (noise_sd > 0.0) y += noise_sd * oracle::gaussian_vector(n, seed + 3);
  return {Dataset(X, y, sites, make_names(p)), mean, field};
}

// Assemble a model directly from parts: full-rank PLS, least-squares beta,
// and a caller-chosen covariance over the training residuals.
UkPlsModel model_from_parts(const Dataset& data, const CovarianceParams& theta) {
  const Eigen::MatrixXd& X = data.covariates();
  const Eigen::VectorXd y = data.model_outcome();
  PlsProjection proj = fit_pls(X, y, static_cast<int>(X.cols()));

  Eigen::MatrixXd Z(X.rows(), proj.components + 1);
  Z.col(0).setOnes();
  Z.rightCols(proj.components) = proj.project(X);
  const Eigen::VectorXd beta = oracle::normal_equations(Z, y);
  FittedCovariance cov(theta, data.sites(), y - Z * beta);
  return UkPlsModel(data, std::move(proj), beta, std::move(cov));
}

}  // namespace

TEST_CASE("zero partial sill reduces prediction to the score regression") {
  const SpatialDraw draw = spatial_linear_data(50, 4, {0.0, 0.0, 1.0}, 0.4, 11);
  const UkPlsModel model = model_from_parts(draw.data, {1.0, 0.0, 1.0});

  const Eigen::MatrixXd Xnew = oracle::gaussian_matrix(15, 4, 15);
  const auto where = oracle::random_sites(15, 16, 2.0);

  CHECK(model.kriging_term(where).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd pred = model.predict(Xnew, where);
  CHECK(pred.isApprox(model.mean_term(Xnew), 1e-14));

  // And the mean term itself is the intercept-plus-scores regression.
  Eigen::MatrixXd Z(15, model.components_used() + 1);
  Z.col(0).setOnes();
  Z.rightCols(model.components_used()) = model.projection().project(Xnew);
  CHECK(pred.isApprox(Z * model.beta(), 1e-12));
}

TEST_CASE("prediction decomposes into mean plus kriging exactly") {
  const SpatialDraw draw = spatial_linear_data(40, 3, {0.3, 1.0, 0.8}, 0.0, 21);
  const UkPlsModel model = model_from_parts(draw.data, {0.3, 1.0, 0.8});

  const Eigen::MatrixXd Xnew = oracle::gaussian_matrix(10, 3, 25);
  const auto where = oracle::random_sites(10, 26, 2.0);
  const Eigen::VectorXd composed = model.mean_term(Xnew) + model.kriging_term(where);
  CHECK(model.predict(Xnew, where).isApprox(composed, 1e-14));

  // The kriging term matches the dense oracle applied to the stored residuals.
  const Eigen::VectorXd nu = oracle::dense_krige(draw.data.sites(), where,
                                                 model.covariance().params(),
                                                 model.covariance().residuals());
  CHECK(model.kriging_term(where).isApprox(nu, 1e-9));
}

TEST_CASE("far-field prediction falls back to the mean term") {
  const SpatialDraw draw = spatial_linear_data(40, 3, {0.2, 1.5, 0.5}, 0.0, 31);
  const UkPlsModel model = fit_ukpls(draw.data, [] {
    UkPlsOptions o;
    o.components = 3;
    return o;
  }());

  const Eigen::MatrixXd Xnew = oracle::gaussian_matrix(5, 3, 35);
  std::vector<Location> far;
  for (long i = 0; i < 5; ++i)
    far.push_back(Location{100 + i, 1.0e3 + static_cast<double>(i), 1.0e3, Metric::euclidean});
  const Eigen::VectorXd pred = model.predict(Xnew, far);
  CHECK((pred - model.mean_term(Xnew)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("a nugget-free model reproduces its own training observations") {
  // With tau^2 pinned to zero, kriging at the training sites returns the
  // stored residuals, so mean + kriging recovers y up to the stabilization
  // ridge -- regardless of how good the mean model is.
  const SpatialDraw draw = spatial_linear_data(80, 3, {0.0, 1.0, 0.6}, 0.0, 41);
  const UkPlsModel model = model_from_parts(draw.data, {0.0, 1.0, 0.6});

  const Eigen::VectorXd pred = model.predict(draw.data.covariates(), draw.data.sites());
  const double scale = std::sqrt(draw.data.outcome().squaredNorm() / 80.0);
  CHECK((pred - draw.data.outcome()).cwiseAbs().maxCoeff() < 1e-6 * scale);
}

TEST_CASE("noiseless spatial field: the fit nearly interpolates") {
  // The estimated mean leaks a spatially white component into the
  // residuals (beta-hat != beta), so a small nugget survives even without
  // measurement noise; predictions still track the data closely.
  const SpatialDraw draw = spatial_linear_data(80, 3, {0.0, 1.0, 0.6}, 0.0, 41);
  UkPlsOptions opts;
  opts.components = 3;
  opts.ml.init = CovarianceParams{0.0, 1.0, 0.6};
  const UkPlsModel model = fit_ukpls(draw.data, opts);

  const CovarianceParams& th = model.covariance().params();
  CHECK(th.nugget / (th.nugget + th.psill) < 0.15);

  const Eigen::VectorXd pred = model.predict(draw.data.covariates(), draw.data.sites());
  const Eigen::VectorXd y = draw.data.outcome();
  const double sse = (pred - y).squaredNorm();
  const double sst = (y.array() - y.mean()).square().sum();
  CHECK(sse / sst < 0.05);
}

TEST_CASE("with measurement noise the fit stops interpolating") {
  const SpatialDraw draw = spatial_linear_data(80, 3, {0.5, 1.0, 0.6}, 0.7, 51);
  UkPlsOptions opts;
  opts.components = 3;
  const UkPlsModel model = fit_ukpls(draw.data, opts);

  CHECK(model.covariance().params().nugget > 0.05);
  const Eigen::VectorXd pred = model.predict(draw.data.covariates(), draw.data.sites());
  CHECK((pred - draw.data.outcome()).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("alternation does not end above its starting likelihood") {
  const SpatialDraw draw = spatial_linear_data(60, 4, {0.4, 1.2, 0.7}, 0.3, 61);
  UkPlsOptions opts;
  opts.components = 4;
  const UkPlsModel model = fit_ukpls(draw.data, opts);

  const Eigen::VectorXd y = draw.data.model_outcome();
  const Eigen::VectorXd r_final = y - model.mean_term(draw.data.covariates());
  const double nll_final = neg_log_likelihood(r_final, draw.data.sites(),
                                              model.covariance().params());

  // Starting point of the alternation: least-squares beta, default-init
  // covariance (half the residual variance each, range dmax/4).
  Eigen::MatrixXd Z(60, model.components_used() + 1);
  Z.col(0).setOnes();
  Z.rightCols(model.components_used()) =
      model.projection().project(draw.data.covariates());
  const Eigen::VectorXd r0 = y - Z * oracle::normal_equations(Z, y);
  const double var0 = (r0.array() - r0.mean()).square().sum() / 59.0;
  const double dmax = pairwise_distances(draw.data.sites()).maxCoeff();
  const CovarianceParams init{var0 / 2.0, var0 / 2.0, dmax / 4.0};
  CHECK(nll_final <= neg_log_likelihood(r0, draw.data.sites(), init) + 1e-9);
}

TEST_CASE("fitting twice gives bitwise identical models") {
  const SpatialDraw draw = spatial_linear_data(50, 3, {0.3, 0.8, 0.5}, 0.4, 71);
  UkPlsOptions opts;
  opts.selection_folds = 3;
  opts.seed = 5;
  const UkPlsModel a = fit_ukpls(draw.data, opts);
  const UkPlsModel b = fit_ukpls(draw.data, opts);

  CHECK(a.components_used() == b.components_used());
  CHECK(a.beta() == b.beta());
  CHECK(a.covariance().params().nugget == b.covariance().params().nugget);
  CHECK(a.covariance().params().psill == b.covariance().params().psill);
  CHECK(a.covariance().params().range == b.covariance().params().range);

  const Eigen::MatrixXd Xnew = oracle::gaussian_matrix(8, 3, 75);
  const auto where = oracle::random_sites(8, 76, 2.0);
  CHECK(a.predict(Xnew, where) == b.predict(Xnew, where));
}

TEST_CASE("stored residuals shift prediction independent of training row order") {
  const SpatialDraw draw = spatial_linear_data(40, 3, {0.2, 1.0, 0.7}, 0.2, 81);
  const CovarianceParams theta{0.2, 1.0, 0.7};
  const UkPlsModel model = model_from_parts(draw.data, theta);

  std::vector<int> perm;
  for (int i = 39; i >= 0; --i) perm.push_back(i);
  const UkPlsModel reversed = model_from_parts(draw.data.subset(perm), theta);

  const Eigen::MatrixXd Xnew = oracle::gaussian_matrix(6, 3, 85);
  const auto where = oracle::random_sites(6, 86, 2.0);
  CHECK(model.predict(Xnew, where).isApprox(reversed.predict(Xnew, where), 1e-10));
}

TEST_CASE("log transform round-trips through prediction") {
  const SpatialDraw draw = spatial_linear_data(40, 3, {0.3, 0.6, 0.5}, 0.2, 91);
  Eigen::VectorXd ypos = draw.data.outcome().array().exp();  // strictly positive
  const Dataset data(draw.data.covariates(), ypos, draw.data.sites(), draw.data.names(),
                     Transform::log);
  CHECK(data.model_outcome().isApprox(draw.data.outcome(), 1e-12));

  UkPlsOptions opts;
  opts.components = 2;
  const UkPlsModel model = fit_ukpls(data, opts);
  const Eigen::MatrixXd Xnew = oracle::gaussian_matrix(6, 3, 95);
  const auto where = oracle::random_sites(6, 96, 2.0);

  const Eigen::VectorXd model_scale = model.mean_term(Xnew) + model.kriging_term(where);
  const Eigen::VectorXd pred = model.predict(Xnew, where);
  CHECK(pred.isApprox(model_scale.array().exp().matrix(), 1e-12));
  CHECK((pred.array() > 0.0).all());
}

TEST_CASE("model construction and prediction validate their inputs") {
  const SpatialDraw draw = spatial_linear_data(30, 3, {0.3, 0.6, 0.5}, 0.3, 101);
  const UkPlsModel model = model_from_parts(draw.data, {0.3, 0.6, 0.5});

  // Beta must carry exactly intercept + one weight per component.
  PlsProjection proj = model.projection();
  FittedCovariance cov = model.covariance();
  CHECK_THROWS_AS(UkPlsModel(draw.data, proj, Eigen::VectorXd::Zero(2), cov), DimensionError);
  Eigen::VectorXd bad = model.beta();
  bad(0) = std::nan("");
  CHECK_THROWS_AS(UkPlsModel(draw.data, proj, bad, cov), DomainError);

  CHECK_THROWS_AS(model.predict(oracle::gaussian_matrix(4, 3, 105), oracle::random_sites(5, 106)),
                  DimensionError);
  CHECK_THROWS_AS(model.component_mean(1, draw.data.covariates()), DimensionError);

  // Interface bookkeeping for the importance machinery.
  CHECK(model.kind() == "ukpls");
  CHECK(model.component_count() == 1);
  CHECK(model.combiner_weight() == 1.0);
  CHECK(model.component_params(0).psill == 0.6);
  CHECK(model.component_mean(0, draw.data.covariates()) ==
        model.mean_term(draw.data.covariates()));
}

TEST_CASE("fixed component counts and the selection cap are honored") {
  const SpatialDraw draw = spatial_linear_data(50, 6, {0.4, 0.8, 0.6}, 0.4, 111);

  UkPlsOptions fixed;
  fixed.components = 2;
  CHECK(fit_ukpls(draw.data, fixed).components_used() == 2);

  UkPlsOptions capped;
  capped.selection_max = 3;
  capped.selection_folds = 3;
  const UkPlsModel model = fit_ukpls(draw.data, capped);
  CHECK(model.components_used() >= 1);
  CHECK(model.components_used() <= 3);
}
