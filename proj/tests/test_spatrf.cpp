#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "spatml/covariance.hpp"
#include "spatml/spatrf.hpp"

using namespace spatml;

namespace {

std::vector<std::string> make_names(int p) {
  std::vector<std::string> names;
  for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

/* Depth is kept moderate so split decisions stay in the signal regime:
 * at tiny forced splits (say 3-3 of six rows) two features can induce the
 * same row partition, making their gains exactly equal -- and then the
 * library's one-pass SSE and the oracle's two-pass SSE may break the tie
 * differently.  Equivalence of the split policy is the property under
 * test, not tie-breaking among bit-identical gains. */
SpatRfHyper cart_hyper(int p) {
  SpatRfHyper h;
  h.mtry = p;          // consider every feature
  h.rounds = 0;        // no covariance alternation: ordinary CART
  h.bootstrap = false;
  h.min_leaf = 4;
  h.max_depth = 3;
  return h;
}

// Nonlinear response so trees have something real to split on.
Eigen::VectorXd step_response(const Eigen::MatrixXd& X, double noise_sd, std::uint64_t seed) {
  Eigen::VectorXd y(X.rows());
  for (long i = 0; i < X.rows(); ++i)
    y(i) = (X(i, 0) > 0.2 ? 2.0 : -1.0) + 0.8 * (X(i, 1) > -0.5 ? 1.0 : 0.0);
  return y + noise_sd * oracle::gaussian_vector(static_cast<int>(X.rows()), seed);
}

}  // namespace

TEST_CASE("rounds=0 with full mtry reproduces plain CART") {
  const int n = 100;
  const int p = 5;
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull, 6ull, 7ull, 8ull, 9ull, 10ull}) {
    CAPTURE(seed);
    const Eigen::MatrixXd X = oracle::gaussian_matrix(n, p, 300 + seed);
    const Eigen::VectorXd y = step_response(X, 0.3, 400 + seed);
    const auto sites = oracle::random_sites(n, 500 + seed, 2.0);

    const SpatRfHyper h = cart_hyper(p);
    const SpatialTree tree = fit_spatial_tree(X, y, sites, h, seed);
    const oracle::PlainCart cart(X, y, h.min_leaf, h.max_depth);

    REQUIRE(tree.nodes.size() == cart.nodes().size());
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      const TreeNode& a = tree.nodes[k];
      const oracle::CartNode& b = cart.nodes()[k];
      CHECK(a.feature == b.feature);
      CHECK(a.left == b.left);
      CHECK(a.right == b.right);
      if (a.feature >= 0) {
        CHECK(a.threshold == b.threshold);
      } else {
        // Leaf estimation runs through generalized least squares with a
        // pure-nugget covariance, which reduces to per-leaf means.
        CHECK(a.value == doctest::Approx(b.value).epsilon(1e-9));
      }
    }

    for (long i = 0; i < 10; ++i) {
      const Eigen::RowVectorXd probe = oracle::gaussian_matrix(1, p, 600 + seed).row(0);
      CHECK(tree.predict_row(probe) == doctest::Approx(cart.predict(probe)).epsilon(1e-9));
    }
  }
}

TEST_CASE("a constant response collapses to a single leaf") {
  const Eigen::MatrixXd X = oracle::gaussian_matrix(30, 3, 21);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(30, 4.25);
  const auto sites = oracle::random_sites(30, 22, 2.0);

  SpatRfHyper h;
  h.rounds = 2;  // covariance refits on zero residuals must fall back, not throw
  const SpatialTree tree = fit_spatial_tree(X, y, sites, h, 1);
  CHECK(tree.leaf_count() == 1);
  CHECK(tree.nodes.size() == 1);
  CHECK(tree.nodes[0].value == doctest::Approx(4.25).epsilon(1e-12));
  CHECK(tree.predict_mean(X).isApproxToConstant(4.25, 1e-12));
}

TEST_CASE("tree residuals are exactly y minus the tree mean") {
  const int n = 80;
  const Eigen::MatrixXd X = oracle::gaussian_matrix(n, 4, 31);
  const Eigen::VectorXd y = step_response(X, 0.5, 32);
  const auto sites = oracle::random_sites(n, 33, 2.0);

  SpatRfHyper h;
  h.rounds = 2;
  const SpatialTree tree = fit_spatial_tree(X, y, sites, h, 7);
  REQUIRE(tree.cov != nullptr);
  const Eigen::VectorXd r = y - tree.predict_mean(X);
  CHECK((tree.cov->residuals() - r).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("more alternation rounds never worsen the joint likelihood") {
  // rounds = k+1 extends the deterministic rounds = k trajectory by one
  // guarded regrow and one warm covariance refit, so the final joint NLL is
  // monotone in the round count.
  const int n = 90;
  const Eigen::MatrixXd X = oracle::gaussian_matrix(n, 4, 41);
  const auto sites = oracle::random_sites(n, 42, 2.0);
  const Eigen::MatrixXd L = covariance_cholesky(sites, {0.2, 1.0, 0.8});
  const Eigen::VectorXd y = step_response(X, 0.0, 43) +
                            L.triangularView<Eigen::Lower>() * oracle::gaussian_vector(n, 44);

  double prev = std::numeric_limits<double>::infinity();
  for (int rounds = 0; rounds <= 3; ++rounds) {
    SpatRfHyper h;
    h.mtry = 4;
    h.bootstrap = false;
    h.rounds = rounds;
    const SpatialTree tree = fit_spatial_tree(X, y, sites, h, 11);
    const double nll = neg_log_likelihood(y - tree.predict_mean(X), sites, tree.theta);
    CAPTURE(rounds);
    if (rounds > 0) CHECK(nll <= prev + 1e-9);
    prev = nll;
  }
}

TEST_CASE("forest prediction with zero psill averages the tree means") {
  // Hand-built two-tree forest over a covariance that kriges to zero:
  // prediction must be exactly the average of the two leaf outputs.
  const int n = 10;
  Eigen::MatrixXd X(n, 2);
  for (long i = 0; i < n; ++i) {
    X(i, 0) = static_cast<double>(i) / 10.0;
    X(i, 1) = (i % 2 == 0 ? -1.0 : 1.0);
  }
  Eigen::VectorXd y = X.col(0) * 3.0;
  const auto sites = oracle::random_sites(n, 51, 2.0);
  const Dataset data(X, y, sites, make_names(2));

  SpatialTree a;
  a.nodes = {TreeNode{0, 0.45, 1, 2, 0.0}, TreeNode{-1, 0.0, -1, -1, 1.0},
             TreeNode{-1, 0.0, -1, -1, 2.0}};
  SpatialTree b;
  b.nodes = {TreeNode{1, 0.0, 1, 2, 0.0}, TreeNode{-1, 0.0, -1, -1, 10.0},
             TreeNode{-1, 0.0, -1, -1, 20.0}};
  const CovarianceParams flat{1.0, 0.0, 1.0};
  for (SpatialTree* t : {&a, &b}) {
    t->theta = flat;
    t->cov = std::make_shared<FittedCovariance>(flat, sites,
                                                y - t->predict_mean(X));
    t->bootstrap_rows = {};
  }
  CHECK(a.leaf_count() == 2);

  SpatRfHyper h;
  const SpatRfModel model(data, {a, b}, h, 0);
  Eigen::MatrixXd probe(2, 2);
  probe << 0.1, -2.0,   // tree a: left leaf 1.0; tree b: left leaf 10.0
           0.9,  2.0;   // tree a: right leaf 2.0; tree b: right leaf 20.0
  const Eigen::VectorXd pred = model.predict(probe, oracle::random_sites(2, 52, 2.0));
  CHECK(pred(0) == doctest::Approx(5.5).epsilon(1e-14));
  CHECK(pred(1) == doctest::Approx(11.0).epsilon(1e-14));

  // Interface bookkeeping for the importance machinery.
  CHECK(model.component_count() == 2);
  CHECK(model.combiner_weight() == 0.5);
  CHECK(model.component_mean(0, probe) == a.predict_mean(probe));
  CHECK(model.component_params(1).psill == 0.0);
}

TEST_CASE("zero-nugget rebound covariance reproduces training outcomes") {
  // Each tree kriges its own full-sample residuals; with tau^2 = 0 the
  // residual field interpolates, so mean + kriging returns y at every
  // training site no matter how coarse the trees are.
  const int n = 60;
  const Eigen::MatrixXd X = oracle::gaussian_matrix(n, 3, 61);
  const Eigen::VectorXd y = step_response(X, 0.4, 62);
  const auto sites = oracle::random_sites(n, 63, 2.0);
  const Dataset data(X, y, sites, make_names(3));

  SpatRfHyper h;
  h.mtry = 2;
  h.rounds = 0;
  std::vector<SpatialTree> trees;
  for (std::uint64_t k = 0; k < 3; ++k) {
    SpatialTree t = fit_spatial_tree(X, y, sites, h, 100 + k);
    t.theta = CovarianceParams{0.0, 1.0, 0.5};
    t.cov = std::make_shared<FittedCovariance>(t.theta, sites, y - t.predict_mean(X));
    trees.push_back(std::move(t));
  }
  const SpatRfModel model(data, std::move(trees), h, 0);
  const Eigen::VectorXd pred = model.predict(X, sites);
  const double scale = std::sqrt(y.squaredNorm() / n);
  CHECK((pred - y).cwiseAbs().maxCoeff() < 1e-6 * scale);
}

TEST_CASE("identical trees make averaging a no-op") {
  // Without bootstrap and with every feature tried, tree growth consumes no
  // randomness, so all trees agree despite per-tree seeds.
  const int n = 70;
  const Eigen::MatrixXd X = oracle::gaussian_matrix(n, 3, 71);
  const Eigen::VectorXd y = step_response(X, 0.3, 72);
  const Dataset data(X, y, oracle::random_sites(n, 73, 2.0), make_names(3));

  SpatRfHyper h;
  h.mtry = 3;
  h.bootstrap = false;
  h.rounds = 1;
  const SpatRfModel forest = fit_spatrf(data, 4, h, 9);
  REQUIRE(forest.trees().size() == 4);
  for (std::size_t k = 1; k < 4; ++k) {
    const SpatialTree& t0 = forest.trees()[0];
    const SpatialTree& tk = forest.trees()[k];
    REQUIRE(tk.nodes.size() == t0.nodes.size());
    for (std::size_t i = 0; i < t0.nodes.size(); ++i) {
      CHECK(tk.nodes[i].feature == t0.nodes[i].feature);
      CHECK(tk.nodes[i].threshold == t0.nodes[i].threshold);
      CHECK(tk.nodes[i].value == t0.nodes[i].value);
    }
    CHECK(tk.theta.nugget == t0.theta.nugget);
    CHECK(tk.theta.psill == t0.theta.psill);
    CHECK(tk.theta.range == t0.theta.range);
  }

  const Eigen::MatrixXd probe = oracle::gaussian_matrix(8, 3, 74);
  const auto where = oracle::random_sites(8, 75, 2.0);
  const Eigen::VectorXd one = forest.trees()[0].predict_mean(probe) +
                              forest.trees()[0].cov->krige(where);
  CHECK(forest.predict(probe, where).isApprox(one, 1e-12));
}

TEST_CASE("bootstrap forests are deterministic in the seed") {
  const int n = 80;
  const Eigen::MatrixXd X = oracle::gaussian_matrix(n, 4, 81);
  const Eigen::VectorXd y = step_response(X, 0.5, 82);
  const Dataset data(X, y, oracle::random_sites(n, 83, 2.0), make_names(4));

  SpatRfHyper h;
  h.mtry = 2;
  h.rounds = 1;
  const SpatRfModel a = fit_spatrf(data, 5, h, 1234);
  const SpatRfModel b = fit_spatrf(data, 5, h, 1234);
  const SpatRfModel c = fit_spatrf(data, 5, h, 1235);

  const Eigen::MatrixXd probe = oracle::gaussian_matrix(10, 4, 84);
  const auto where = oracle::random_sites(10, 85, 2.0);
  CHECK(a.predict(probe, where) == b.predict(probe, where));
  CHECK(a.predict(probe, where) != c.predict(probe, where));

  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(a.trees()[k].bootstrap_rows == b.trees()[k].bootstrap_rows);
    CHECK(a.trees()[k].nodes.size() == b.trees()[k].nodes.size());
  }
  // Different trees actually see different resamples.
  CHECK(a.trees()[0].bootstrap_rows != a.trees()[1].bootstrap_rows);

  // Each tree's covariance is rebound to full-sample residuals.
  for (const SpatialTree& t : a.trees()) {
    REQUIRE(t.cov != nullptr);
    CHECK(t.cov->residuals().size() == n);
    const Eigen::VectorXd r = y - t.predict_mean(X);
    CHECK((t.cov->residuals() - r).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("worker count does not change the fitted forest") {
  const int n = 60;
  const Eigen::MatrixXd X = oracle::gaussian_matrix(n, 3, 91);
  const Eigen::VectorXd y = step_response(X, 0.4, 92);
  const Dataset data(X, y, oracle::random_sites(n, 93, 2.0), make_names(3));

  SpatRfHyper h;
  h.mtry = 2;
  h.rounds = 1;
  const SpatRfModel serial = fit_spatrf(data, 6, h, 7, 1);
  const SpatRfModel threaded = fit_spatrf(data, 6, h, 7, 4);
  const Eigen::MatrixXd probe = oracle::gaussian_matrix(9, 3, 94);
  const auto where = oracle::random_sites(9, 95, 2.0);
  CHECK(serial.predict(probe, where) == threaded.predict(probe, where));
}

TEST_CASE("rescaling the outcome rescales the forest") {
  const int n = 80;
  const Eigen::MatrixXd X = oracle::gaussian_matrix(n, 3, 101);
  const Eigen::VectorXd y = step_response(X, 0.4, 102);
  const auto sites = oracle::random_sites(n, 103, 2.0);
  const Dataset data(X, y, sites, make_names(3));
  const Dataset data10(X, 10.0 * y, sites, make_names(3));

  SpatRfHyper h;
  h.mtry = 3;
  h.bootstrap = false;
  h.rounds = 1;
  const SpatRfModel base = fit_spatrf(data, 1, h, 3);
  const SpatRfModel scaled = fit_spatrf(data10, 1, h, 3);

  // Same structure: splits live in covariate space.
  REQUIRE(base.trees()[0].nodes.size() == scaled.trees()[0].nodes.size());
  for (std::size_t i = 0; i < base.trees()[0].nodes.size(); ++i) {
    CHECK(base.trees()[0].nodes[i].feature == scaled.trees()[0].nodes[i].feature);
    CHECK(base.trees()[0].nodes[i].threshold == scaled.trees()[0].nodes[i].threshold);
  }

  const Eigen::MatrixXd probe = oracle::gaussian_matrix(10, 3, 104);
  const auto where = oracle::random_sites(10, 105, 2.0);
  const Eigen::VectorXd p1 = base.predict(probe, where);
  const Eigen::VectorXd p10 = scaled.predict(probe, where);
  CHECK((p10 - 10.0 * p1).cwiseAbs().maxCoeff() < 1e-4 * p10.cwiseAbs().maxCoeff());
}

TEST_CASE("hyperparameters and inputs are validated") {
  const int n = 30;
  const Eigen::MatrixXd X = oracle::gaussian_matrix(n, 3, 111);
  const Eigen::VectorXd y = step_response(X, 0.3, 112);
  const auto sites = oracle::random_sites(n, 113, 2.0);
  const Dataset data(X, y, sites, make_names(3));

  CHECK_THROWS_AS(fit_spatrf(data, 0), ConfigError);

  SpatRfHyper bad;
  bad.min_leaf = 0;
  CHECK_THROWS_AS(fit_spatial_tree(X, y, sites, bad, 1), ConfigError);
  bad = SpatRfHyper{};
  bad.max_depth = -1;
  CHECK_THROWS_AS(fit_spatial_tree(X, y, sites, bad, 1), ConfigError);
  bad = SpatRfHyper{};
  bad.rounds = -1;
  CHECK_THROWS_AS(fit_spatial_tree(X, y, sites, bad, 1), ConfigError);

  SpatRfHyper big;
  big.min_leaf = 20;  // 2 * min_leaf exceeds n
  CHECK_THROWS_AS(fit_spatial_tree(X, y, sites, big, 1), DimensionError);

  CHECK_THROWS_AS(SpatRfModel(data, {}, SpatRfHyper{}, 0), ConfigError);
}
