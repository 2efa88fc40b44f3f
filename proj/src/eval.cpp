#include "spatml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "spatml/parallel.hpp"
#include "spatml/varimp.hpp"

namespace spatml {

ScreenResult screen_covariates(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                               const std::vector<bool>& landuse) {
  const long n = X.rows();
  const long p = X.cols();
  if (n < 10) throw DimensionError("screening needs at least 10 rows");
  if (static_cast<long>(names.size()) != p)
    throw DimensionError("screening names do not match column count");
  if (!landuse.empty() && static_cast<long>(landuse.size()) != p)
    throw DimensionError("land-use flags do not match column count");

  ScreenResult result;
  for (long j = 0; j < p; ++j) {
    const Eigen::VectorXd col = X.col(j);
    const std::string& name = names[static_cast<std::size_t>(j)];

    // rule 1: variability — share of entries differing from the mode
    std::vector<double> sorted(col.data(), col.data() + n);
    std::sort(sorted.begin(), sorted.end());
    long mode_count = 1, run = 1;
    for (long i = 1; i < n; ++i) {
      run = sorted[static_cast<std::size_t>(i)] == sorted[static_cast<std::size_t>(i - 1)]
                ? run + 1 : 1;
      mode_count = std::max(mode_count, run);
    }
    const double differing = static_cast<double>(n - mode_count) / static_cast<double>(n);
    if (differing < 0.20) {
      result.excluded.push_back({static_cast<int>(j), name, "variability"});
      continue;
    }

    // rule 2: outliers — entries beyond 5 interquartile ranges of the median
    const double median = empirical_quantile(col, 0.5);
    const double iqr = empirical_quantile(col, 0.75) - empirical_quantile(col, 0.25);
    const long outliers = (((col.array() - median).abs()) > 5.0 * iqr).count();
    if (static_cast<double>(outliers) > 0.02 * static_cast<double>(n)) {
      result.excluded.push_back({static_cast<int>(j), name, "outliers"});
      continue;
    }

    // rule 3: land-use shares that never reach 10%
    if (!landuse.empty() && landuse[static_cast<std::size_t>(j)] && col.maxCoeff() < 0.10) {
      result.excluded.push_back({static_cast<int>(j), name, "landuse"});
      continue;
    }

    result.retained.push_back(static_cast<int>(j));
  }

  if (result.retained.empty())
    throw DegenerateInputError("screening excluded every covariate");
  return result;
}

double r_squared(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() < 2) throw DimensionError("R^2 needs at least 2 observations");
  return r_squared(y_true, y_pred, y_true.mean());
}

double r_squared(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred, double center) {
  if (y_true.size() != y_pred.size()) throw DimensionError("R^2 length mismatch");
  if (y_true.size() < 1) throw DimensionError("R^2 of empty vectors");
  const double sst = (y_true.array() - center).square().sum();
  if (sst <= 0.0) throw DegenerateInputError("R^2 undefined for a constant truth");
  const double sse = (y_true - y_pred).squaredNorm();
  return 1.0 - sse / sst;
}

std::vector<int> assign_folds(long n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("need at least 2 folds");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i)
    fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
        static_cast<int>(i % folds);
  return fold_of;
}

CvResult kfold_cv(const ModelFactory& factory, const Dataset& data, int folds,
                  std::uint64_t seed, unsigned workers) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (data.n() < 2L * folds)
    throw DimensionError("cross-validation needs at least 2 rows per fold");

  CvResult result;
  result.fold_of_row = assign_folds(data.n(), folds, seed);
  result.predictions.resize(data.n());
  result.fold_r2.resize(static_cast<std::size_t>(folds));
  const double center = data.outcome().mean();

  parallel_for(static_cast<std::size_t>(folds), workers, [&](std::size_t f) {
    std::vector<int> train_rows, test_rows;
    for (long i = 0; i < data.n(); ++i)
      (result.fold_of_row[static_cast<std::size_t>(i)] == static_cast<int>(f) ? test_rows
                                                                              : train_rows)
          .push_back(static_cast<int>(i));
    try {
      const Dataset train = data.subset(train_rows);
      const Dataset test = data.subset(test_rows);
      const std::unique_ptr<AdditiveSpatialModel> model = factory.fit(train);
      const Eigen::VectorXd pred = model->predict(test.covariates(), test.sites());
      for (std::size_t t = 0; t < test_rows.size(); ++t)
        result.predictions(test_rows[t]) = pred(static_cast<long>(t));
      result.fold_r2[f] = r_squared(test.outcome(), pred, center);
    } catch (const Error& e) {
      throw Error("fold " + std::to_string(f) + ": " + e.what());
    }
  });

  result.errors = data.outcome() - result.predictions;
  result.r2 = r_squared(data.outcome(), result.predictions);
  return result;
}

}  // namespace spatml
