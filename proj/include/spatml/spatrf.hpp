#ifndef SPATML_SPATRF_HPP
#define SPATML_SPATRF_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "spatml/covariance.hpp"
#include "spatml/model.hpp"

namespace spatml {

struct TreeNode {
  int feature = -1;        // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;      // leaf prediction (GLS-estimated)
};

struct SpatRfHyper {
  int mtry = 0;       // covariates tried per node; 0 means ceil(p/3)
  int min_leaf = 5;
  int max_depth = 12;
  int rounds = 2;     // tree-growth / covariance-refit alternations
  bool bootstrap = true;
};

/* One spatially grown regression tree: CART on decorrelated responses.
 * Growth alternates with covariance refits on the tree residuals; `theta`
 * is the last refit (pure nugget when rounds == 0, which reduces the tree
 * to ordinary CART).  `cov` is the residual field the ensemble kriges
 * with — fit_spatial_tree leaves it over the tree's own input, and the
 * forest rebinds it to full-sample residuals. */
struct SpatialTree {
  std::vector<TreeNode> nodes;          // preorder, root at 0
  CovarianceParams theta;
  std::shared_ptr<const FittedCovariance> cov;
  std::vector<int> bootstrap_rows;      // rows of the training data used

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& X) const;
  int leaf_count() const;
};

/* Grow one spatial tree on (X, y, sites); y is already on the model scale.
 * Round structure: grow under the current covariance (starting from pure
 * nugget), then refit the covariance on the tree's residuals; `rounds`
 * counts the grow steps after the first.  A regrown tree is kept only if
 * it does not worsen the joint likelihood. */
SpatialTree fit_spatial_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const std::vector<Location>& sites,
                             const SpatRfHyper& hyper, std::uint64_t seed);

class SpatRfModel final : public AdditiveSpatialModel {
 public:
  SpatRfModel(Dataset train, std::vector<SpatialTree> trees, SpatRfHyper hyper,
              std::uint64_t seed, LinkFunction link = {});

  std::size_t component_count() const override { return trees_.size(); }
  double combiner_weight() const override { return 1.0 / static_cast<double>(trees_.size()); }
  Eigen::VectorXd component_mean(std::size_t k, const Eigen::MatrixXd& X) const override;
  const CovarianceParams& component_params(std::size_t k) const override;
  const Dataset& training_data() const override { return train_; }
  LinkFunction link() const override { return link_; }
  Eigen::VectorXd predict(const Eigen::MatrixXd& X,
                          const std::vector<Location>& sites) const override;
  std::string kind() const override { return "spatrf"; }

  const std::vector<SpatialTree>& trees() const { return trees_; }
  const SpatRfHyper& hyper() const { return hyper_; }
  std::uint64_t seed() const { return seed_; }

 private:
  Dataset train_;
  std::vector<SpatialTree> trees_;
  SpatRfHyper hyper_;
  std::uint64_t seed_;
  LinkFunction link_;
};

/* Fit a K-tree spatial forest.  Tree k draws its own bootstrap resample and
 * RNG stream from a seed derived from (seed, k), so results are identical
 * for any worker count. */
SpatRfModel fit_spatrf(const Dataset& data, int trees, const SpatRfHyper& hyper = {},
                       std::uint64_t seed = 0, unsigned workers = 1);

}  // namespace spatml

#endif  // SPATML_SPATRF_HPP
