#include "spatml/spatrf.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>

#include "spatml/parallel.hpp"

namespace spatml {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

SpatRfHyper resolve(const SpatRfHyper& hyper, long p) {
  SpatRfHyper h = hyper;
  if (h.mtry <= 0) h.mtry = static_cast<int>((p + 2) / 3);
  h.mtry = static_cast<int>(std::min<long>(h.mtry, p));
  if (h.min_leaf < 1) throw ConfigError("min_leaf must be at least 1");
  if (h.max_depth < 0) throw ConfigError("max_depth must be nonnegative");
  if (h.rounds < 0) throw ConfigError("rounds must be nonnegative");
  return h;
}

/* Greedy CART on the whitened response u with split candidates taken from
 * the raw covariates.  Gains are plain SSE reductions of u; the best
 * strictly-improving (feature, position) wins, earlier candidates on ties,
 * so the structure is reproducible.  Leaf values are provisional means until
 * the GLS pass overwrites them. */
struct Grower {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& u;
  const SpatRfHyper& hyper;
  std::mt19937_64 rng;

  std::vector<TreeNode> nodes;
  std::vector<int> leaf_of_row;

  Grower(const Eigen::MatrixXd& X_, const Eigen::VectorXd& u_, const SpatRfHyper& h,
         std::uint64_t seed)
      : X(X_), u(u_), hyper(h), rng(seed), leaf_of_row(X_.rows(), -1) {}

  std::vector<int> candidate_features() {
    const int p = static_cast<int>(X.cols());
    if (hyper.mtry >= p) {
      std::vector<int> all(p);
      std::iota(all.begin(), all.end(), 0);
      return all;  // no sampling, no RNG consumption
    }
    std::vector<int> pool(p);
    std::iota(pool.begin(), pool.end(), 0);
    for (int k = 0; k < hyper.mtry; ++k) {
      std::uniform_int_distribution<int> pick(k, p - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    pool.resize(hyper.mtry);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  int grow(std::vector<int>& rows, int depth) {
    const int node_id = static_cast<int>(nodes.size());
    nodes.emplace_back();

    const long m = static_cast<long>(rows.size());
    double sum = 0.0, sumsq = 0.0;
    for (int r : rows) {
      sum += u(r);
      sumsq += u(r) * u(r);
    }
    const double sse = sumsq - sum * sum / static_cast<double>(m);

    const bool can_split = depth < hyper.max_depth && m >= 2 * hyper.min_leaf &&
                           sse > 1e-12 * static_cast<double>(m);
    int best_feature = -1, best_pos = -1;
    double best_gain = 0.0;
    std::vector<int> order;
    std::vector<int> best_order;

    if (can_split) {
      for (int j : candidate_features()) {
        order = rows;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
          return X(a, j) != X(b, j) ? X(a, j) < X(b, j) : a < b;
        });
        double left_sum = 0.0, left_sumsq = 0.0;
        for (long s = 1; s < m; ++s) {
          const int row = order[static_cast<std::size_t>(s - 1)];
          left_sum += u(row);
          left_sumsq += u(row) * u(row);
          if (s < hyper.min_leaf || m - s < hyper.min_leaf) continue;
          if (X(order[static_cast<std::size_t>(s - 1)], j) ==
              X(order[static_cast<std::size_t>(s)], j))
            continue;  // cannot separate equal covariate values
          const double nl = static_cast<double>(s), nr = static_cast<double>(m - s);
          const double sse_l = left_sumsq - left_sum * left_sum / nl;
          const double right_sum = sum - left_sum;
          const double sse_r = (sumsq - left_sumsq) - right_sum * right_sum / nr;
          const double gain = sse - sse_l - sse_r;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = j;
            best_pos = static_cast<int>(s);
            best_order = order;
          }
        }
      }
    }

    if (best_feature < 0) {
      nodes[static_cast<std::size_t>(node_id)].value = sum / static_cast<double>(m);
      for (int r : rows) leaf_of_row[static_cast<std::size_t>(r)] = node_id;
      return node_id;
    }

    const double lo = X(best_order[static_cast<std::size_t>(best_pos - 1)], best_feature);
    const double hi = X(best_order[static_cast<std::size_t>(best_pos)], best_feature);
    std::vector<int> left_rows(best_order.begin(), best_order.begin() + best_pos);
    std::vector<int> right_rows(best_order.begin() + best_pos, best_order.end());
    best_order.clear();

    nodes[static_cast<std::size_t>(node_id)].feature = best_feature;
    nodes[static_cast<std::size_t>(node_id)].threshold = lo + 0.5 * (hi - lo);
    const int left_id = grow(left_rows, depth + 1);
    nodes[static_cast<std::size_t>(node_id)].left = left_id;
    const int right_id = grow(right_rows, depth + 1);
    nodes[static_cast<std::size_t>(node_id)].right = right_id;
    return node_id;
  }
};

// Replace the parent of two leaves by a leaf (deepest such parent), used
// when the GLS system for leaf values cannot be solved as-is.
bool merge_one_leaf_pair(std::vector<TreeNode>& nodes) {
  int target = -1, target_depth = -1;
  std::vector<std::pair<int, int>> stack{{0, 0}};  // (node, depth)
  while (!stack.empty()) {
    const auto [id, depth] = stack.back();
    stack.pop_back();
    const TreeNode& nd = nodes[static_cast<std::size_t>(id)];
    if (nd.feature < 0) continue;
    const TreeNode& l = nodes[static_cast<std::size_t>(nd.left)];
    const TreeNode& r = nodes[static_cast<std::size_t>(nd.right)];
    if (l.feature < 0 && r.feature < 0) {
      if (depth > target_depth) {
        target_depth = depth;
        target = id;
      }
    } else {
      stack.push_back({nd.left, depth + 1});
      stack.push_back({nd.right, depth + 1});
    }
  }
  if (target < 0) return false;
  TreeNode& nd = nodes[static_cast<std::size_t>(target)];
  nd.feature = -1;
  nd.left = nd.right = -1;
  nd.value = 0.0;
  return true;
}

int leaf_for_row(const std::vector<TreeNode>& nodes,
                 const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  int id = 0;
  while (nodes[static_cast<std::size_t>(id)].feature >= 0) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(id)];
    id = x(nd.feature) <= nd.threshold ? nd.left : nd.right;
  }
  return id;
}

/* GLS leaf values for a fixed structure: gamma = (Z'S^{-1}Z)^{-1} Z'S^{-1}y
 * via whitening.  Merges leaf pairs and retries on numerical failure. */
void assign_gls_leaf_values(std::vector<TreeNode>& nodes, const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& y, const Eigen::MatrixXd& chol_lower) {
  const long n = X.rows();
  for (;;) {
    std::vector<int> leaf_ids;  // node index -> dense leaf column
    std::vector<int> column_of(nodes.size(), -1);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k].feature < 0) {
        column_of[k] = static_cast<int>(leaf_ids.size());
        leaf_ids.push_back(static_cast<int>(k));
      }
    }

    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, static_cast<long>(leaf_ids.size()));
    for (long i = 0; i < n; ++i)
      Z(i, column_of[static_cast<std::size_t>(leaf_for_row(nodes, X.row(i)))]) = 1.0;

    const auto L = chol_lower.triangularView<Eigen::Lower>();
    const Eigen::MatrixXd Zw = L.solve(Z);
    const Eigen::VectorXd uw = L.solve(y);
    const Eigen::MatrixXd G = Zw.transpose() * Zw;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() == Eigen::Success) {
      const Eigen::VectorXd gamma = ldlt.solve(Zw.transpose() * uw);
      const double rel_err = (G * gamma - Zw.transpose() * uw).norm() /
                             std::max(1.0, (Zw.transpose() * uw).norm());
      if (gamma.allFinite() && rel_err < 1e-6) {
        for (std::size_t c = 0; c < leaf_ids.size(); ++c)
          nodes[static_cast<std::size_t>(leaf_ids[c])].value = gamma(static_cast<long>(c));
        return;
      }
    }
    if (!merge_one_leaf_pair(nodes))
      throw NumericalRankError("leaf-value GLS system unsolvable even for a single leaf");
  }
}

}  // namespace

double SpatialTree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  return nodes[static_cast<std::size_t>(leaf_for_row(nodes, x))].value;
}

Eigen::VectorXd SpatialTree::predict_mean(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out(X.rows());
  for (long i = 0; i < X.rows(); ++i) out(i) = predict_row(X.row(i));
  return out;
}

int SpatialTree::leaf_count() const {
  int count = 0;
  for (const TreeNode& nd : nodes) count += nd.feature < 0 ? 1 : 0;
  return count;
}

SpatialTree fit_spatial_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const std::vector<Location>& sites, const SpatRfHyper& hyper,
                             std::uint64_t seed) {
  const long n = X.rows();
  if (y.size() != n || static_cast<std::size_t>(n) != sites.size())
    throw DimensionError("fit_spatial_tree: row/site mismatch");
  const SpatRfHyper h = resolve(hyper, X.cols());
  if (n < 2 * h.min_leaf) throw DimensionError("fit_spatial_tree: too few rows for min_leaf");

  const double var_y = variance(y);
  double dmax = 0.0;
  for (std::size_t i = 0; i < sites.size(); ++i)
    for (std::size_t j = i + 1; j < sites.size(); ++j)
      dmax = std::max(dmax, distance(sites[i], sites[j]));
  const double fallback_range = dmax > 0.0 ? dmax / 4.0 : 1.0;

  // Pure-nugget start: Sigma = var(y) * I.
  CovarianceParams theta{var_y > 0.0 ? var_y : 1.0, 0.0, fallback_range};
  const CovarianceParams theta_floor{1e-12 * std::max(1.0, var_y), 0.0, fallback_range};

  SpatialTree tree;
  double tree_nll = 0.0;  // NLL(y - f, theta) for the current tree

  auto grow_under = [&](const CovarianceParams& th) {
    const Eigen::MatrixXd L = covariance_cholesky(sites, th);
    const Eigen::VectorXd u = L.triangularView<Eigen::Lower>().solve(y);
    Grower grower(X, u, h, seed);  // same seed every pass: differences come from Sigma
    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    grower.grow(rows, 0);
    SpatialTree grown;
    grown.nodes = std::move(grower.nodes);
    assign_gls_leaf_values(grown.nodes, X, y, L);
    grown.theta = th;
    return grown;
  };
  auto joint_nll = [&](const SpatialTree& t, const CovarianceParams& th) {
    return neg_log_likelihood(y - t.predict_mean(X), sites, th);
  };

  tree = grow_under(theta);
  for (int round = 1; round <= h.rounds; ++round) {
    const Eigen::VectorXd resid = y - tree.predict_mean(X);
    CovarianceParams candidate = theta;
    try {
      FitMlOptions ml;
      // The log-parameterized search cannot leave a psill of zero (the
      // likelihood is flat at the box floor), so the pure-nugget start must
      // not be used as a warm start; fall back to the default balanced split
      // and keep genuine fits from earlier rounds.
      if (theta.psill > 0.0) ml.init = theta;
      // Per-tree subproblem: a loose tolerance and a tight iteration budget
      // are plenty (near-white residual fields put the simplex on a flat
      // ridge where full convergence buys fourth-decimal changes at many
      // times the cost), and the guard below keeps every outcome safe.
      ml.rel_tol = 1e-6;
      ml.max_iter = 150;
      candidate = fit_ml(resid, sites, ml).params();
    } catch (const DegenerateInputError&) {
      candidate = theta_floor;  // tree fits (near) perfectly; no field left to model
    } catch (const ConvergenceError& e) {
      candidate = e.best_params;  // best point found is still at least the init
    }
    // Never let a refit worsen this round's likelihood (possible only when
    // the search was restarted from the default rather than warm-started).
    if (neg_log_likelihood(resid, sites, candidate) <=
        neg_log_likelihood(resid, sites, theta))
      theta = candidate;
    tree.theta = theta;
    tree_nll = joint_nll(tree, theta);

    if (round == h.rounds) break;  // last refit: keep the structure that produced it
    SpatialTree regrown = grow_under(theta);
    const double regrown_nll = joint_nll(regrown, theta);
    if (regrown_nll <= tree_nll) {  // guard: never worsen the joint objective
      tree = std::move(regrown);
      tree_nll = regrown_nll;
    }
  }

  tree.cov = std::make_shared<FittedCovariance>(tree.theta, sites, y - tree.predict_mean(X));
  return tree;
}

SpatRfModel::SpatRfModel(Dataset train, std::vector<SpatialTree> trees, SpatRfHyper hyper,
                         std::uint64_t seed, LinkFunction link)
    : train_(std::move(train)), trees_(std::move(trees)), hyper_(hyper), seed_(seed),
      link_(link) {
  if (trees_.empty()) throw ConfigError("forest needs at least one tree");
  for (const SpatialTree& t : trees_)
    if (!t.cov) throw ConfigError("every tree needs a prediction covariance");
}

Eigen::VectorXd SpatRfModel::component_mean(std::size_t k, const Eigen::MatrixXd& X) const {
  return trees_.at(k).predict_mean(X);
}

const CovarianceParams& SpatRfModel::component_params(std::size_t k) const {
  return trees_.at(k).theta;
}

Eigen::VectorXd SpatRfModel::predict(const Eigen::MatrixXd& X,
                                     const std::vector<Location>& sites) const {
  if (static_cast<std::size_t>(X.rows()) != sites.size())
    throw DimensionError("covariate rows do not match prediction sites");
  if (X.cols() != train_.p()) throw DimensionError("covariate column count mismatch");
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(X.rows());
  for (const SpatialTree& t : trees_) eta += t.predict_mean(X) + t.cov->krige(sites);
  eta /= static_cast<double>(trees_.size());
  for (long i = 0; i < eta.size(); ++i) eta(i) = link_.invert(eta(i));
  return invert_transform(eta, train_.transform());
}

SpatRfModel fit_spatrf(const Dataset& data, int trees, const SpatRfHyper& hyper,
                       std::uint64_t seed, unsigned workers) {
  if (trees < 1) throw ConfigError("forest needs at least one tree");
  const SpatRfHyper h = resolve(hyper, data.p());
  const Eigen::VectorXd y = data.model_outcome();

  std::vector<SpatialTree> grown(static_cast<std::size_t>(trees));
  parallel_for(static_cast<std::size_t>(trees), workers, [&](std::size_t k) {
    const std::uint64_t tree_seed = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k)));
    std::vector<int> rows(static_cast<std::size_t>(data.n()));
    if (h.bootstrap) {
      std::mt19937_64 rng(splitmix64(tree_seed));
      std::uniform_int_distribution<int> pick(0, static_cast<int>(data.n()) - 1);
      for (int& r : rows) r = pick(rng);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }

    Eigen::MatrixXd Xb(static_cast<long>(rows.size()), data.p());
    Eigen::VectorXd yb(static_cast<long>(rows.size()));
    std::vector<Location> sb;
    sb.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Xb.row(static_cast<long>(i)) = data.covariates().row(rows[i]);
      yb(static_cast<long>(i)) = y(rows[i]);
      sb.push_back(data.sites()[static_cast<std::size_t>(rows[i])]);
    }

    SpatialTree tree = fit_spatial_tree(Xb, yb, sb, h, tree_seed);
    // Rebind the kriging field to full-sample residuals at all training sites.
    tree.cov = std::make_shared<FittedCovariance>(
        tree.theta, data.sites(), y - tree.predict_mean(data.covariates()));
    tree.bootstrap_rows = std::move(rows);
    grown[k] = std::move(tree);
  });

  return SpatRfModel(data, std::move(grown), h, seed);
}

}  // namespace spatml
