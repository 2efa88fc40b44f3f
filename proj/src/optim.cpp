#include "spatml/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace spatml {

/* Textbook Nelder-Mead (reflection 1, expansion 2, contraction 0.5,
 * shrink 0.5) on an axis-aligned initial simplex of edge `step`. */
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                          const Eigen::VectorXd& x0, double step, double rel_tol,
                          int max_iter) {
  const long dim = x0.size();
  SimplexResult result;
  result.x = x0;
  result.value = std::numeric_limits<double>::infinity();

  auto eval = [&](const Eigen::VectorXd& x) {
    double v = objective(x);
    if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
    ++result.evaluations;
    if (v < result.value) {
      result.value = v;
      result.x = x;
    }
    return v;
  };

  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(dim) + 1, x0);
  std::vector<double> vals(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (k > 0) pts[k](static_cast<long>(k) - 1) += step;
    vals[k] = eval(pts[k]);
  }

  std::vector<std::size_t> order(pts.size());
  for (int iter = 0; iter < max_iter; ++iter) {
    result.iterations = iter + 1;
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });

    const double best = vals[order.front()];
    const double worst = vals[order.back()];
    const double spread = std::abs(worst - best);
    if (std::isfinite(worst) && spread <= rel_tol * (std::abs(best) + rel_tol)) {
      result.converged = true;
      break;
    }

    const std::size_t iw = order.back();         // worst vertex
    const std::size_t is = order[order.size() - 2];
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (std::size_t k : order)
      if (k != iw) centroid += pts[k];
    centroid /= static_cast<double>(dim);

    const Eigen::VectorXd reflected = centroid + (centroid - pts[iw]);
    const double fr = eval(reflected);

    if (fr < vals[order.front()]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[iw]);
      const double fe = eval(expanded);
      if (fe < fr) {
        pts[iw] = expanded;
        vals[iw] = fe;
      } else {
        pts[iw] = reflected;
        vals[iw] = fr;
      }
      continue;
    }
    if (fr < vals[is]) {
      pts[iw] = reflected;
      vals[iw] = fr;
      continue;
    }

    // contraction: outside if the reflection helped at all, else inside
    const bool outside = fr < vals[iw];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid - 0.5 * (centroid - pts[iw]));
    const double fc = eval(contracted);
    if (fc < std::min(fr, vals[iw])) {
      pts[iw] = contracted;
      vals[iw] = fc;
      continue;
    }

    const Eigen::VectorXd anchor = pts[order.front()];
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (k == order.front()) continue;
      pts[k] = anchor + 0.5 * (pts[k] - anchor);
      vals[k] = eval(pts[k]);
    }
  }

  return result;
}

}  // namespace spatml
