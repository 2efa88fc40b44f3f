#ifndef SPATML_OPTIM_HPP
#define SPATML_OPTIM_HPP

#include <Eigen/Dense>
#include <functional>

namespace spatml {

struct SimplexResult {
  Eigen::VectorXd x;       // best point ever evaluated
  double value = 0.0;      // objective at x
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/* Derivative-free Nelder-Mead minimizer.  Tracks the best point across all
 * evaluations (including the initial simplex), so result.value can never
 * exceed the objective at x0.  Convergence: relative spread of simplex
 * values below rel_tol. */
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                          const Eigen::VectorXd& x0, double step, double rel_tol,
                          int max_iter);

}  // namespace spatml

#endif  // SPATML_OPTIM_HPP
