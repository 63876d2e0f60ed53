#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ccphot::nls {

/// Model value at abscissa x for parameter vector p.
using ModelFn = std::function<double(std::span<const double> p, double x)>;
/// Writes ∂model/∂p_j at x into grad (size == p.size()).
using GradientFn = std::function<void(std::span<const double> p, double x, std::span<double> grad)>;

struct Bound {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

struct FitProblem {
  ModelFn model;
  GradientFn gradient;  // optional
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> weight;  // empty means unit weights
  std::vector<double> initial;
  std::vector<Bound> bounds;       // empty means unbounded
  std::vector<bool> fixed;         // empty means all free
  std::vector<std::string> names;  // used in diagnostics only

  /// Throws PreconditionError/ValidationError on malformed problems.
  void validate() const;
  std::size_t n_params() const { return initial.size(); }
  std::string param_name(std::size_t j) const;
};

struct Options {
  int max_iter = 200;
  double gradient_tol = 1e-10;
  double step_tol = 1e-8;
  double cost_tol = 1e-10;
  double initial_lambda = 1e-3;
  /// Smallest acceptable singular-value ratio of the scaled Jacobian.
  double degeneracy_tol = 1e-9;
};

struct FitResult {
  std::vector<double> parameters;
  Eigen::MatrixXd covariance;
  std::vector<double> sigma3;
  std::vector<bool> at_bound;
  std::vector<std::string> names;
  double chi2 = 0.0;
  double initial_chi2 = 0.0;
  double reduced_chi2 = 0.0;
  int dof = 0;
  int n_iterations = 0;
  bool converged = false;

  double sigma(std::size_t j) const { return sigma3[j] / 3.0; }
};

/// Weighted Levenberg-Marquardt: minimises Σ w_i (y_i − f(p, x_i))².
/// Covariance is reduced χ² · (JᵀWJ)⁻¹ over free parameters; pinned
/// parameters get zero rows and columns.
FitResult minimize(const FitProblem& problem, const Options& options = {});

/// Central differences with per-parameter step h·|p_j| (h when p_j == 0).
Eigen::MatrixXd finite_diff_jacobian(const ModelFn& model, std::span<const double> p,
                                     std::span<const double> xs, double h = 1e-6);

Eigen::MatrixXd analytic_jacobian(const GradientFn& gradient, std::span<const double> p,
                                  std::span<const double> xs);

/// Poisson default weights 1 / max(y, 1).
std::vector<double> poisson_weights(std::span<const double> observed);

}  // namespace ccphot::nls
