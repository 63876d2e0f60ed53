#include "ccphot/nls.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ccphot/core.hpp"
#include "ccphot/errors.hpp"

namespace ccphot::nls {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Workspace {
  const FitProblem& problem;
  std::vector<std::size_t> free;  // indices of free parameters

  VectorXd sqrt_w;

  explicit Workspace(const FitProblem& p) : problem(p) {
    for (std::size_t j = 0; j < p.n_params(); ++j) {
      if (p.fixed.empty() || !p.fixed[j]) free.push_back(j);
    }
    sqrt_w.resize(static_cast<Eigen::Index>(p.x.size()));
    for (std::size_t i = 0; i < p.x.size(); ++i) {
      sqrt_w[static_cast<Eigen::Index>(i)] = p.weight.empty() ? 1.0 : std::sqrt(p.weight[i]);
    }
  }

  // Weighted residuals; returns false if any model value is non-finite.
  bool residuals(const std::vector<double>& p, VectorXd& r) const {
    const auto n = problem.x.size();
    r.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double f = problem.model(p, problem.x[i]);
      if (!std::isfinite(f)) return false;
      r[static_cast<Eigen::Index>(i)] = sqrt_w[static_cast<Eigen::Index>(i)] * (problem.y[i] - f);
    }
    return true;
  }

  // Weighted Jacobian of the model over free parameters.
  MatrixXd jacobian(const std::vector<double>& p) const {
    const MatrixXd full = problem.gradient ? analytic_jacobian(problem.gradient, p, problem.x)
                                           : finite_diff_jacobian(problem.model, p, problem.x);
    MatrixXd j(full.rows(), static_cast<Eigen::Index>(free.size()));
    for (std::size_t k = 0; k < free.size(); ++k) {
      j.col(static_cast<Eigen::Index>(k)) =
          full.col(static_cast<Eigen::Index>(free[k])).cwiseProduct(sqrt_w);
    }
    if (!j.allFinite()) throw EvaluationError("non-finite Jacobian entry");
    return j;
  }

  void clamp(std::vector<double>& p) const {
    if (problem.bounds.empty()) return;
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] = std::clamp(p[j], problem.bounds[j].lower, problem.bounds[j].upper);
    }
  }
};

std::string describe_direction(const FitProblem& problem, const std::vector<std::size_t>& free,
                               const VectorXd& v) {
  std::ostringstream os;
  bool first = true;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::abs(v[k]) < 1e-3) continue;
    os << (first ? "" : (v[k] < 0 ? " - " : " + "));
    if (first && v[k] < 0) os << "-";
    os << format_double(std::round(std::abs(v[k]) * 1000.0) / 1000.0) << "*"
       << problem.param_name(free[static_cast<std::size_t>(k)]);
    first = false;
  }
  return os.str();
}

}  // namespace

std::string FitProblem::param_name(std::size_t j) const {
  if (j < names.size() && !names[j].empty()) return names[j];
  return "p" + std::to_string(j);
}

void FitProblem::validate() const {
  if (!model) throw PreconditionError("fit problem has no model");
  if (x.size() != y.size()) throw PreconditionError("abscissa and data lengths differ");
  if (!weight.empty() && weight.size() != x.size()) {
    throw PreconditionError("weight and data lengths differ");
  }
  if (!bounds.empty() && bounds.size() != initial.size()) {
    throw PreconditionError("bounds and parameter lengths differ");
  }
  if (!fixed.empty() && fixed.size() != initial.size()) {
    throw PreconditionError("fixed mask and parameter lengths differ");
  }
  if (initial.empty()) throw PreconditionError("fit problem has no parameters");
  std::size_t n_free = 0;
  for (std::size_t j = 0; j < initial.size(); ++j) {
    if (fixed.empty() || !fixed[j]) ++n_free;
  }
  if (x.size() < n_free) {
    throw InsufficientDataError("need at least " + std::to_string(n_free) +
                                " data points, got " + std::to_string(x.size()));
  }
  for (double w : weight) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("weights must be positive and finite");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw ValidationError("non-finite data at index " + std::to_string(i));
    }
  }
  for (std::size_t j = 0; j < bounds.size(); ++j) {
    if (!(bounds[j].lower <= bounds[j].upper)) {
      throw PreconditionError("empty bound interval for " + param_name(j));
    }
    if (initial[j] < bounds[j].lower || initial[j] > bounds[j].upper) {
      throw PreconditionError("initial guess for " + param_name(j) + " outside bounds");
    }
  }
}

std::vector<double> poisson_weights(std::span<const double> observed) {
  std::vector<double> w(observed.size());
  for (std::size_t i = 0; i < observed.size(); ++i) w[i] = 1.0 / std::max(observed[i], 1.0);
  return w;
}

Eigen::MatrixXd finite_diff_jacobian(const ModelFn& model, std::span<const double> p,
                                     std::span<const double> xs, double h) {
  if (!(h > 0.0) || h > 1e-2) {
    throw PreconditionError("finite-difference step must lie in (0, 1e-2], got " + format_double(h));
  }
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(p.size()));
  std::vector<double> plus(p.begin(), p.end());
  std::vector<double> minus(p.begin(), p.end());
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double step = p[j] != 0.0 ? h * std::abs(p[j]) : h;
    plus[j] = p[j] + step;
    minus[j] = p[j] - step;
    const double width = plus[j] - minus[j];
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double fp = model(plus, xs[i]);
      const double fm = model(minus, xs[i]);
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw EvaluationError("non-finite model value while differentiating parameter " +
                              std::to_string(j));
      }
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp - fm) / width;
    }
    plus[j] = p[j];
    minus[j] = p[j];
  }
  return jac;
}

Eigen::MatrixXd analytic_jacobian(const GradientFn& gradient, std::span<const double> p,
                                  std::span<const double> xs) {
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(p.size()));
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    gradient(p, xs[i], g);
    for (std::size_t j = 0; j < p.size(); ++j) {
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g[j];
    }
  }
  return jac;
}

FitResult minimize(const FitProblem& problem, const Options& options) {
  problem.validate();
  const Workspace ws(problem);
  const auto m = static_cast<Eigen::Index>(ws.free.size());
  const auto n_total = problem.n_params();

  std::vector<double> p = problem.initial;
  ws.clamp(p);

  VectorXd r;
  if (!ws.residuals(p, r)) throw EvaluationError("model is not finite at the initial guess");
  double cost = r.squaredNorm();

  FitResult result;
  result.initial_chi2 = cost;
  result.names.resize(n_total);
  for (std::size_t j = 0; j < n_total; ++j) result.names[j] = problem.param_name(j);

  double lambda = options.initial_lambda;
  int iter = 0;
  bool converged = m == 0 || cost == 0.0;

  while (!converged && iter < options.max_iter) {
    ++iter;
    const MatrixXd jac = ws.jacobian(p);
    const VectorXd g = jac.transpose() * r;
    const MatrixXd a = jac.transpose() * jac;

    // Scale-invariant gradient test: cosine between residual and each column.
    double gmax = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double denom = std::sqrt(a(k, k) * cost);
      if (denom > 0.0) gmax = std::max(gmax, std::abs(g[k]) / denom);
    }
    if (gmax <= options.gradient_tol) {
      converged = true;
      break;
    }

    const double dmax = a.diagonal().maxCoeff();
    VectorXd damp = a.diagonal();
    for (Eigen::Index k = 0; k < m; ++k) {
      damp[k] = std::max(damp[k], dmax > 0.0 ? 1e-12 * dmax : 1.0);
    }

    bool accepted = false;
    while (!accepted) {
      MatrixXd lhs = a;
      lhs.diagonal() += lambda * damp;
      const VectorXd delta = lhs.ldlt().solve(g);
      std::vector<double> trial = p;
      for (Eigen::Index k = 0; k < m; ++k) trial[ws.free[static_cast<std::size_t>(k)]] += delta[k];
      ws.clamp(trial);

      VectorXd r_trial;
      const bool finite = delta.allFinite() && ws.residuals(trial, r_trial);
      const double cost_trial = finite ? r_trial.squaredNorm() : std::numeric_limits<double>::infinity();

      if (finite && cost_trial < cost) {
        double rel_step = 0.0;
        for (std::size_t j : ws.free) {
          const double scale = std::max({std::abs(p[j]), std::abs(problem.initial[j]), 1e-12});
          rel_step = std::max(rel_step, std::abs(trial[j] - p[j]) / scale);
        }
        const double rel_cost = (cost - cost_trial) / cost;
        p = std::move(trial);
        r = std::move(r_trial);
        cost = cost_trial;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        if ((rel_step < options.step_tol && rel_cost < options.cost_tol) || cost == 0.0) {
          converged = true;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No downhill step exists at working precision.
          converged = true;
          break;
        }
      }
    }
  }

  result.parameters = p;
  result.chi2 = cost;
  result.n_iterations = iter;
  result.converged = converged;
  result.dof = static_cast<int>(problem.x.size()) - static_cast<int>(m);
  result.reduced_chi2 = result.dof > 0 ? cost / result.dof : 0.0;

  result.covariance = MatrixXd::Zero(static_cast<Eigen::Index>(n_total), static_cast<Eigen::Index>(n_total));
  result.sigma3.assign(n_total, 0.0);
  result.at_bound.assign(n_total, false);
  for (std::size_t j = 0; j < problem.bounds.size(); ++j) {
    const auto& b = problem.bounds[j];
    if ((std::isfinite(b.lower) && p[j] <= b.lower) || (std::isfinite(b.upper) && p[j] >= b.upper)) {
      result.at_bound[j] = true;
    }
  }
  if (m == 0) return result;

  // Rank check on the column-equilibrated Jacobian; a column with no
  // influence at all is degenerate on its own.
  const MatrixXd jac = ws.jacobian(p);
  VectorXd scale(m);
  Eigen::Index dead = -1;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double norm = jac.col(k).norm();
    if (!(norm > std::numeric_limits<double>::min())) {
      dead = k;
      scale[k] = 1.0;
    } else {
      scale[k] = 1.0 / norm;
    }
  }
  const MatrixXd scaled = jac * scale.asDiagonal();
  Eigen::JacobiSVD<MatrixXd> svd(scaled, Eigen::ComputeThinV);
  const VectorXd sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  const double smin = sv.size() > 0 ? sv[sv.size() - 1] : 0.0;
  if (dead >= 0 || smax == 0.0 || smin <= options.degeneracy_tol * smax) {
    VectorXd dir = svd.matrixV().col(m - 1);
    if (dead >= 0) dir = VectorXd::Unit(m, dead);
    std::vector<double> direction(n_total, 0.0);
    for (Eigen::Index k = 0; k < m; ++k) direction[ws.free[static_cast<std::size_t>(k)]] = dir[k];
    throw DegenerateFitError("degenerate fit: parameter direction (" +
                                 describe_direction(problem, ws.free, dir) + ") is unidentifiable",
                             std::move(direction));
  }

  // (JᵀWJ)⁻¹ = S V Σ⁻² Vᵀ S.
  const MatrixXd v = svd.matrixV();
  const VectorXd inv_sv2 = sv.array().square().inverse();
  MatrixXd cov_free = scale.asDiagonal() * v * inv_sv2.asDiagonal() * v.transpose() * scale.asDiagonal();
  const double factor = result.dof > 0 ? result.reduced_chi2 : 1.0;
  cov_free *= factor;
  cov_free = 0.5 * (cov_free + cov_free.transpose());
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      result.covariance(static_cast<Eigen::Index>(ws.free[static_cast<std::size_t>(a)]),
                        static_cast<Eigen::Index>(ws.free[static_cast<std::size_t>(b)])) = cov_free(a, b);
    }
  }
  for (std::size_t j = 0; j < n_total; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    result.sigma3[j] = 3.0 * std::sqrt(std::max(result.covariance(jj, jj), 0.0));
  }
  return result;
}

}  // namespace ccphot::nls
