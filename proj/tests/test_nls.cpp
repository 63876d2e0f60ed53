#include <doctest.h>

#include <cmath>
#include <random>

#include "ccphot/errors.hpp"
#include "ccphot/models.hpp"
#include "ccphot/nls.hpp"
#include "test_util.hpp"

using namespace ccphot;

namespace {

nls::FitProblem exp_problem(double tau_true, double tau_guess) {
  nls::FitProblem p;
  p.model = models::exponential;
  p.gradient = models::exponential_gradient;
  for (int i = 0; i < 200; ++i) {
    const double t = 2.0 * i;
    p.x.push_back(t);
    p.y.push_back(1000.0 * std::exp(-t / tau_true));
  }
  p.initial = {800.0, tau_guess};
  return p;
}

}  // namespace

TEST_CASE("linear model on exact data") {
  nls::FitProblem p;
  p.model = [](std::span<const double> q, double x) { return q[0] * x; };
  p.x = {1.0, 2.0};
  p.y = {2.0, 4.0};
  p.initial = {0.5};
  const auto r = nls::minimize(p);
  CHECK(r.parameters[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.reduced_chi2 < 1e-20);
  CHECK(r.converged);
}

TEST_CASE("exponential recovery from a distant guess") {
  const auto r = nls::minimize(exp_problem(100.0, 50.0));
  CHECK(testutil::close_rel(r.parameters[1], 100.0, 1e-6));
  CHECK(testutil::close_rel(r.parameters[0], 1000.0, 1e-6));
  CHECK(r.chi2 <= r.initial_chi2);
}

TEST_CASE("degenerate model names a null direction") {
  nls::FitProblem p;
  p.model = [](std::span<const double> q, double x) { return q[0] * x + q[1] * x; };
  p.x = {1, 2, 3, 4};
  p.y = {2, 4, 6, 8};
  p.initial = {0.5, 0.5};
  try {
    nls::minimize(p);
    FAIL("expected DegenerateFitError");
  } catch (const DegenerateFitError& e) {
    REQUIRE(e.direction().size() == 2);
    CHECK(std::abs(std::abs(e.direction()[0]) - std::abs(e.direction()[1])) < 1e-6);
    CHECK(e.direction()[0] * e.direction()[1] < 0.0);
  }
}

TEST_CASE("NaN at the initial guess") {
  nls::FitProblem p;
  p.model = [](std::span<const double> q, double x) { return std::sqrt(q[0]) * x; };
  p.x = {1, 2, 3};
  p.y = {1, 2, 3};
  p.initial = {-1.0};
  CHECK_THROWS_AS(nls::minimize(p), EvaluationError);
}

TEST_CASE("problem validation") {
  auto p = exp_problem(100.0, 50.0);
  SUBCASE("too few points") {
    p.x.resize(1);
    p.y.resize(1);
    CHECK_THROWS_AS(nls::minimize(p), InsufficientDataError);
  }
  SUBCASE("non-positive weight") {
    p.weight.assign(p.x.size(), 1.0);
    p.weight[3] = 0.0;
    CHECK_THROWS_AS(nls::minimize(p), ValidationError);
  }
  SUBCASE("guess outside bounds") {
    p.bounds = {{0.0, 1e9}, {60.0, 500.0}};
    CHECK_THROWS(nls::minimize(p));
  }
}

TEST_CASE("finite difference Jacobian") {
  const std::vector<double> xs = {1.0, 2.0, 5.0};
  const std::vector<double> p = {3.0};
  const auto j = nls::finite_diff_jacobian([](std::span<const double> q, double x) { return x * q[0]; }, p, xs);
  for (int i = 0; i < 3; ++i) CHECK(j(i, 0) == doctest::Approx(xs[static_cast<std::size_t>(i)]).epsilon(1e-9));

  const std::vector<double> q = {100.0};
  const std::vector<double> x100 = {100.0};
  const auto je = nls::finite_diff_jacobian(
      [](std::span<const double> r, double x) { return std::exp(-x / r[0]); }, q, x100);
  CHECK(testutil::close_rel(je(0, 0), 0.01 * std::exp(-1.0), 1e-6));
  CHECK(je(0, 0) == doctest::Approx(3.6788e-3).epsilon(1e-4));

  CHECK_THROWS_AS(nls::finite_diff_jacobian(models::line, q, xs, 0.0), PreconditionError);
  CHECK_THROWS_AS(nls::finite_diff_jacobian(models::line, q, xs, 0.05), PreconditionError);
}

TEST_CASE("analytic and finite-difference Jacobians agree") {
  std::mt19937_64 rng(2024);
  for (const auto& m : models::registry()) {
    CAPTURE(m.name);
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
      std::vector<double> p;
      for (const auto& b : m.parameter_ranges) p.push_back(std::uniform_real_distribution<double>(b.lower, b.upper)(rng));
      std::vector<double> xs;
      for (int i = 0; i < 12; ++i) xs.push_back(std::uniform_real_distribution<double>(m.x_range.lower, m.x_range.upper)(rng));
      worst = std::max(worst, models::jacobian_discrepancy(m, p, xs));
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("weight rescaling leaves the argmin unchanged") {
  std::mt19937_64 rng(5);
  auto p = exp_problem(100.0, 60.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& y : p.y) y += 3.0 * n(rng);
  p.weight = nls::poisson_weights(p.y);
  const auto a = nls::minimize(p);
  for (double k : {1e-3, 7.0, 1e4}) {
    auto q = p;
    for (auto& w : q.weight) w *= k;
    const auto b = nls::minimize(q);
    for (std::size_t j = 0; j < a.parameters.size(); ++j) {
      CHECK(testutil::close_rel(a.parameters[j], b.parameters[j], 1e-8));
    }
  }
}

TEST_CASE("covariance invariants and fixed parameters") {
  std::mt19937_64 rng(9);
  auto p = exp_problem(120.0, 80.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& y : p.y) y += 2.0 * n(rng);
  const auto r = nls::minimize(p);
  const auto& c = r.covariance;
  CHECK(std::abs(c(0, 1) - c(1, 0)) <= 1e-10 * std::abs(c(0, 1)));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12 * es.eigenvalues().maxCoeff());
  for (Eigen::Index j = 0; j < 2; ++j) {
    CHECK(r.sigma3[static_cast<std::size_t>(j)] == doctest::Approx(3.0 * std::sqrt(c(j, j))));
  }
  CHECK(r.chi2 <= r.initial_chi2);

  auto q = p;
  q.initial = {1000.0, 90.0};
  q.fixed = {true, false};
  const auto f = nls::minimize(q);
  CHECK(f.parameters[0] == 1000.0);
  CHECK(f.covariance(0, 0) == 0.0);
  CHECK(f.sigma3[0] == 0.0);
}

TEST_CASE("bounds are respected") {
  auto p = exp_problem(100.0, 150.0);
  p.bounds = {{0.0, 1e9}, {120.0, 400.0}};
  const auto r = nls::minimize(p);
  CHECK(r.parameters[1] == doctest::Approx(120.0));
  CHECK(r.at_bound[1]);
}

TEST_CASE("poisson weights") {
  const std::vector<double> y = {0.0, 0.5, 4.0};
  const auto w = nls::poisson_weights(y);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == 1.0);
  CHECK(w[2] == 0.25);
}

TEST_CASE("Jacobian check detects a wrong gradient") {
  auto bad = models::registry().front();
  bad.gradient = [](std::span<const double> p, double t, std::span<double> g) {
    models::exponential_gradient(p, t, g);
    g[1] *= 1.01;
  };
  const std::vector<double> p = {1000.0, 100.0};
  const std::vector<double> xs = {0, 50, 100, 200};
  CHECK(models::jacobian_discrepancy(bad, p, xs) > 1e-3);
}
