#include "ccphot/models.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "ccphot/decay.hpp"

namespace ccphot::models {

double exponential(std::span<const double> p, double t) {
  double f = 0.0;
  for (std::size_t k = 0; k + 1 < p.size(); k += 2) f += p[k] * std::exp(-t / p[k + 1]);
  return f;
}

void exponential_gradient(std::span<const double> p, double t, std::span<double> g) {
  for (std::size_t k = 0; k + 1 < p.size(); k += 2) {
    const double e = std::exp(-t / p[k + 1]);
    g[k] = e;
    g[k + 1] = p[k] * t / (p[k + 1] * p[k + 1]) * e;
  }
}

double thermal(std::span<const double> p, double temperature_K) {
  return decay::thermal_lifetime(p[0], p[1], p[2], temperature_K);
}

void thermal_gradient(std::span<const double> p, double temperature_K, std::span<double> g) {
  const double kt = decay::kBoltzmannMeVPerK * temperature_K;
  const double e = std::exp(-p[2] / kt);
  const double tot = 1.0 / (1.0 / p[0] + e / p[1]);
  const double tot2 = tot * tot;
  g[0] = tot2 / (p[0] * p[0]);
  g[1] = tot2 * e / (p[1] * p[1]);
  g[2] = tot2 * e / (p[1] * kt);
}

double gaussian_line(std::span<const double> p, double x) {
  const double u = (x - p[1]) / p[2];
  return p[0] * std::exp(-0.5 * u * u) + p[3] + p[4] * (x - p[1]);
}

void gaussian_line_gradient(std::span<const double> p, double x, std::span<double> g) {
  const double u = (x - p[1]) / p[2];
  const double e = std::exp(-0.5 * u * u);
  g[0] = e;
  g[1] = p[0] * e * u / p[2] - p[4];
  g[2] = p[0] * e * u * u / p[2];
  g[3] = 1.0;
  g[4] = x - p[1];
}

double doublet_ratio(std::span<const double> p, double temperature_K) {
  return 1.0 + (p[0] - 1.0) * std::exp(-temperature_K / p[1]);
}

void doublet_ratio_gradient(std::span<const double> p, double temperature_K, std::span<double> g) {
  const double e = std::exp(-temperature_K / p[1]);
  g[0] = e;
  g[1] = (p[0] - 1.0) * temperature_K / (p[1] * p[1]) * e;
}

double line(std::span<const double> p, double x) { return p[0] + p[1] * x; }

void line_gradient(std::span<const double>, double x, std::span<double> g) {
  g[0] = 1.0;
  g[1] = x;
}

namespace {
constexpr double kRad = std::numbers::pi / 180.0;
}

double malus(std::span<const double> p, double angle_deg) {
  const double c = std::cos((angle_deg - p[2]) * kRad);
  return p[0] + p[1] * c * c;
}

void malus_gradient(std::span<const double> p, double angle_deg, std::span<double> g) {
  const double u = (angle_deg - p[2]) * kRad;
  const double c = std::cos(u);
  g[0] = 1.0;
  g[1] = c * c;
  g[2] = p[1] * std::sin(2.0 * u) * kRad;
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> r = {
      {"single exponential", exponential, exponential_gradient, {{10.0, 1e5}, {5.0, 500.0}}, {0.0, 1000.0}},
      {"double exponential",
       exponential,
       exponential_gradient,
       {{10.0, 1e5}, {80.0, 500.0}, {10.0, 1e5}, {5.0, 60.0}},
       {0.0, 1000.0}},
      {"thermal lifetime", thermal, thermal_gradient, {{50.0, 500.0}, {10.0, 200.0}, {2.0, 60.0}}, {4.0, 300.0}},
      {"gaussian line",
       gaussian_line,
       gaussian_line_gradient,
       {{10.0, 1e4}, {1278.0, 1280.0}, {0.1, 1.0}, {0.0, 100.0}, {-10.0, 10.0}},
       {1277.0, 1281.0},
       1e-8},
      {"doublet ratio", doublet_ratio, doublet_ratio_gradient, {{1.2, 5.0}, {5.0, 80.0}}, {4.0, 150.0}},
      {"power law (log-log)", line, line_gradient, {{-5.0, 5.0}, {0.5, 2.5}}, {-1.0, 2.0}},
      {"polarization", malus, malus_gradient, {{0.0, 10.0}, {0.5, 10.0}, {-90.0, 90.0}}, {0.0, 180.0}},
  };
  return r;
}

double jacobian_discrepancy(const Entry& entry, std::span<const double> p, std::span<const double> xs) {
  const auto a = nls::analytic_jacobian(entry.gradient, p, xs);
  const auto f = nls::finite_diff_jacobian(entry.model, p, xs, entry.fd_step);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double worst = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double pj = p[static_cast<std::size_t>(j)];
    const double step = pj != 0.0 ? entry.fd_step * std::abs(pj) : entry.fd_step;
    const double col = a.col(j).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double scale = std::max(std::abs(a(i, j)), 1e-3 * col);
      if (scale == 0.0) continue;
      const double value = std::abs(entry.model(p, xs[static_cast<std::size_t>(i)]));
      const double floor = 8.0 * eps * value / step;
      if (floor > 1e-7 * scale) continue;
      worst = std::max(worst, std::abs(a(i, j) - f(i, j)) / scale);
    }
  }
  return worst;
}

}  // namespace ccphot::models
