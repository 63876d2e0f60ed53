#include "ccphot/lineshape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ccphot/core.hpp"
#include "ccphot/errors.hpp"

namespace ccphot::lineshape {

double HRModel::s_total() const {
  if (s_total_override) return *s_total_override;
  double s = 0.0;
  for (const auto& m : modes) s += m.s;
  return s;
}

double HRModel::debye_waller() const { return std::exp(-s_total()); }

void HRModel::validate() const {
  double sum = 0.0;
  for (const auto& m : modes) {
    if (!(m.s >= 0.0) || !std::isfinite(m.s)) throw ValidationError("partial HR factors must be >= 0");
    if (!(m.energy_meV > 0.0)) throw ValidationError("phonon energies must be > 0");
    sum += m.s;
  }
  if (!(zpl_energy_eV > 0.0)) throw ValidationError("ZPL energy must be > 0");
  if (s_total_override) {
    if (*s_total_override < 0.0) throw ValidationError("S_total must be >= 0");
    if (modes.empty() && *s_total_override > 0.0) {
      throw ModelInconsistencyError("S_total > 0 with an empty mode list");
    }
    if (!modes.empty() && std::abs(*s_total_override - sum) > 1e-9 * std::max(1.0, sum)) {
      throw ModelInconsistencyError("S_total does not equal the sum of partial factors");
    }
  }
}

namespace {

// Cloud-in-cell deposit of `mass` at fractional index `pos` into `bins`.
void deposit(std::vector<double>& bins, double pos, double mass) {
  const auto k = static_cast<std::size_t>(std::floor(pos));
  const double f = pos - static_cast<double>(k);
  if (k < bins.size()) bins[k] += mass * (1.0 - f);
  if (f > 0.0 && k + 1 < bins.size()) bins[k + 1] += mass * f;
}

}  // namespace

HrLineshape hr_lineshape(const HRModel& model, std::span<const double> energy_eV,
                         const HrOptions& options) {
  model.validate();
  if (options.n_max < 0) throw PreconditionError("n_max must be >= 0");
  if (energy_eV.size() < 2) throw PreconditionError("energy grid needs at least two points");
  for (std::size_t i = 1; i < energy_eV.size(); ++i) {
    if (!(energy_eV[i] > energy_eV[i - 1])) throw PreconditionError("energy grid must increase");
  }

  const double s_total = model.s_total();
  HrLineshape out;
  out.energy_eV.assign(energy_eV.begin(), energy_eV.end());
  out.order_weights.resize(static_cast<std::size_t>(options.n_max) + 1);
  for (int n = 0; n <= options.n_max; ++n) {
    out.order_weights[static_cast<std::size_t>(n)] =
        std::exp(-s_total + n * (s_total > 0.0 ? std::log(s_total) : 0.0) - std::lgamma(n + 1.0));
  }
  if (s_total == 0.0) {
    std::fill(out.order_weights.begin() + 1, out.order_weights.end(), 0.0);
  }
  out.zpl_weight = out.order_weights[0];

  // Phonon-energy distribution on a uniform internal grid.
  double min_spacing_meV = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < energy_eV.size(); ++i) {
    min_spacing_meV = std::min(min_spacing_meV, 1e3 * (energy_eV[i] - energy_eV[i - 1]));
  }
  const double step = options.phonon_step_meV > 0.0 ? options.phonon_step_meV
                                                    : std::min(0.05, min_spacing_meV / 4.0);
  double max_mode = 0.0;
  for (const auto& m : model.modes) max_mode = std::max(max_mode, m.energy_meV);
  const auto n_bins = static_cast<std::size_t>(std::ceil(options.n_max * max_mode / step)) + 2;

  std::vector<double> mode_dist(static_cast<std::size_t>(std::ceil(max_mode / step)) + 2, 0.0);
  if (s_total > 0.0) {
    for (const auto& m : model.modes) deposit(mode_dist, m.energy_meV / step, m.s / s_total);
  }
  std::vector<std::pair<std::size_t, double>> sparse;
  for (std::size_t k = 0; k < mode_dist.size(); ++k) {
    if (mode_dist[k] != 0.0) sparse.emplace_back(k, mode_dist[k]);
  }

  std::vector<double> total(n_bins, 0.0);
  std::vector<double> order(n_bins, 0.0);
  order[0] = 1.0;
  total[0] = out.order_weights[0];
  for (int n = 1; n <= options.n_max && s_total > 0.0; ++n) {
    std::vector<double> next(n_bins, 0.0);
    for (std::size_t k = 0; k < n_bins; ++k) {
      if (order[k] == 0.0) continue;
      for (const auto& [off, w] : sparse) {
        if (k + off < n_bins) next[k + off] += order[k] * w;
      }
    }
    order.swap(next);
    const double pw = out.order_weights[static_cast<std::size_t>(n)];
    for (std::size_t k = 0; k < n_bins; ++k) total[k] += pw * order[k];
  }

  // Map phonon energy δ onto the emission grid E = E_zpl − δ.
  const std::size_t m = energy_eV.size();
  std::vector<double> mass(m, 0.0);
  std::vector<double> zpl_mass(m, 0.0);
  const double e0 = energy_eV.front();
  const double e_last = energy_eV.back();
  auto locate = [&](double e) -> double {
    // Fractional index of e in the (possibly non-uniform) grid, or -1.
    if (e < e0 || e > e_last) return -1.0;
    auto it = std::upper_bound(energy_eV.begin(), energy_eV.end(), e);
    std::size_t hi = static_cast<std::size_t>(it - energy_eV.begin());
    if (hi >= m) return static_cast<double>(m - 1);
    const std::size_t lo = hi - 1;
    return static_cast<double>(lo) + (e - energy_eV[lo]) / (energy_eV[hi] - energy_eV[lo]);
  };

  std::vector<double> density(m, 0.0);
  if (options.broadening_meV > 0.0) {
    const double s = options.broadening_meV * 1e-3;
    const double norm = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
    double zpl_area = 0.0;
    std::vector<double> zpl_density(m, 0.0);
    for (std::size_t k = 0; k < n_bins; ++k) {
      if (total[k] == 0.0) continue;
      const double e = model.zpl_energy_eV - 1e-3 * step * static_cast<double>(k);
      for (std::size_t i = 0; i < m; ++i) {
        const double u = (energy_eV[i] - e) / s;
        if (std::abs(u) > 12.0) continue;
        const double g = total[k] * norm * std::exp(-0.5 * u * u);
        density[i] += g;
        if (k == 0) zpl_density[i] += out.order_weights[0] * norm * std::exp(-0.5 * u * u);
      }
    }
    const double area = trapezoid(energy_eV, density);
    zpl_area = trapezoid(energy_eV, zpl_density);
    if (area > 0.0) {
      for (auto& d : density) d /= area;
      out.zpl_fraction_on_grid = zpl_area / area;
    }
  } else {
    for (std::size_t k = 0; k < n_bins; ++k) {
      if (total[k] == 0.0) continue;
      const double e = model.zpl_energy_eV - 1e-3 * step * static_cast<double>(k);
      const double pos = locate(e);
      if (pos < 0.0) continue;
      deposit(mass, pos, total[k]);
      if (k == 0) deposit(zpl_mass, pos, out.order_weights[0]);
    }
    const auto w = trapezoid_weights(energy_eV);
    const double captured = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (captured > 0.0) {
      for (std::size_t i = 0; i < m; ++i) density[i] = w[i] > 0.0 ? mass[i] / (w[i] * captured) : 0.0;
      out.zpl_fraction_on_grid = std::accumulate(zpl_mass.begin(), zpl_mass.end(), 0.0) / captured;
    }
  }
  out.density = std::move(density);
  return out;
}

}  // namespace ccphot::lineshape
