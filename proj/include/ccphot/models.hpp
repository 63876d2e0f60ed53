#pragma once

#include <span>
#include <string>
#include <vector>

#include "ccphot/nls.hpp"

// Closed-form fit models with analytic gradients, shared by the fitters.
namespace ccphot::models {

/// Σ_k A_k exp(−t/τ_k) with p = (A1, τ1[, A2, τ2 ...]).
double exponential(std::span<const double> p, double t);
void exponential_gradient(std::span<const double> p, double t, std::span<double> g);

/// Thermally activated lifetime with p = (τ, τ_p, E_p[meV]), x = T[K].
double thermal(std::span<const double> p, double temperature_K);
void thermal_gradient(std::span<const double> p, double temperature_K, std::span<double> g);

/// Gaussian line on a linear baseline: p = (A, c, s, b0, b1),
/// A exp(−(x−c)²/2s²) + b0 + b1 (x − c).
double gaussian_line(std::span<const double> p, double x);
void gaussian_line_gradient(std::span<const double> p, double x, std::span<double> g);

/// Doublet ratio 1 + (r0 − 1) exp(−T/T0) with p = (r0, T0).
double doublet_ratio(std::span<const double> p, double temperature_K);
void doublet_ratio_gradient(std::span<const double> p, double temperature_K, std::span<double> g);

/// Straight line p0 + p1 x (log-log power law).
double line(std::span<const double> p, double x);
void line_gradient(std::span<const double> p, double x, std::span<double> g);

/// a + b cos²(θ − θ0) with θ in degrees, p = (a, b, θ0).
double malus(std::span<const double> p, double angle_deg);
void malus_gradient(std::span<const double> p, double angle_deg, std::span<double> g);

struct Entry {
  std::string name;
  nls::ModelFn model;
  nls::GradientFn gradient;
  std::vector<nls::Bound> parameter_ranges;  // for random draws
  nls::Bound x_range;
  double fd_step = 1e-6;  // relative step that resolves this model's derivatives
};

/// Every analytic model with representative parameter and abscissa ranges.
const std::vector<Entry>& registry();

/// Largest relative difference between analytic and central-difference
/// Jacobians at (p, xs). Entries are scaled by max(|J_ij|, 1e-3·max_i |J_ij|);
/// entries whose rounding floor exceeds 1e-7 of that scale are not compared.
double jacobian_discrepancy(const Entry& entry, std::span<const double> p, std::span<const double> xs);

}  // namespace ccphot::models
