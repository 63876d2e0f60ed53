#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccphot/core.hpp"
#include "ccphot/nls.hpp"

namespace ccphot::decay {

/// Boltzmann constant in meV/K.
inline constexpr double kBoltzmannMeVPerK = 0.0861733;

struct Background {
  double mean = 0.0;
  double std_error = 0.0;  // of the mean
  double std_dev = 0.0;    // of a single bin
  std::size_t n_bins = 0;
};

/// Mean and standard error of the bins preceding the excitation pulse.
/// Throws InsufficientDataError with fewer than 10 such bins.
Background estimate_background(const DecayTrace& trace);

enum class ModelKind { single_exp, double_exp };
enum class FitKind { single_exp, double_exp, automatic };

std::string to_string(ModelKind kind);
FitKind parse_fit_kind(const std::string& text);

struct Component {
  double amplitude = 0.0;  // counts/bin at the pulse instant
  double tau_ns = 0.0;
  double amplitude_sigma3 = 0.0;
  double tau_sigma3 = 0.0;
};

struct FitWindow {
  double t_start_ns = 0.0;
  double t_end_ns = 0.0;
};

struct DecayFitResult {
  Background background;
  std::vector<Component> components;  // τ descending
  ModelKind model_kind = ModelKind::single_exp;
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  std::size_t n_points = 0;
  double aic_single = 0.0;
  std::optional<double> aic_double;
  FitWindow window;
  double band_center_nm = 0.0;
  double temperature_K = 0.0;
  bool converged = false;
  std::vector<std::string> warnings;
};

struct DecayFitOptions {
  FitKind kind = FitKind::automatic;
  std::optional<FitWindow> window;
  /// Holds the slow lifetime of the double model at a given value.
  std::optional<double> pinned_slow_tau_ns;
  /// Explicit starting point (1 or 2 components), bypassing the heuristics.
  std::vector<Component> initial;
  /// Per-parameter pin mask over (A1, τ1[, A2, τ2]) for `initial`.
  std::vector<bool> pinned;
  double aic_threshold = 10.0;
};

/// Multi-exponential decay evaluated at time since the pulse.
double multi_exponential(std::span<const Component> components, double t_since_pulse_ns);

/// Default window: pulse + 2 bins to the last bin at or above background + 3σ.
FitWindow default_window(const DecayTrace& trace, const Background& background);

DecayFitResult fit_decay(const DecayTrace& trace, const DecayFitOptions& options = {});

// ---------------------------------------------------------------------------
// Thermally activated decay

struct ThermalPoint {
  double temperature_K = 0.0;
  double tau_ns = 0.0;
  double sigma_ns = 0.0;
};

struct ThermalModel {
  double tau_ns = 0.0;
  double tau_p_ns = 0.0;
  double e_p_meV = 0.0;
  double tau_sigma3 = 0.0;
  double tau_p_sigma3 = 0.0;
  double e_p_sigma3 = 0.0;
  double reduced_chi2 = 0.0;
  bool converged = false;

  double lifetime(double temperature_K) const;
};

/// τ_tot(T) = [1/τ + exp(−E_p / k_B T) / τ_p]⁻¹.
double thermal_lifetime(double tau_ns, double tau_p_ns, double e_p_meV, double temperature_K);

ThermalModel fit_thermal(std::span<const ThermalPoint> points);

std::vector<ThermalPoint> load_thermal_points(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Pooling across bands

struct LifetimeSample {
  double tau_ns = 0.0;
  double sigma_ns = 0.0;
  std::string band;
};

struct PooledChannel {
  double tau_ns = 0.0;
  double sigma_ns = 0.0;
  std::vector<std::string> bands;
};

/// Groups samples into channels (relative τ difference below match_tolerance)
/// and returns inverse-variance weighted means, ordered by τ descending.
std::vector<PooledChannel> pool_lifetimes(std::span<const LifetimeSample> samples,
                                          double match_tolerance = 0.3);
std::vector<PooledChannel> pool_lifetimes(std::span<const DecayFitResult> results,
                                          double match_tolerance = 0.3);

}  // namespace ccphot::decay
