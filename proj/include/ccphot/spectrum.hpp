#pragma once

#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccphot/core.hpp"

namespace ccphot::spectrum {

// ---------------------------------------------------------------------------
// Zero-phonon lines

/// Recognised ZPL labels: alpha2, alpha3, beta, alphaP.
const std::vector<std::string>& zpl_labels();

/// Nominal doublet splitting and the tolerance used for the consistency flag.
inline constexpr double kNominalDoubletSplittingMeV = 1.47;
inline constexpr double kDoubletSplittingToleranceMeV = 0.3;

struct ExpectedLine {
  std::string label;
  double center_nm = 0.0;
  double half_window_nm = 1.0;
};

struct ZplLine {
  std::string label;
  double center_nm = 0.0;
  double center_sigma3 = 0.0;
  double fwhm_nm = 0.0;
  bool fwhm_upper_bound = false;  // fitted width below the resolution limit
  double amplitude = 0.0;         // Gaussian peak height above baseline
  double area = 0.0;              // counts·nm, baseline removed
  double area_sigma = 0.0;

  /// Gaussian profile of this line (baseline excluded).
  double profile(double wavelength_nm) const;
};

struct ZplSet {
  std::vector<ZplLine> lines;
  std::optional<double> doublet_splitting_meV;  // E(alpha3) − E(alpha2)
  bool splitting_consistent = false;
  std::vector<std::string> warnings;

  const ZplLine* find(const std::string& label) const;
  double area_of(std::initializer_list<const char*> labels) const;
};

/// Locates each expected line (strict local maximum inside its window) and
/// fits a Gaussian on a linear baseline. resolution_nm <= 0 uses twice the
/// local sample pitch as the resolution limit.
ZplSet find_zpls(const Spectrum& spectrum, std::span<const ExpectedLine> expected,
                 double resolution_nm = 0.0);

/// Recomputes the doublet splitting and consistency flag of a set.
void update_doublet(ZplSet& set);

// ---------------------------------------------------------------------------
// Doublet thermometry

struct RatioPoint {
  double temperature_K = 0.0;
  double ratio = 0.0;  // area(alpha3) / area(alpha2)
  double sigma = 0.0;
};

/// r(T) = 1 + (r0 − 1)·exp(−T/T0).
struct DoubletRatioModel {
  double r0 = 1.0;
  double t0_K = 1.0;
  double r0_sigma3 = 0.0;
  double t0_sigma3 = 0.0;
  double reduced_chi2 = 0.0;
  std::vector<RatioPoint> points;

  double ratio(double temperature_K) const;
  /// Fraction of the doublet area in the dominant (alpha3) line.
  double dominant_share(double temperature_K) const;
  /// True when the 4 K share is within 0.05 of the reported ~70 %.
  bool share_consistent() const;
};

DoubletRatioModel fit_doublet_ratio(std::span<const RatioPoint> points);
DoubletRatioModel doublet_ratio_vs_T(std::span<const Spectrum> spectra,
                                     std::span<const ExpectedLine> doublet_lines);

// ---------------------------------------------------------------------------
// Power and polarization checks

struct PowerLawResult {
  double exponent = 0.0;
  double exponent_sigma3 = 0.0;
  double prefactor = 0.0;
  bool consistent_with_linear = false;
};

/// Fits I = c·P^k as a straight line in log-log space.
PowerLawResult power_law_check(std::span<const std::pair<double, double>> points);

struct PolarizationResult {
  double i_min = 0.0;
  double i_max = 0.0;
  double theta0_deg = 0.0;
  bool theta_defined = false;
  double visibility = 0.0;
  double visibility_sigma3 = 0.0;
};

/// Fits I(θ) = a + b·cos²(θ − θ0); visibility = b / (2a + b).
PolarizationResult polarization_fit(std::span<const std::pair<double, double>> points);

// ---------------------------------------------------------------------------
// Gaussian-series phonon sideband

enum class Emitter { alpha, beta };
std::string to_string(Emitter e);

struct Doublet {
  double splitting_meV = kNominalDoubletSplittingMeV;
  /// Weight of the lower-energy copy relative to the reference copy, (0, 1].
  double ratio = 3.0 / 7.0;
};

struct PsbModel {
  double i0 = 0.0;
  double sigma_meV = 1.0;
  double delta0_meV = 0.0;
  int j_max = 10;
  std::optional<Doublet> doublet;
  Emitter emitter = Emitter::alpha;

  void validate() const;
};

/// I(δ) = I0 Σ_{j=1}^{j_max} exp(−((δ−Δ0)/(√j σ))²) / (√(jπ) σ), with each
/// term split into the weighted doublet when one is configured. δ is the
/// phonon energy below the reference (higher-energy) line.
double psb_eval(const PsbModel& model, double delta_meV);
std::vector<double> psb_eval(const PsbModel& model, std::span<const double> delta_meV);

/// As psb_eval, but each doublet copy is zero outside [lo, hi] in its own
/// phonon-energy frame.
double psb_eval_windowed(const PsbModel& model, double delta_meV, double lo_meV, double hi_meV);

/// Sideband density per nm at a wavelength, relative to a reference ZPL.
double sideband_density_nm(const PsbModel& model, double reference_eV, double wavelength_nm,
                           double lo_meV, double hi_meV);

/// Phonon energy (meV) of a wavelength below a reference energy.
double phonon_energy_meV(double reference_eV, double wavelength_nm);

struct PsbConstraints {
  double beta_min_phonon_meV = 20.0;
  double max_phonon_meV = 200.0;
  /// Wavelength ranges excluded from the sideband fit (sharp non-HR features).
  std::vector<std::pair<double, double>> exclude_nm;
  /// Wavelength ranges whose residual stays with alpha rather than beta.
  std::vector<std::pair<double, double>> alpha_assigned_nm;
  /// ZPL cores (± this many FWHM) are left out of the sideband fit.
  double zpl_core_fwhm = 3.0;
};

struct PsbFit {
  PsbModel alpha;
  double i0_sigma3 = 0.0;
  double sigma_sigma3 = 0.0;
  double delta0_sigma3 = 0.0;
  double reduced_chi2 = 0.0;
  double reference_eV = 0.0;  // alpha3 (or single alpha) line energy
  std::vector<double> wavelength_nm;
  std::vector<double> zpl_model;
  std::vector<double> alpha_model;
  std::vector<double> residual;  // assigned to beta
  double alpha_zpl_area = 0.0;
  double alpha_psb_area = 0.0;
  double beta_zpl_area = 0.0;
  double beta_psb_area = 0.0;
  double dw_alpha = 0.0;
  double dw_beta = 0.0;
  std::vector<std::string> warnings;
};

PsbFit fit_psb(const Spectrum& spectrum, const ZplSet& zpls, const PsbConstraints& constraints = {});

// ---------------------------------------------------------------------------
// Debye-Waller partitioning

struct DwPartition {
  double dw_mean = 0.0;
  double dw_alpha_low = 0.0;
  double dw_alpha_high = 0.0;
  double dw_beta_low = 0.0;
  std::optional<double> dw_alpha_refined;
  std::optional<double> dw_beta_refined;
  double alpha_zpl_area = 0.0;
  double beta_zpl_area = 0.0;
  double alpha_only_psb_area = 0.0;
  double ambiguous_psb_area = 0.0;
  bool truncation_corrected = false;
  double truncation_factor = 1.0;

  /// 0 ≤ low ≤ refined ≤ high ≤ 1 for alpha; 0 ≤ beta_low ≤ refined ≤ 1.
  bool ordered() const;
};

struct PartitionOptions {
  /// Applied to every fraction when the record stops short of the full
  /// sideband range (ZPL one third of total versus one half recorded).
  double truncation_correction = 2.0 / 3.0;
  double max_phonon_meV = 200.0;
};

DwPartition partition_dw(const Spectrum& spectrum, const ZplSet& zpls, double partition_energy_meV,
                         const PsbFit* psb_fit = nullptr, const PartitionOptions& options = {});

}  // namespace ccphot::spectrum
