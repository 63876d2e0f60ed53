#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ccphot/core.hpp"

namespace ccphot::photophysics {

struct Budget {
  std::optional<SiteAssignment> site;
  double s_th = 0.0;
  double dw_th = 0.0;
  double dw_exp = 0.0;
  double tau_rad_ns = 0.0;
  double tau_tot_ns = 0.0;
  std::optional<double> tau_nr_ns;  // absent in the purely radiative limit
  double eta_rad = 0.0;
  double eta_tot = 0.0;
  std::vector<std::string> notes;
};

/// Throws ModelInconsistencyError when τ_tot exceeds τ_rad.
Budget budget(double tau_rad_ns, double tau_tot_ns, double dw_exp, double s_th,
              std::optional<SiteAssignment> site = std::nullopt);

/// Published summary row for comparison with a computed budget.
struct ReferenceRow {
  Site site;
  double s_th;
  double dw_th;
  double dw_exp;
  double tau_rad_ns;
  double tau_tot_ns;
  double tau_nr_ns;
  double eta_rad;
  double eta_tot;
};

const std::vector<ReferenceRow>& reference_rows();
const ReferenceRow* reference_row(Site site);

/// Adds a note to `b` for every quantity that disagrees with the published
/// row by more than its rounding.
void compare_with_reference(Budget& b);

// ---------------------------------------------------------------------------
// Cavity

inline constexpr double kDefaultSiCIndex = 2.56;
inline constexpr double kDefaultExtraction = 0.61;

struct CavityParams {
  double wavelength_nm = 1279.0;
  double finesse = 3.4e4;
  double roc_mm = 1.3;
  double l_vac_um = 5.0;
  double l_sic_um = 5.0;
  double n_sic = kDefaultSiCIndex;
  std::optional<double> w_c_um;  // derived from the mirror geometry when absent
  double eta_tot = 0.089;
  double extraction = kDefaultExtraction;

  void validate() const;
};

/// Plano-concave Gaussian waist: w0² = (λ/π)·√(L(R_c − L)), L = L_vac + L_SiC.
/// Throws ConfigurationError when the geometry is unstable (L >= R_c).
double plano_concave_waist_um(const CavityParams& p);

/// w_C from the override or the plano-concave waist.
double mode_radius_um(const CavityParams& p);

struct CrossSections {
  double sigma_e_m2 = 0.0;  // 3λ²/2π
  double sigma_c_m2 = 0.0;  // π w_C²
};

CrossSections mode_cross_sections(const CavityParams& p);

/// (L_vac + n L_SiC) / (L_vac + n² L_SiC).
double fill_factor(const CavityParams& p);

struct Cooperativity {
  double c = 0.0;
  double eta_cav = 0.0;
  double eta_out = 0.0;
  double w_c_um = 0.0;
  double f_l = 0.0;
  CrossSections sections;
};

/// C = (2/π)(σ_E/σ_C) η_tot (f_L / n_SiC) F and η_cav = 2C/(2C + 1).
Cooperativity cooperativity(const CavityParams& p);

double eta_cav(double c);

struct SweepPoint {
  double finesse = 0.0;
  double c = 0.0;
  double eta_cav = 0.0;
  double eta_out = 0.0;
};

/// Log-spaced finesse sweep from `f_lo` to `f_hi` inclusive (n >= 2).
std::vector<SweepPoint> finesse_sweep(const CavityParams& p, double f_lo, double f_hi, std::size_t n);

}  // namespace ccphot::photophysics
