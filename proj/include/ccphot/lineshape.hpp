#pragma once

#include <optional>
#include <span>
#include <vector>

namespace ccphot::lineshape {

struct PhononMode {
  double s = 0.0;           // partial Huang-Rhys factor
  double energy_meV = 0.0;  // ħω
};

struct HRModel {
  std::vector<PhononMode> modes;
  double zpl_energy_eV = 1.0;
  /// Total Huang-Rhys factor when given independently of the modes.
  std::optional<double> s_total_override;

  double s_total() const;
  double debye_waller() const;  // exp(−S_total)
  void validate() const;
};

struct HrOptions {
  int n_max = 8;
  double phonon_step_meV = 0.0;  // 0 picks a step from the output grid
  double broadening_meV = 0.0;   // Gaussian standard deviation, 0 for none
};

struct HrLineshape {
  std::vector<double> energy_eV;
  std::vector<double> density;         // per eV, unit trapezoid area
  std::vector<double> order_weights;   // e^{−S} Sⁿ / n!, n = 0..n_max
  double zpl_weight = 1.0;             // order_weights[0]
  double zpl_fraction_on_grid = 1.0;   // ZPL share of the normalised output
};

/// Multi-phonon expansion: order n carries weight e^{−S}Sⁿ/n! spread over the
/// n-fold self-convolution of the normalised mode distribution.
HrLineshape hr_lineshape(const HRModel& model, std::span<const double> energy_eV,
                         const HrOptions& options = {});

}  // namespace ccphot::lineshape
