#pragma once

#include <vector>

#include "ccphot/core.hpp"
#include "ccphot/spectrum.hpp"
#include "ccphot/synth.hpp"

namespace testutil {

inline std::vector<ccphot::spectrum::ExpectedLine> composite_lines(double alpha3_nm = 1278.6,
                                                                    double beta_nm = 1334.0) {
  using namespace ccphot;
  const double alpha2_nm = energy_to_wavelength(
      {kHcEvNm / alpha3_nm - spectrum::kNominalDoubletSplittingMeV * 1e-3, EnergyUnit::eV});
  return {{"alpha3", alpha3_nm, 0.9}, {"alpha2", alpha2_nm, 0.9}, {"beta", beta_nm, 1.2}};
}

/// Partition at the beta ZPL plus its sideband onset.
inline double composite_partition_meV(const ccphot::spectrum::ZplSet& z, double beta_min_meV = 20.0) {
  using namespace ccphot;
  const auto* ref = z.find("alpha3") ? z.find("alpha3") : z.find("alpha2");
  return 1e3 * (wavelength_to_energy(ref->center_nm).eV() - wavelength_to_energy(z.find("beta")->center_nm).eV()) +
         beta_min_meV;
}

/// Randomised two-emitter composite on a 0.25 nm grid. Sideband peaks stay
/// inside the alpha-only window so the alpha shape is identifiable.
inline ccphot::synth::GeneratorSpec random_composite(std::uint64_t stream, std::uint64_t index) {
  using namespace ccphot;
  synth::PointStream r(stream, index);
  synth::CompositeParams c;
  c.dw_alpha = 0.25 + 0.5 * r.uniform();
  c.dw_beta = 0.05 + (c.dw_alpha - 0.1) * r.uniform();
  c.dw_mean = c.dw_beta + (c.dw_alpha - c.dw_beta) * (0.2 + 0.6 * r.uniform());
  c.alpha_sigma_meV = 8.0 + 8.0 * r.uniform();
  c.alpha_delta0_meV = 35.0 + 25.0 * r.uniform();
  c.beta_sigma_meV = 6.0 + 8.0 * r.uniform();
  c.beta_delta0_meV = 30.0 + 40.0 * r.uniform();
  c.alpha_total = 1e4 * (1.0 + 4.0 * r.uniform());
  c.sampling = {1250.0, 0.25, 1601, {}};
  return synth::composite_spectrum(c, stream * 7919 + index, {synth::NoiseKind::poisson, 0.0, false});
}

}  // namespace testutil
