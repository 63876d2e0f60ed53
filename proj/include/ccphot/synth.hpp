#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ccphot/core.hpp"
#include "ccphot/decay.hpp"
#include "ccphot/lineshape.hpp"
#include "ccphot/spectrum.hpp"

namespace ccphot::synth {

// ---------------------------------------------------------------------------
// Deterministic randomness

/// Counter-based stream: every (seed, index) pair owns an independent
/// splitmix64 sequence, so output does not depend on evaluation order.
class PointStream {
 public:
  PointStream(std::uint64_t seed, std::uint64_t index);
  std::uint64_t next();
  double uniform();  // [0, 1)
  double normal();   // Box-Muller
  /// Inversion below rate 30, rounded Gaussian approximation above.
  double poisson(double rate);

 private:
  std::uint64_t state_;
};

enum class NoiseKind { none, poisson, gaussian };

struct Noise {
  NoiseKind kind = NoiseKind::none;
  double sigma = 0.0;
  bool relative = false;  // gaussian sigma as a fraction of the expected value
};

/// Applies noise to one expected value; the result is clamped at zero for
/// non-negative outputs.
double apply_noise(const Noise& noise, double expected, std::uint64_t seed, std::uint64_t index,
                   bool clamp_nonnegative = true);

// ---------------------------------------------------------------------------
// Generator specification

struct Grid {
  double start = 0.0;
  double step = 1.0;
  std::size_t count = 0;
  std::vector<double> values;  // explicit samples override start/step/count

  std::vector<double> points() const;
};

struct DecayTruth {
  double background = 0.0;
  std::vector<decay::Component> components;
  double pulse_time_ns = 0.0;
  double temperature_K = 4.0;
  double band_center_nm = 0.0;
  double band_width_nm = 0.0;
};

struct ZplTruth {
  std::string label;
  spectrum::Emitter emitter = spectrum::Emitter::alpha;
  double center_nm = 0.0;
  double fwhm_nm = 0.5;
  double area = 0.0;
};

struct SidebandTruth {
  spectrum::PsbModel model;
  double reference_nm = 0.0;
  double min_phonon_meV = 0.0;
  double max_phonon_meV = 200.0;
};

struct HrTruth {
  lineshape::HRModel model;
  spectrum::Emitter emitter = spectrum::Emitter::alpha;
  double area = 0.0;
  double broadening_meV = 1.0;
};

struct SpectrumTruth {
  std::vector<ZplTruth> zpls;
  std::vector<SidebandTruth> sidebands;
  std::vector<HrTruth> hr;
  double temperature_K = 4.0;
  double power_mW = 0.0;
  std::string label = "synthetic";
};

struct ThermalTruth {
  double tau_ns = 0.0;
  double tau_p_ns = 0.0;
  double e_p_meV = 0.0;
};

struct PowerTruth {
  double prefactor = 1.0;
  double exponent = 1.0;
};

struct PolarizationTruth {
  double offset = 0.0;     // a
  double amplitude = 1.0;  // b
  double theta0_deg = 0.0;
};

enum class Kind { decay, spectrum, thermal_series, power_series, polarization_series };
std::string to_string(Kind kind);

using Truth = std::variant<DecayTruth, SpectrumTruth, ThermalTruth, PowerTruth, PolarizationTruth>;

struct GeneratorSpec {
  std::uint64_t seed = 0;
  Kind kind = Kind::decay;
  Truth truth;
  Noise noise;
  Grid sampling;

  void validate() const;
};

DecayTrace gen_decay(const GeneratorSpec& spec);
Spectrum gen_spectrum(const GeneratorSpec& spec);
std::vector<decay::ThermalPoint> gen_thermal_series(const GeneratorSpec& spec);
std::vector<std::pair<double, double>> gen_power_series(const GeneratorSpec& spec);
std::vector<std::pair<double, double>> gen_polarization_series(const GeneratorSpec& spec);

/// Per-emitter component areas of a spectrum truth on its sampling grid.
struct EmitterAreas {
  double zpl = 0.0;
  double psb = 0.0;
  double dw() const { return zpl + psb > 0.0 ? zpl / (zpl + psb) : 0.0; }
};

struct CompositeAreas {
  EmitterAreas alpha;
  EmitterAreas beta;
  double dw_mean() const;
};

CompositeAreas composite_areas(const GeneratorSpec& spec);

// ---------------------------------------------------------------------------
// Canned scenarios

/// Knobs of the two-emitter composite. Defaults reproduce the published
/// Debye-Waller values (alpha 39 %, beta 22 %, mean 34 %).
struct CompositeParams {
  double alpha3_nm = 1278.6;
  double beta_nm = 1334.0;
  double splitting_meV = spectrum::kNominalDoubletSplittingMeV;
  double doublet_ratio = 3.0 / 7.0;
  double alpha_total = 4.0e4;  // counts·nm of alpha emission
  double dw_alpha = 0.39;
  double dw_beta = 0.22;
  double dw_mean = 0.34;
  double alpha_sigma_meV = 12.0;
  double alpha_delta0_meV = 62.0;
  double beta_sigma_meV = 10.0;
  double beta_delta0_meV = 45.0;
  double beta_min_phonon_meV = 20.0;
  double alpha_fwhm_nm = 0.5;
  double beta_fwhm_nm = 0.6;
  Grid sampling{1250.0, 0.2, 2001, {}};
};

GeneratorSpec composite_spectrum(const CompositeParams& params, std::uint64_t seed, Noise noise);

/// Two-line vanadium-like composite: alpha doublet (70:30, 1.47 meV) with a
/// Gaussian-series sideband, beta line with a sideband above 20 meV.
GeneratorSpec reference_composite(std::uint64_t seed, Noise noise);

struct DoubletSeriesTruth {
  double r0 = 1.0;       // low-temperature area ratio alpha3/alpha2
  double t0_K = 20.0;
  double alpha3_nm = 1278.6;
  double splitting_meV = spectrum::kNominalDoubletSplittingMeV;
  double fwhm_nm = 0.5;
  double total_area = 2.0e4;
  double baseline = 5.0;
};

std::vector<Spectrum> gen_doublet_series(std::uint64_t seed, const DoubletSeriesTruth& truth,
                                         const std::vector<double>& temperatures_K, Noise noise);

// ---------------------------------------------------------------------------
// Structured-text specification (JSON)

GeneratorSpec parse_generator_spec(const std::string& json_text);
GeneratorSpec load_generator_spec(const std::filesystem::path& path);

}  // namespace ccphot::synth
