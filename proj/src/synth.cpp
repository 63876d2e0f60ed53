#include "ccphot/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ccphot/errors.hpp"

namespace ccphot::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr double kFwhmToSigma = 0.42466090014400953;  // 1 / (2 √(2 ln 2))

double gaussian_density(double x, double center, double fwhm) {
  const double s = fwhm * kFwhmToSigma;
  const double u = (x - center) / s;
  return std::exp(-0.5 * u * u) / (s * std::sqrt(2.0 * std::numbers::pi));
}

template <class T>
const T& truth_as(const GeneratorSpec& spec, Kind expected) {
  if (spec.kind != expected) {
    throw ValidationError("generator spec kind is " + to_string(spec.kind) + ", expected " +
                          to_string(expected));
  }
  const T* t = std::get_if<T>(&spec.truth);
  if (!t) throw ValidationError("generator truth does not match kind " + to_string(expected));
  return *t;
}

}  // namespace

PointStream::PointStream(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed;
  const std::uint64_t a = splitmix64(s);
  std::uint64_t i = index ^ 0xD1B54A32D192ED03ULL;
  state_ = a ^ splitmix64(i);
}

std::uint64_t PointStream::next() { return splitmix64(state_); }

double PointStream::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double PointStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double PointStream::poisson(double rate) {
  if (!(rate > 0.0)) return 0.0;
  if (rate >= 30.0) {
    return std::max(0.0, std::round(rate + std::sqrt(rate) * normal()));
  }
  const double u = uniform();
  double p = std::exp(-rate);
  double cdf = p;
  double k = 0.0;
  while (u > cdf && k < 1000.0) {
    k += 1.0;
    p *= rate / k;
    cdf += p;
  }
  return k;
}

double apply_noise(const Noise& noise, double expected, std::uint64_t seed, std::uint64_t index,
                   bool clamp_nonnegative) {
  PointStream stream(seed, index);
  double v = expected;
  switch (noise.kind) {
    case NoiseKind::none:
      break;
    case NoiseKind::poisson:
      v = stream.poisson(expected);
      break;
    case NoiseKind::gaussian: {
      const double s = noise.relative ? noise.sigma * std::abs(expected) : noise.sigma;
      v = expected + s * stream.normal();
      break;
    }
  }
  return clamp_nonnegative ? std::max(v, 0.0) : v;
}

std::vector<double> Grid::points() const {
  if (!values.empty()) return values;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = start + step * static_cast<double>(i);
  return out;
}

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::decay: return "decay";
    case Kind::spectrum: return "spectrum";
    case Kind::thermal_series: return "thermal_series";
    case Kind::power_series: return "power_series";
    case Kind::polarization_series: return "polarization_series";
  }
  return "unknown";
}

void GeneratorSpec::validate() const {
  if (sampling.values.empty() && sampling.count == 0) throw ValidationError("empty sampling grid");
  if (noise.kind == NoiseKind::gaussian && !(noise.sigma >= 0.0)) {
    throw ValidationError("gaussian noise sigma must be >= 0");
  }
  const auto pts = sampling.points();
  switch (kind) {
    case Kind::decay: {
      const auto& t = truth_as<DecayTruth>(*this, Kind::decay);
      if (t.background < 0.0) throw ValidationError("background must be >= 0");
      for (const auto& c : t.components) {
        if (!(c.tau_ns > 0.0) || c.amplitude < 0.0) {
          throw ValidationError("decay components need tau > 0 and A >= 0");
        }
      }
      break;
    }
    case Kind::spectrum: {
      const auto& t = truth_as<SpectrumTruth>(*this, Kind::spectrum);
      std::set<std::string> labels;
      for (const auto& z : t.zpls) {
        if (!labels.insert(z.label).second) {
          throw ValidationError("duplicate ZPL component '" + z.label + "'");
        }
        if (!(z.fwhm_nm > 0.0) || z.area < 0.0 || !(z.center_nm > 0.0)) {
          throw ValidationError("ZPL component '" + z.label + "' has invalid shape");
        }
      }
      std::set<spectrum::Emitter> psb_emitters;
      for (const auto& s : t.sidebands) {
        s.model.validate();
        if (!psb_emitters.insert(s.model.emitter).second) {
          throw ValidationError("two sideband components for emitter " +
                                spectrum::to_string(s.model.emitter));
        }
        if (!(s.reference_nm > 0.0) || !(s.min_phonon_meV < s.max_phonon_meV)) {
          throw ValidationError("sideband component has invalid reference or window");
        }
      }
      for (const auto& h : t.hr) {
        h.model.validate();
        if (!psb_emitters.insert(h.emitter).second) {
          throw ValidationError("Huang-Rhys and sideband components overlap for emitter " +
                                spectrum::to_string(h.emitter));
        }
      }
      for (std::size_t i = 1; i < pts.size(); ++i) {
        if (!(pts[i] > pts[i - 1])) throw ValidationError("wavelength grid must increase");
      }
      break;
    }
    case Kind::thermal_series: {
      const auto& t = truth_as<ThermalTruth>(*this, Kind::thermal_series);
      if (!(t.tau_ns > 0.0) || !(t.tau_p_ns > 0.0) || t.e_p_meV < 0.0) {
        throw ValidationError("thermal truth needs tau, tau_p > 0 and E_p >= 0");
      }
      for (double T : pts) {
        if (!(T > 0.0)) throw ValidationError("non-positive temperature in grid");
      }
      break;
    }
    case Kind::power_series: {
      const auto& t = truth_as<PowerTruth>(*this, Kind::power_series);
      if (!(t.prefactor > 0.0)) throw ValidationError("power-law prefactor must be > 0");
      for (double p : pts) {
        if (!(p > 0.0)) throw ValidationError("non-positive power in grid");
      }
      break;
    }
    case Kind::polarization_series: {
      const auto& t = truth_as<PolarizationTruth>(*this, Kind::polarization_series);
      if (t.offset < 0.0 || t.amplitude < 0.0) {
        throw ValidationError("polarization truth needs a, b >= 0");
      }
      break;
    }
  }
}

DecayTrace gen_decay(const GeneratorSpec& spec) {
  spec.validate();
  const auto& truth = truth_as<DecayTruth>(spec, Kind::decay);
  const auto times = spec.sampling.points();
  std::vector<double> counts(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    double expected = truth.background;
    const double dt = times[i] - truth.pulse_time_ns;
    if (dt >= 0.0) {
      for (const auto& c : truth.components) expected += c.amplitude * std::exp(-dt / c.tau_ns);
    }
    counts[i] = apply_noise(spec.noise, expected, spec.seed, i);
  }
  return DecayTrace(times, std::move(counts), truth.pulse_time_ns, truth.temperature_K,
                    truth.band_center_nm, truth.band_width_nm);
}

namespace {

// Density per nm of the normalised HR lineshape on a wavelength grid.
std::vector<double> hr_density_nm(const HrTruth& h, const std::vector<double>& wl) {
  std::vector<double> energy(wl.size());
  for (std::size_t i = 0; i < wl.size(); ++i) energy[i] = kHcEvNm / wl[i];
  std::vector<double> e_sorted(energy.rbegin(), energy.rend());
  lineshape::HrOptions opts;
  opts.broadening_meV = h.broadening_meV;
  const auto ls = lineshape::hr_lineshape(h.model, e_sorted, opts);
  std::vector<double> out(wl.size());
  for (std::size_t i = 0; i < wl.size(); ++i) {
    const double per_ev = ls.density[wl.size() - 1 - i];
    out[i] = per_ev * kHcEvNm / (wl[i] * wl[i]);
  }
  return out;
}

struct Components {
  std::vector<double> alpha_zpl, alpha_psb, beta_zpl, beta_psb;
};

Components evaluate_components(const SpectrumTruth& t, const std::vector<double>& wl) {
  Components c;
  for (auto* v : {&c.alpha_zpl, &c.alpha_psb, &c.beta_zpl, &c.beta_psb}) v->assign(wl.size(), 0.0);
  for (const auto& z : t.zpls) {
    auto& dst = z.emitter == spectrum::Emitter::alpha ? c.alpha_zpl : c.beta_zpl;
    for (std::size_t i = 0; i < wl.size(); ++i) dst[i] += z.area * gaussian_density(wl[i], z.center_nm, z.fwhm_nm);
  }
  for (const auto& s : t.sidebands) {
    auto& dst = s.model.emitter == spectrum::Emitter::alpha ? c.alpha_psb : c.beta_psb;
    const double ref = kHcEvNm / s.reference_nm;
    for (std::size_t i = 0; i < wl.size(); ++i) {
      dst[i] += spectrum::sideband_density_nm(s.model, ref, wl[i], s.min_phonon_meV, s.max_phonon_meV);
    }
  }
  for (const auto& h : t.hr) {
    auto& dst = h.emitter == spectrum::Emitter::alpha ? c.alpha_psb : c.beta_psb;
    const auto d = hr_density_nm(h, wl);
    for (std::size_t i = 0; i < wl.size(); ++i) dst[i] += h.area * d[i];
  }
  return c;
}

}  // namespace

Spectrum gen_spectrum(const GeneratorSpec& spec) {
  spec.validate();
  const auto& truth = truth_as<SpectrumTruth>(spec, Kind::spectrum);
  const auto wl = spec.sampling.points();
  const Components c = evaluate_components(truth, wl);
  std::vector<double> intensity(wl.size());
  for (std::size_t i = 0; i < wl.size(); ++i) {
    const double expected = c.alpha_zpl[i] + c.alpha_psb[i] + c.beta_zpl[i] + c.beta_psb[i];
    intensity[i] = apply_noise(spec.noise, expected, spec.seed, i);
  }
  return Spectrum(wl, std::move(intensity), truth.temperature_K, truth.power_mW, std::nullopt,
                  truth.label);
}

double CompositeAreas::dw_mean() const {
  const double total = alpha.zpl + alpha.psb + beta.zpl + beta.psb;
  return total > 0.0 ? (alpha.zpl + beta.zpl) / total : 0.0;
}

CompositeAreas composite_areas(const GeneratorSpec& spec) {
  spec.validate();
  const auto& truth = truth_as<SpectrumTruth>(spec, Kind::spectrum);
  const auto wl = spec.sampling.points();
  const Components c = evaluate_components(truth, wl);
  CompositeAreas a;
  a.alpha.zpl = trapezoid(wl, c.alpha_zpl);
  a.alpha.psb = trapezoid(wl, c.alpha_psb);
  a.beta.zpl = trapezoid(wl, c.beta_zpl);
  a.beta.psb = trapezoid(wl, c.beta_psb);
  return a;
}

std::vector<decay::ThermalPoint> gen_thermal_series(const GeneratorSpec& spec) {
  spec.validate();
  const auto& t = truth_as<ThermalTruth>(spec, Kind::thermal_series);
  const auto temps = spec.sampling.points();
  std::vector<decay::ThermalPoint> out;
  for (std::size_t i = 0; i < temps.size(); ++i) {
    const double kt = decay::kBoltzmannMeVPerK * temps[i];
    const double tau = 1.0 / (1.0 / t.tau_ns + std::exp(-t.e_p_meV / kt) / t.tau_p_ns);
    double sigma = 0.01 * tau;
    if (spec.noise.kind == NoiseKind::gaussian) {
      sigma = spec.noise.relative ? spec.noise.sigma * tau : spec.noise.sigma;
    } else if (spec.noise.kind == NoiseKind::poisson) {
      sigma = std::sqrt(tau);
    }
    const double value = apply_noise(spec.noise, tau, spec.seed, i);
    out.push_back({temps[i], value, sigma > 0.0 ? sigma : 0.01 * tau});
  }
  return out;
}

std::vector<std::pair<double, double>> gen_power_series(const GeneratorSpec& spec) {
  spec.validate();
  const auto& t = truth_as<PowerTruth>(spec, Kind::power_series);
  const auto powers = spec.sampling.points();
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < powers.size(); ++i) {
    const double expected = t.prefactor * std::pow(powers[i], t.exponent);
    out.emplace_back(powers[i], apply_noise(spec.noise, expected, spec.seed, i));
  }
  return out;
}

std::vector<std::pair<double, double>> gen_polarization_series(const GeneratorSpec& spec) {
  spec.validate();
  const auto& t = truth_as<PolarizationTruth>(spec, Kind::polarization_series);
  const auto angles = spec.sampling.points();
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double c = std::cos((angles[i] - t.theta0_deg) * std::numbers::pi / 180.0);
    const double expected = t.offset + t.amplitude * c * c;
    out.emplace_back(angles[i], apply_noise(spec.noise, expected, spec.seed, i));
  }
  return out;
}

// ---------------------------------------------------------------------------

GeneratorSpec composite_spectrum(const CompositeParams& c, std::uint64_t seed, Noise noise) {
  if (!(c.dw_beta < c.dw_mean && c.dw_mean < c.dw_alpha && c.dw_beta > 0.0 && c.dw_alpha < 1.0)) {
    throw ValidationError("composite needs 0 < dw_beta < dw_mean < dw_alpha < 1");
  }
  if (!(c.alpha_total > 0.0)) throw ValidationError("composite alpha_total must be positive");
  const double alpha2_nm = energy_to_wavelength(
      {kHcEvNm / c.alpha3_nm - c.splitting_meV * 1e-3, EnergyUnit::eV});

  // Sideband shapes with unit I0; scaled so windowed areas hit the targets.
  spectrum::PsbModel a_psb{1.0, c.alpha_sigma_meV, c.alpha_delta0_meV, 10,
                           spectrum::Doublet{c.splitting_meV, c.doublet_ratio}, spectrum::Emitter::alpha};
  spectrum::PsbModel b_psb{1.0, c.beta_sigma_meV, c.beta_delta0_meV, 10, std::nullopt, spectrum::Emitter::beta};
  auto windowed_area = [](const spectrum::PsbModel& m, double lo, double hi) {
    double s = 0.0;
    const double h = 0.01;
    for (double d = -100.0; d <= 400.0; d += h) s += spectrum::psb_eval_windowed(m, d, lo, hi) * h;
    return s;
  };
  const double a_unit = windowed_area(a_psb, 0.0, 200.0);
  const double b_unit = windowed_area(b_psb, c.beta_min_phonon_meV, 200.0);

  // Beta emission total from the mean DW: dw_a·Ta + dw_b·Tb = dw_mean·(Ta + Tb).
  const double beta_total = c.alpha_total * (c.dw_alpha - c.dw_mean) / (c.dw_mean - c.dw_beta);
  a_psb.i0 = (1.0 - c.dw_alpha) * c.alpha_total / a_unit;
  b_psb.i0 = (1.0 - c.dw_beta) * beta_total / b_unit;
  const double alpha_zpl = c.dw_alpha * c.alpha_total;
  const double share3 = 1.0 / (1.0 + c.doublet_ratio);

  SpectrumTruth t;
  t.label = "reference composite";
  t.zpls = {{"alpha3", spectrum::Emitter::alpha, c.alpha3_nm, c.alpha_fwhm_nm, alpha_zpl * share3},
            {"alpha2", spectrum::Emitter::alpha, alpha2_nm, c.alpha_fwhm_nm, alpha_zpl * (1.0 - share3)},
            {"beta", spectrum::Emitter::beta, c.beta_nm, c.beta_fwhm_nm, c.dw_beta * beta_total}};
  t.sidebands = {{a_psb, c.alpha3_nm, 0.0, 200.0}, {b_psb, c.beta_nm, c.beta_min_phonon_meV, 200.0}};

  GeneratorSpec spec;
  spec.seed = seed;
  spec.kind = Kind::spectrum;
  spec.truth = t;
  spec.noise = noise;
  spec.sampling = c.sampling;
  return spec;
}

GeneratorSpec reference_composite(std::uint64_t seed, Noise noise) {
  return composite_spectrum(CompositeParams{}, seed, noise);
}

std::vector<Spectrum> gen_doublet_series(std::uint64_t seed, const DoubletSeriesTruth& truth,
                                         const std::vector<double>& temperatures_K, Noise noise) {
  const double alpha2_nm = energy_to_wavelength(
      {kHcEvNm / truth.alpha3_nm - truth.splitting_meV * 1e-3, EnergyUnit::eV});
  std::vector<Spectrum> out;
  std::uint64_t salt = 0;
  for (double T : temperatures_K) {
    const double r = 1.0 + (truth.r0 - 1.0) * std::exp(-T / truth.t0_K);
    const double a3 = truth.total_area * r / (1.0 + r);
    const double a2 = truth.total_area - a3;
    SpectrumTruth st;
    st.temperature_K = T;
    st.label = "doublet T=" + format_double(T) + " K";
    st.zpls = {{"alpha3", spectrum::Emitter::alpha, truth.alpha3_nm, truth.fwhm_nm, a3},
               {"alpha2", spectrum::Emitter::alpha, alpha2_nm, truth.fwhm_nm, a2}};
    GeneratorSpec spec;
    spec.seed = seed + 0x632BE59BD9B4E019ULL * ++salt;
    spec.kind = Kind::spectrum;
    spec.truth = st;
    spec.noise = noise;
    spec.sampling = {truth.alpha3_nm - 6.0, 0.1, 121, {}};
    Spectrum clean = gen_spectrum(spec);
    std::vector<double> wl(clean.wavelength_nm().begin(), clean.wavelength_nm().end());
    std::vector<double> in(clean.intensity().begin(), clean.intensity().end());
    for (std::size_t i = 0; i < in.size(); ++i) {
      in[i] += apply_noise(noise, truth.baseline, spec.seed ^ 0xA5A5A5A5ULL, i);
    }
    out.emplace_back(std::move(wl), std::move(in), T, 0.0, std::nullopt, st.label);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

Noise parse_noise(const json& j) {
  Noise n;
  if (j.is_null()) return n;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "none") return n;
    if (s == "poisson") { n.kind = NoiseKind::poisson; return n; }
    throw ValidationError("unknown noise '" + s + "'");
  }
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "none") return n;
  if (kind == "poisson") { n.kind = NoiseKind::poisson; return n; }
  if (kind == "gaussian") {
    n.kind = NoiseKind::gaussian;
    n.sigma = j.at("sigma").get<double>();
    n.relative = j.value("relative", false);
    return n;
  }
  throw ValidationError("unknown noise kind '" + kind + "'");
}

Grid parse_grid(const json& j) {
  Grid g;
  if (j.contains("values")) {
    g.values = j.at("values").get<std::vector<double>>();
    return g;
  }
  g.start = j.at("start").get<double>();
  g.step = j.at("step").get<double>();
  g.count = j.at("count").get<std::size_t>();
  return g;
}

spectrum::Emitter parse_emitter(const std::string& s) {
  if (s == "alpha") return spectrum::Emitter::alpha;
  if (s == "beta") return spectrum::Emitter::beta;
  throw ValidationError("unknown emitter '" + s + "'");
}

spectrum::PsbModel parse_psb(const json& j) {
  spectrum::PsbModel m;
  m.i0 = j.at("I0").get<double>();
  m.sigma_meV = j.at("sigma_meV").get<double>();
  m.delta0_meV = j.at("delta0_meV").get<double>();
  m.j_max = j.value("j_max", 10);
  m.emitter = parse_emitter(j.value("emitter", std::string("alpha")));
  if (j.contains("doublet")) {
    m.doublet = spectrum::Doublet{j["doublet"].at("splitting_meV").get<double>(),
                                  j["doublet"].at("ratio").get<double>()};
  }
  return m;
}

Truth parse_truth(Kind kind, const json& t) {
  switch (kind) {
    case Kind::decay: {
      DecayTruth d;
      d.background = t.value("background", 0.0);
      d.pulse_time_ns = t.at("pulse_time_ns").get<double>();
      d.temperature_K = t.value("temperature_K", 4.0);
      d.band_center_nm = t.value("band_center_nm", 0.0);
      d.band_width_nm = t.value("band_width_nm", 0.0);
      for (const auto& c : t.at("components")) {
        d.components.push_back({c.at("A").get<double>(), c.at("tau_ns").get<double>(), 0.0, 0.0});
      }
      return d;
    }
    case Kind::spectrum: {
      SpectrumTruth s;
      s.temperature_K = t.value("temperature_K", 4.0);
      s.power_mW = t.value("power_mW", 0.0);
      s.label = t.value("label", std::string("synthetic"));
      for (const auto& z : t.value("zpls", json::array())) {
        s.zpls.push_back({z.at("label").get<std::string>(),
                          parse_emitter(z.value("emitter", std::string("alpha"))),
                          z.at("center_nm").get<double>(), z.at("fwhm_nm").get<double>(),
                          z.at("area").get<double>()});
      }
      for (const auto& p : t.value("sidebands", json::array())) {
        s.sidebands.push_back({parse_psb(p), p.at("reference_nm").get<double>(),
                               p.value("min_phonon_meV", 0.0), p.value("max_phonon_meV", 200.0)});
      }
      for (const auto& h : t.value("huang_rhys", json::array())) {
        HrTruth hr;
        hr.model.zpl_energy_eV = h.at("zpl_energy_eV").get<double>();
        for (const auto& m : h.at("modes")) {
          hr.model.modes.push_back({m.at("S").get<double>(), m.at("energy_meV").get<double>()});
        }
        hr.emitter = parse_emitter(h.value("emitter", std::string("alpha")));
        hr.area = h.at("area").get<double>();
        hr.broadening_meV = h.value("broadening_meV", 1.0);
        s.hr.push_back(std::move(hr));
      }
      return s;
    }
    case Kind::thermal_series:
      return ThermalTruth{t.at("tau_ns").get<double>(), t.at("tau_p_ns").get<double>(),
                          t.at("E_p_meV").get<double>()};
    case Kind::power_series:
      return PowerTruth{t.at("prefactor").get<double>(), t.at("exponent").get<double>()};
    case Kind::polarization_series:
      return PolarizationTruth{t.at("a").get<double>(), t.at("b").get<double>(),
                               t.value("theta0_deg", 0.0)};
  }
  throw ValidationError("unknown generator kind");
}

Kind parse_kind(const std::string& s) {
  for (Kind k : {Kind::decay, Kind::spectrum, Kind::thermal_series, Kind::power_series,
                 Kind::polarization_series}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown generator kind '" + s + "'");
}

}  // namespace

GeneratorSpec parse_generator_spec(const std::string& json_text) {
  try {
    const json j = json::parse(json_text);
    GeneratorSpec spec;
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.kind = parse_kind(j.at("kind").get<std::string>());
    if (j.contains("preset")) {
      const auto preset = j["preset"].get<std::string>();
      if (preset != "reference_composite") throw ValidationError("unknown preset '" + preset + "'");
      return reference_composite(spec.seed, parse_noise(j.value("noise", json())));
    }
    spec.truth = parse_truth(spec.kind, j.at("truth"));
    spec.noise = parse_noise(j.value("noise", json()));
    spec.sampling = parse_grid(j.at("sampling"));
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("generator spec: ") + e.what());
  }
}

GeneratorSpec load_generator_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_generator_spec(ss.str());
}

}  // namespace ccphot::synth
