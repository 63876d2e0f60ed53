#include "ccphot/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ccphot/errors.hpp"
#include "ccphot/models.hpp"
#include "ccphot/nls.hpp"

namespace ccphot::spectrum {

namespace {

constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 √(2 ln 2)

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

// Robust per-sample noise from the median absolute first difference.
double difference_noise(std::span<const double> y) {
  if (y.size() < 3) return 0.0;
  std::vector<double> d;
  for (std::size_t i = 1; i < y.size(); ++i) d.push_back(y[i] - y[i - 1]);
  const double md = median(d);
  for (auto& v : d) v = std::abs(v - md);
  return 1.4826 * median(d) / std::numbers::sqrt2;
}

bool in_ranges(double x, const std::vector<std::pair<double, double>>& ranges) {
  for (const auto& [lo, hi] : ranges) {
    if (x >= lo && x <= hi) return true;
  }
  return false;
}

}  // namespace

const std::vector<std::string>& zpl_labels() {
  static const std::vector<std::string> labels = {"alpha2", "alpha3", "beta", "alphaP"};
  return labels;
}

double ZplLine::profile(double wavelength_nm) const {
  const double s = fwhm_nm / kFwhmPerSigma;
  const double u = (wavelength_nm - center_nm) / s;
  return amplitude * std::exp(-0.5 * u * u);
}

const ZplLine* ZplSet::find(const std::string& label) const {
  for (const auto& l : lines) {
    if (l.label == label) return &l;
  }
  return nullptr;
}

double ZplSet::area_of(std::initializer_list<const char*> labels) const {
  double a = 0.0;
  for (const char* l : labels) {
    if (const auto* line = find(l)) a += line->area;
  }
  return a;
}

void update_doublet(ZplSet& set) {
  set.doublet_splitting_meV.reset();
  set.splitting_consistent = false;
  const auto* a3 = set.find("alpha3");
  const auto* a2 = set.find("alpha2");
  if (!a3 || !a2) return;
  const double splitting =
      1e3 * (wavelength_to_energy(a3->center_nm).eV() - wavelength_to_energy(a2->center_nm).eV());
  if (!(splitting > 0.0)) {
    throw ValidationError("alpha2 must lie at lower energy than alpha3 (splitting " +
                          format_double(splitting) + " meV)");
  }
  set.doublet_splitting_meV = splitting;
  set.splitting_consistent =
      std::abs(splitting - kNominalDoubletSplittingMeV) <= kDoubletSplittingToleranceMeV;
  if (!set.splitting_consistent) {
    set.warnings.push_back("doublet splitting " + format_double(splitting) +
                           " meV differs from 1.47 meV by more than 0.3 meV");
  }
}

ZplSet find_zpls(const Spectrum& spectrum, std::span<const ExpectedLine> expected,
                 double resolution_nm) {
  const auto wl = spectrum.wavelength_nm();
  const auto y = spectrum.intensity();
  const auto& labels = zpl_labels();
  const double noise = difference_noise(y);
  ZplSet set;
  for (const auto& e : expected) {
    if (std::find(labels.begin(), labels.end(), e.label) == labels.end()) {
      throw ValidationError("unknown ZPL label '" + e.label + "'");
    }
    if (set.find(e.label)) throw ValidationError("duplicate ZPL label '" + e.label + "'");
    const double lo = e.center_nm - e.half_window_nm;
    const double hi = e.center_nm + e.half_window_nm;
    if (lo < wl.front() || hi > wl.back()) {
      throw PreconditionError("spectrum does not cover the window of line " + e.label);
    }
    const auto first = static_cast<std::size_t>(std::lower_bound(wl.begin(), wl.end(), lo) - wl.begin());
    const auto last = static_cast<std::size_t>(std::upper_bound(wl.begin(), wl.end(), hi) - wl.begin());
    if (last - first < 5) throw LineNotFoundError("line " + e.label + ": window holds fewer than 5 samples");

    const auto wy = y.subspan(first, last - first);
    const auto wx = wl.subspan(first, last - first);
    const auto imax = static_cast<std::size_t>(std::max_element(wy.begin(), wy.end()) - wy.begin());
    const double base = *std::min_element(wy.begin(), wy.end());
    const double prominence = wy[imax] - std::max(wy.front(), wy.back());
    if (imax == 0 || imax + 1 == wy.size() || !(wy[imax] > wy[imax - 1]) || !(prominence > 0.0) ||
        prominence <= 5.0 * noise) {
      throw LineNotFoundError("line " + e.label + ": no local maximum in " + format_double(lo) +
                              "-" + format_double(hi) + " nm");
    }

    const double pitch = (wx.back() - wx.front()) / static_cast<double>(wx.size() - 1);
    std::size_t above = 0;
    for (double v : wy) {
      if (v - base >= 0.5 * (wy[imax] - base)) ++above;
    }
    const double s0 = std::clamp(static_cast<double>(above) * pitch / kFwhmPerSigma, pitch / 2.0,
                                 e.half_window_nm / 2.0);
    const double c_ref = wx[imax];

    nls::FitProblem problem;
    problem.names = {"amplitude", "center", "width", "baseline", "slope"};
    problem.model = models::gaussian_line;
    problem.gradient = models::gaussian_line_gradient;
    problem.x.assign(wx.begin(), wx.end());
    problem.y.assign(wy.begin(), wy.end());
    problem.weight = nls::poisson_weights(wy);
    problem.initial = {wy[imax] - base, c_ref, s0, base, 0.0};
    problem.bounds = {{0.0, std::numeric_limits<double>::infinity()},
                      {lo, hi},
                      {pitch / 10.0, e.half_window_nm},
                      {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()},
                      {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()}};
    nls::FitResult fit;
    try {
      fit = nls::minimize(problem);
    } catch (const DegenerateFitError&) {
      // Narrow windows cannot always separate a slope from the line wings.
      problem.fixed = {false, false, false, false, true};
      fit = nls::minimize(problem);
      set.warnings.push_back("line " + e.label + ": baseline slope unidentifiable, fitted flat");
    }

    ZplLine line;
    line.label = e.label;
    line.amplitude = fit.parameters[0];
    line.center_nm = fit.parameters[1];
    line.center_sigma3 = fit.sigma3[1];
    const double s = fit.parameters[2];
    line.fwhm_nm = kFwhmPerSigma * s;
    const double resolution = resolution_nm > 0.0 ? resolution_nm : 2.0 * pitch;
    line.fwhm_upper_bound = line.fwhm_nm < resolution;
    // Area on the spectrum's own grid keeps subtraction and integration consistent.
    std::vector<double> g(wl.size());
    for (std::size_t i = 0; i < wl.size(); ++i) {
      const double u = (wl[i] - line.center_nm) / s;
      g[i] = line.amplitude * std::exp(-0.5 * u * u);
    }
    line.area = trapezoid(wl, g);
    const auto& c = fit.covariance;
    const double a = fit.parameters[0];
    double rel_var = 0.0;
    if (a > 0.0) {
      rel_var = c(0, 0) / (a * a) + c(2, 2) / (s * s) + 2.0 * c(0, 2) / (a * s);
    }
    line.area_sigma = line.area * std::sqrt(std::max(rel_var, 0.0));
    set.lines.push_back(line);
  }
  update_doublet(set);
  return set;
}

// ---------------------------------------------------------------------------

double DoubletRatioModel::ratio(double temperature_K) const {
  return 1.0 + (r0 - 1.0) * std::exp(-temperature_K / t0_K);
}

double DoubletRatioModel::dominant_share(double temperature_K) const {
  const double r = ratio(temperature_K);
  return r / (1.0 + r);
}

bool DoubletRatioModel::share_consistent() const {
  return std::abs(dominant_share(4.0) - 0.70) <= 0.05;
}

DoubletRatioModel fit_doublet_ratio(std::span<const RatioPoint> points) {
  std::size_t cold = 0;
  for (const auto& p : points) {
    if (p.temperature_K < 100.0) ++cold;
  }
  if (cold < 3) {
    throw InsufficientDataError("doublet ratio needs at least 3 resolved temperatures below 100 K");
  }
  std::vector<RatioPoint> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(),
            [](const auto& a, const auto& b) { return a.temperature_K < b.temperature_K; });

  const bool weighted = std::all_of(pts.begin(), pts.end(), [](const auto& p) { return p.sigma > 0.0; });
  nls::FitProblem problem;
  problem.names = {"r0", "T0"};
  problem.model = models::doublet_ratio;
  problem.gradient = models::doublet_ratio_gradient;
  for (const auto& p : pts) {
    problem.x.push_back(p.temperature_K);
    problem.y.push_back(p.ratio);
    if (weighted) problem.weight.push_back(1.0 / (p.sigma * p.sigma));
  }
  problem.bounds = {{1e-6, 1e3}, {0.1, 1e4}};

  std::optional<nls::FitResult> best;
  std::optional<DegenerateFitError> degenerate;
  for (double t0 : {5.0, 20.0, 60.0}) {
    const double r0 = 1.0 + (pts.front().ratio - 1.0) * std::exp(pts.front().temperature_K / t0);
    problem.initial = {std::clamp(r0, 1e-6, 1e3), t0};
    try {
      auto fit = nls::minimize(problem);
      if (!best || fit.chi2 < best->chi2) best = std::move(fit);
    } catch (const DegenerateFitError& e) {
      degenerate = e;
    }
  }
  if (!best) throw *degenerate;

  DoubletRatioModel m;
  m.r0 = best->parameters[0];
  m.t0_K = best->parameters[1];
  m.r0_sigma3 = best->sigma3[0];
  m.t0_sigma3 = best->sigma3[1];
  m.reduced_chi2 = best->reduced_chi2;
  m.points = pts;
  return m;
}

DoubletRatioModel doublet_ratio_vs_T(std::span<const Spectrum> spectra,
                                     std::span<const ExpectedLine> doublet_lines) {
  std::vector<RatioPoint> points;
  for (const auto& s : spectra) {
    try {
      const auto set = find_zpls(s, doublet_lines);
      const auto* a3 = set.find("alpha3");
      const auto* a2 = set.find("alpha2");
      if (!a3 || !a2 || !(a2->area > 0.0)) continue;
      const double r = a3->area / a2->area;
      const double rel = std::hypot(a3->area_sigma / a3->area, a2->area_sigma / a2->area);
      points.push_back({s.temperature_K(), r, r * rel});
    } catch (const LineNotFoundError&) {
      // Unresolved at this temperature.
    } catch (const DegenerateFitError&) {
    }
  }
  if (points.empty()) throw InsufficientDataError("doublet unresolvable in every spectrum");
  return fit_doublet_ratio(points);
}

// ---------------------------------------------------------------------------

PowerLawResult power_law_check(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw InsufficientDataError("power-law check needs at least 3 powers");
  nls::FitProblem problem;
  problem.names = {"log_c", "k"};
  problem.model = models::line;
  problem.gradient = models::line_gradient;
  for (const auto& [power, intensity] : points) {
    if (!(power > 0.0)) throw DomainError("excitation power must be > 0");
    if (!(intensity > 0.0)) throw DomainError("intensity must be > 0 for a log-log fit");
    problem.x.push_back(std::log(power));
    problem.y.push_back(std::log(intensity));
  }
  problem.initial = {0.0, 1.0};
  const auto fit = nls::minimize(problem);
  PowerLawResult r;
  r.exponent = fit.parameters[1];
  r.exponent_sigma3 = fit.sigma3[1];
  r.prefactor = std::exp(fit.parameters[0]);
  r.consistent_with_linear = std::abs(r.exponent - 1.0) <= std::max(r.exponent_sigma3, 1e-9);
  return r;
}

PolarizationResult polarization_fit(std::span<const std::pair<double, double>> points) {
  if (points.size() < 4) throw InsufficientDataError("polarization fit needs at least 4 angles");
  double amin = points.front().first, amax = points.front().first;
  for (const auto& [a, v] : points) {
    amin = std::min(amin, a);
    amax = std::max(amax, a);
    if (!std::isfinite(v)) throw ValidationError("non-finite intensity");
  }
  if (amax - amin < 90.0) throw PreconditionError("polarization angles must span at least 90 degrees");

  constexpr double rad = std::numbers::pi / 180.0;
  // Linear form c0 + c1 cos 2θ + c2 sin 2θ.
  Eigen::MatrixXd a(static_cast<Eigen::Index>(points.size()), 3);
  Eigen::VectorXd b(static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double t = 2.0 * points[i].first * rad;
    a.row(static_cast<Eigen::Index>(i)) << 1.0, std::cos(t), std::sin(t);
    b[static_cast<Eigen::Index>(i)] = points[i].second;
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
  const double half = std::hypot(c[1], c[2]);

  PolarizationResult r;
  const double scale = std::max(std::abs(c[0]), b.cwiseAbs().maxCoeff());
  if (!(half > 1e-12 * scale)) {
    r.i_min = r.i_max = c[0];
    r.theta_defined = false;
    r.visibility = 0.0;
    return r;
  }
  const double amp0 = 2.0 * half;
  const double off0 = c[0] - half;
  double theta0 = 0.5 * std::atan2(c[2], c[1]) / rad;

  nls::FitProblem problem;
  problem.names = {"a", "b", "theta0"};
  problem.model = models::malus;
  problem.gradient = models::malus_gradient;
  for (const auto& [angle, value] : points) {
    problem.x.push_back(angle);
    problem.y.push_back(value);
  }
  problem.initial = {off0, amp0, theta0};
  const auto fit = nls::minimize(problem);
  double off = fit.parameters[0];
  double amp = fit.parameters[1];
  theta0 = fit.parameters[2];
  if (amp < 0.0) {
    off += amp;
    amp = -amp;
    theta0 += 90.0;
  }
  theta0 = std::fmod(theta0 + 90.0, 180.0);
  if (theta0 < 0.0) theta0 += 180.0;
  theta0 -= 90.0;

  r.i_min = off;
  r.i_max = off + amp;
  r.theta0_deg = theta0;
  r.theta_defined = true;
  const double denom = 2.0 * off + amp;
  r.visibility = amp / denom;
  const double dv_da = -2.0 * amp / (denom * denom);
  const double dv_db = 2.0 * off / (denom * denom);
  const auto& cov = fit.covariance;
  const double var = dv_da * dv_da * cov(0, 0) + dv_db * dv_db * cov(1, 1) + 2.0 * dv_da * dv_db * cov(0, 1);
  r.visibility_sigma3 = 3.0 * std::sqrt(std::max(var, 0.0));
  return r;
}

// ---------------------------------------------------------------------------

std::string to_string(Emitter e) { return e == Emitter::alpha ? "alpha" : "beta"; }

void PsbModel::validate() const {
  if (!(i0 >= 0.0) || !std::isfinite(i0)) throw ValidationError("PSB I0 must be >= 0");
  if (!(sigma_meV > 0.0)) throw ValidationError("PSB sigma must be > 0");
  if (j_max < 1) throw ValidationError("PSB j_max must be >= 1");
  if (doublet && !(doublet->ratio > 0.0 && doublet->ratio <= 1.0)) {
    throw ValidationError("doublet ratio must lie in (0, 1]");
  }
}

namespace {

double series(const PsbModel& m, double delta) {
  double s = 0.0;
  for (int j = 1; j <= m.j_max; ++j) {
    const double width = std::sqrt(static_cast<double>(j)) * m.sigma_meV;
    const double u = (delta - m.delta0_meV) / width;
    s += std::exp(-u * u) / (std::sqrt(std::numbers::pi) * width);
  }
  return s;
}

// Series value with its derivatives in σ and Δ0.
double series_gradient(const PsbModel& m, double delta, double& d_sigma, double& d_delta0) {
  double s = 0.0;
  d_sigma = 0.0;
  d_delta0 = 0.0;
  for (int j = 1; j <= m.j_max; ++j) {
    const double width = std::sqrt(static_cast<double>(j)) * m.sigma_meV;
    const double u = (delta - m.delta0_meV) / width;
    const double g = std::exp(-u * u) / (std::sqrt(std::numbers::pi) * width);
    s += g;
    d_delta0 += g * 2.0 * u / width;
    d_sigma += g * (2.0 * u * u - 1.0) / m.sigma_meV;
  }
  return s;
}

}  // namespace

double psb_eval(const PsbModel& model, double delta_meV) {
  if (!model.doublet) return model.i0 * series(model, delta_meV);
  const double r = model.doublet->ratio;
  return model.i0 * (series(model, delta_meV) + r * series(model, delta_meV - model.doublet->splitting_meV)) /
         (1.0 + r);
}

std::vector<double> psb_eval(const PsbModel& model, std::span<const double> delta_meV) {
  std::vector<double> out(delta_meV.size());
  for (std::size_t i = 0; i < delta_meV.size(); ++i) out[i] = psb_eval(model, delta_meV[i]);
  return out;
}

double psb_eval_windowed(const PsbModel& model, double delta, double lo, double hi) {
  auto inside = [lo, hi](double d) { return d >= lo && d <= hi; };
  if (!model.doublet) return inside(delta) ? model.i0 * series(model, delta) : 0.0;
  const double r = model.doublet->ratio;
  const double shifted = delta - model.doublet->splitting_meV;
  double v = 0.0;
  if (inside(delta)) v += series(model, delta);
  if (inside(shifted)) v += r * series(model, shifted);
  return model.i0 * v / (1.0 + r);
}

double phonon_energy_meV(double reference_eV, double wavelength_nm) {
  return 1e3 * (reference_eV - kHcEvNm / wavelength_nm);
}

double sideband_density_nm(const PsbModel& model, double reference_eV, double wavelength_nm,
                           double lo_meV, double hi_meV) {
  const double delta = phonon_energy_meV(reference_eV, wavelength_nm);
  const double jacobian = 1e3 * kHcEvNm / (wavelength_nm * wavelength_nm);
  return psb_eval_windowed(model, delta, lo_meV, hi_meV) * jacobian;
}

// ---------------------------------------------------------------------------

namespace {

const ZplLine& require_line(const ZplSet& zpls, const char* label) {
  const auto* l = zpls.find(label);
  if (!l) throw PreconditionError(std::string("ZPL set lacks line ") + label);
  return *l;
}

const ZplLine& alpha_reference(const ZplSet& zpls) {
  if (const auto* a3 = zpls.find("alpha3")) return *a3;
  if (const auto* a2 = zpls.find("alpha2")) return *a2;
  throw PreconditionError("ZPL set lacks an alpha line");
}

std::vector<double> zpl_profile(const Spectrum& s, const ZplSet& zpls) {
  const auto wl = s.wavelength_nm();
  std::vector<double> out(wl.size(), 0.0);
  for (const auto& line : zpls.lines) {
    for (std::size_t i = 0; i < wl.size(); ++i) out[i] += line.profile(wl[i]);
  }
  return out;
}

bool in_zpl_core(const ZplSet& zpls, double wl, double n_fwhm) {
  for (const auto& line : zpls.lines) {
    if (std::abs(wl - line.center_nm) < n_fwhm * line.fwhm_nm) return true;
  }
  return false;
}

}  // namespace

PsbFit fit_psb(const Spectrum& spectrum, const ZplSet& zpls, const PsbConstraints& constraints) {
  const ZplLine& ref_line = alpha_reference(zpls);
  const ZplLine& beta = require_line(zpls, "beta");
  const double e_ref = wavelength_to_energy(ref_line.center_nm).eV();
  const double e_beta = wavelength_to_energy(beta.center_nm).eV();

  const auto wl = spectrum.wavelength_nm();
  const auto y = spectrum.intensity();
  const double reach = energy_to_wavelength({e_ref - 1e-3 * constraints.max_phonon_meV, EnergyUnit::eV});
  if (wl.back() < reach || wl.front() > ref_line.center_nm) {
    throw PreconditionError("spectrum must cover the alpha ZPL through " +
                            format_double(constraints.max_phonon_meV) + " meV of phonon energy");
  }

  PsbFit out;
  out.reference_eV = e_ref;
  out.alpha.j_max = 10;
  out.alpha.emitter = Emitter::alpha;
  const auto* a3 = zpls.find("alpha3");
  const auto* a2 = zpls.find("alpha2");
  if (a3 && a2 && a3->area > 0.0 && a2->area > 0.0) {
    double ratio = a2->area / a3->area;
    if (ratio > 1.0) {
      out.warnings.push_back("alpha2 stronger than alpha3; doublet ratio clamped to 1");
      ratio = 1.0;
    }
    out.alpha.doublet = Doublet{1e3 * (e_ref - wavelength_to_energy(a2->center_nm).eV()), ratio};
  }

  out.wavelength_nm.assign(wl.begin(), wl.end());
  out.zpl_model = zpl_profile(spectrum, zpls);
  std::vector<double> cont(wl.size());
  for (std::size_t i = 0; i < wl.size(); ++i) cont[i] = y[i] - out.zpl_model[i];

  // Alpha-only region: above the alpha ZPL in phonon energy, below the onset
  // of beta sideband emission.
  nls::FitProblem problem;
  problem.names = {"I0", "sigma", "delta0"};
  double fit_max_delta = 0.0;
  for (std::size_t i = 0; i < wl.size(); ++i) {
    const double da = phonon_energy_meV(e_ref, wl[i]);
    const double db = phonon_energy_meV(e_beta, wl[i]);
    if (da < 0.0 || da > constraints.max_phonon_meV || db >= constraints.beta_min_phonon_meV) continue;
    if (in_zpl_core(zpls, wl[i], constraints.zpl_core_fwhm)) continue;
    if (in_ranges(wl[i], constraints.exclude_nm)) continue;
    problem.x.push_back(wl[i]);
    problem.y.push_back(cont[i]);
    problem.weight.push_back(1.0 / std::max(y[i], 1.0));
    fit_max_delta = std::max(fit_max_delta, da);
  }
  if (problem.x.size() < 6) throw InsufficientDataError("too few alpha-only sideband samples to fit");

  const PsbModel shape = out.alpha;
  const double max_phonon = constraints.max_phonon_meV;
  problem.model = [shape, e_ref, max_phonon](std::span<const double> p, double x) {
    PsbModel m = shape;
    m.i0 = p[0];
    m.sigma_meV = p[1];
    m.delta0_meV = p[2];
    return sideband_density_nm(m, e_ref, x, 0.0, max_phonon);
  };
  problem.gradient = [shape, e_ref, max_phonon](std::span<const double> p, double x, std::span<double> g) {
    PsbModel m = shape;
    m.i0 = p[0];
    m.sigma_meV = p[1];
    m.delta0_meV = p[2];
    const double delta = phonon_energy_meV(e_ref, x);
    const double jac = 1e3 * kHcEvNm / (x * x);
    auto inside = [max_phonon](double d) { return d >= 0.0 && d <= max_phonon; };
    double v = 0.0, ds = 0.0, dd = 0.0, a = 0.0, b = 0.0;
    const double r = m.doublet ? m.doublet->ratio : 0.0;
    if (inside(delta)) {
      v += series_gradient(m, delta, a, b);
      ds += a;
      dd += b;
    }
    if (m.doublet && inside(delta - m.doublet->splitting_meV)) {
      v += r * series_gradient(m, delta - m.doublet->splitting_meV, a, b);
      ds += r * a;
      dd += r * b;
    }
    const double scale = jac / (1.0 + r);
    g[0] = v * scale;
    g[1] = m.i0 * ds * scale;
    g[2] = m.i0 * dd * scale;
  };
  problem.bounds = {{0.0, std::numeric_limits<double>::infinity()}, {0.1, max_phonon}, {0.0, max_phonon}};

  // Multi-start over shape; I0 seeded by the linear optimum for each shape.
  // Starts are ranked by that linear chi2 and only the best few are refined.
  struct Start {
    std::vector<double> p;
    double chi2;
  };
  std::vector<Start> starts;
  double wyy = 0.0;
  for (std::size_t i = 0; i < problem.x.size(); ++i) wyy += problem.weight[i] * problem.y[i] * problem.y[i];
  for (double frac : {0.25, 0.5, 0.75, 1.0, 1.25}) {
    for (double sfrac : {0.125, 0.25}) {
      const double d0 = frac * fit_max_delta;
      const double s0 = std::max(sfrac * fit_max_delta, 0.5);
      double num = 0.0, den = 0.0;
      const std::vector<double> unit = {1.0, s0, d0};
      for (std::size_t i = 0; i < problem.x.size(); ++i) {
        const double f = problem.model(unit, problem.x[i]);
        num += problem.weight[i] * f * problem.y[i];
        den += problem.weight[i] * f * f;
      }
      const double i0 = den > 0.0 ? std::max(num / den, 0.0) : 0.0;
      starts.push_back({{i0, s0, d0}, wyy - 2.0 * i0 * num + i0 * i0 * den});
    }
  }
  const std::vector<double> fallback_start = starts.front().p;
  std::stable_sort(starts.begin(), starts.end(), [](const Start& a, const Start& b) { return a.chi2 < b.chi2; });
  constexpr std::size_t kRefined = 3;
  std::optional<nls::FitResult> best;
  for (std::size_t k = 0; k < std::min(kRefined, starts.size()); ++k) {
    problem.initial = starts[k].p;
    try {
      auto fit = nls::minimize(problem);
      if (!best || fit.chi2 < best->chi2) best = std::move(fit);
    } catch (const DegenerateFitError&) {
    }
  }
  if (!best) {
    // No measurable sideband: shape is unidentifiable, fit the scale alone.
    problem.initial = fallback_start;
    problem.fixed = {false, true, true};
    best = nls::minimize(problem);
    out.warnings.push_back("alpha sideband shape unidentifiable; only I0 fitted");
  }

  out.alpha.i0 = best->parameters[0];
  out.alpha.sigma_meV = best->parameters[1];
  out.alpha.delta0_meV = best->parameters[2];
  out.i0_sigma3 = best->sigma3[0];
  out.sigma_sigma3 = best->sigma3[1];
  out.delta0_sigma3 = best->sigma3[2];
  out.reduced_chi2 = best->reduced_chi2;

  out.alpha_model.resize(wl.size());
  out.residual.resize(wl.size());
  std::size_t psb_bins = 0, negative = 0;
  for (std::size_t i = 0; i < wl.size(); ++i) {
    out.alpha_model[i] = sideband_density_nm(out.alpha, e_ref, wl[i], 0.0, max_phonon);
    out.residual[i] = cont[i] - out.alpha_model[i];
    const double da = phonon_energy_meV(e_ref, wl[i]);
    if (da >= 0.0 && da <= max_phonon && !in_zpl_core(zpls, wl[i], constraints.zpl_core_fwhm)) {
      ++psb_bins;
      if (out.residual[i] < -3.0 * std::sqrt(std::max(y[i], 1.0))) ++negative;
    }
  }
  if (psb_bins > 0 && static_cast<double>(negative) > 0.05 * static_cast<double>(psb_bins)) {
    throw ModelInconsistencyError("alpha sideband model exceeds the data by more than 3 sigma in " +
                                  std::to_string(negative) + " of " + std::to_string(psb_bins) +
                                  " bins");
  }

  const auto w = trapezoid_weights(wl);
  out.alpha_zpl_area = zpls.area_of({"alpha2", "alpha3"});
  out.beta_zpl_area = beta.area;
  double alpha_psb = 0.0, beta_psb = 0.0;
  for (std::size_t i = 0; i < wl.size(); ++i) {
    alpha_psb += w[i] * out.alpha_model[i];
    if (in_ranges(wl[i], constraints.alpha_assigned_nm)) {
      alpha_psb += w[i] * out.residual[i];
      out.residual[i] = 0.0;
      continue;
    }
    const double db = phonon_energy_meV(e_beta, wl[i]);
    if (db < constraints.beta_min_phonon_meV || db > max_phonon) {
      out.residual[i] = 0.0;
      continue;
    }
    beta_psb += w[i] * out.residual[i];
  }
  out.alpha_psb_area = std::max(alpha_psb, 0.0);
  out.beta_psb_area = std::max(beta_psb, 0.0);
  auto frac = [](double z, double rest) { return z > 0.0 ? z / (z + rest) : 0.0; };
  out.dw_alpha = frac(out.alpha_zpl_area, out.alpha_psb_area);
  out.dw_beta = frac(out.beta_zpl_area, out.beta_psb_area);
  return out;
}

// ---------------------------------------------------------------------------

bool DwPartition::ordered() const {
  constexpr double eps = 1e-12;
  auto unit = [](double v) { return v >= -eps && v <= 1.0 + eps; };
  if (!unit(dw_alpha_low) || !unit(dw_alpha_high) || !unit(dw_beta_low) || !unit(dw_mean)) return false;
  if (dw_alpha_low > dw_alpha_high + eps) return false;
  if (dw_alpha_refined) {
    if (*dw_alpha_refined < dw_alpha_low - eps || *dw_alpha_refined > dw_alpha_high + eps) return false;
  }
  if (dw_beta_refined) {
    if (*dw_beta_refined < dw_beta_low - eps || !unit(*dw_beta_refined)) return false;
  }
  return true;
}

DwPartition partition_dw(const Spectrum& spectrum, const ZplSet& zpls, double partition_energy_meV,
                         const PsbFit* psb_fit, const PartitionOptions& options) {
  const ZplLine& ref_line = alpha_reference(zpls);
  const double e_ref = wavelength_to_energy(ref_line.center_nm).eV();
  const auto wl = spectrum.wavelength_nm();
  const auto y = spectrum.intensity();
  if (psb_fit && psb_fit->alpha_model.size() != wl.size()) {
    throw ValidationError("sideband fit was computed on a different wavelength grid");
  }

  const auto zpl = zpl_profile(spectrum, zpls);
  const auto w = trapezoid_weights(wl);
  double alpha_only = 0.0, ambiguous = 0.0, alpha_model_amb = 0.0;
  for (std::size_t i = 0; i < wl.size(); ++i) {
    const double c = w[i] * (y[i] - zpl[i]);
    if (phonon_energy_meV(e_ref, wl[i]) < partition_energy_meV) {
      alpha_only += c;
    } else {
      ambiguous += c;
      if (psb_fit) alpha_model_amb += w[i] * psb_fit->alpha_model[i];
    }
  }
  DwPartition p;
  p.alpha_zpl_area = std::max(zpls.area_of({"alpha2", "alpha3"}), 0.0);
  p.beta_zpl_area = std::max(zpls.area_of({"beta"}), 0.0);
  p.alpha_only_psb_area = std::max(alpha_only, 0.0);
  p.ambiguous_psb_area = std::max(ambiguous, 0.0);

  const double zpl_total = p.alpha_zpl_area + p.beta_zpl_area;
  const double total = zpl_total + p.alpha_only_psb_area + p.ambiguous_psb_area;
  if (!(total > 0.0)) throw DomainError("spectrum has zero total emission area");

  auto frac = [](double z, double rest) { return z > 0.0 ? z / (z + rest) : 0.0; };
  p.dw_mean = zpl_total / total;
  p.dw_alpha_high = frac(p.alpha_zpl_area, p.alpha_only_psb_area);
  p.dw_alpha_low = frac(p.alpha_zpl_area, p.alpha_only_psb_area + p.ambiguous_psb_area);
  p.dw_beta_low = frac(p.beta_zpl_area, p.ambiguous_psb_area);
  if (psb_fit) {
    const double a_amb = std::clamp(alpha_model_amb, 0.0, p.ambiguous_psb_area);
    p.dw_alpha_refined = frac(p.alpha_zpl_area, p.alpha_only_psb_area + a_amb);
    p.dw_beta_refined = frac(p.beta_zpl_area, p.ambiguous_psb_area - a_amb);
  }

  const double reach = energy_to_wavelength({e_ref - 1e-3 * options.max_phonon_meV, EnergyUnit::eV});
  if (wl.back() < reach) {
    p.truncation_corrected = true;
    p.truncation_factor = options.truncation_correction;
    for (double* v : {&p.dw_mean, &p.dw_alpha_low, &p.dw_alpha_high, &p.dw_beta_low}) *v *= p.truncation_factor;
    if (p.dw_alpha_refined) *p.dw_alpha_refined *= p.truncation_factor;
    if (p.dw_beta_refined) *p.dw_beta_refined *= p.truncation_factor;
  }
  return p;
}

}  // namespace ccphot::spectrum
