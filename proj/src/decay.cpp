#include "ccphot/decay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccphot/errors.hpp"
#include "ccphot/models.hpp"

namespace ccphot::decay {

namespace {

constexpr std::size_t kMinBaselineBins = 10;
constexpr int kReweightPasses = 5;

struct Data {
  std::vector<double> t;  // since pulse
  std::vector<double> y;  // background subtracted
  std::vector<double> w;
  double background = 0.0;
};

Data window_data(const DecayTrace& trace, const Background& bg, const FitWindow& window) {
  Data d;
  d.background = bg.mean;
  const auto times = trace.time_ns();
  const auto counts = trace.counts();
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (times[i] < window.t_start_ns || times[i] > window.t_end_ns) continue;
    d.t.push_back(times[i] - trace.pulse_time_ns());
    d.y.push_back(counts[i] - bg.mean);
    d.w.push_back(1.0 / std::max(counts[i], 1.0));
  }
  return d;
}

struct RawFit {
  std::vector<Component> components;
  nls::FitResult fit;
};

RawFit run_fit(const Data& d, const std::vector<Component>& initial, std::vector<bool> pinned,
               double span_ns, double bin_ns) {
  nls::FitProblem problem;
  problem.model = models::exponential;
  problem.gradient = models::exponential_gradient;
  problem.x = d.t;
  problem.y = d.y;
  problem.weight = d.w;
  const double tau_lo = 0.1 * bin_ns;
  const double tau_hi = 100.0 * span_ns;
  for (std::size_t k = 0; k < initial.size(); ++k) {
    problem.initial.push_back(std::max(initial[k].amplitude, 0.0));
    problem.initial.push_back(std::clamp(initial[k].tau_ns, tau_lo, tau_hi));
    problem.bounds.push_back({0.0, std::numeric_limits<double>::infinity()});
    problem.bounds.push_back({tau_lo, tau_hi});
    problem.names.push_back("A" + std::to_string(k + 1));
    problem.names.push_back("tau" + std::to_string(k + 1));
  }
  problem.fixed = std::move(pinned);
  RawFit out;
  out.fit = nls::minimize(problem);
  // Weights from observed counts bias lifetimes low; refit with weights from
  // the expected counts of the previous pass until the parameters settle.
  for (int pass = 0; pass < kReweightPasses; ++pass) {
    for (std::size_t i = 0; i < d.t.size(); ++i) {
      const double expected = d.background + models::exponential(out.fit.parameters, d.t[i]);
      problem.weight[i] = 1.0 / std::max(expected, 1.0);
    }
    problem.initial = out.fit.parameters;
    const double initial_chi2 = out.fit.initial_chi2;
    auto next = nls::minimize(problem);
    next.initial_chi2 = initial_chi2;
    double change = 0.0;
    for (std::size_t j = 0; j < next.parameters.size(); ++j) {
      const double a = next.parameters[j], b = out.fit.parameters[j];
      change = std::max(change, std::abs(a - b) / std::max(std::abs(b), 1e-300));
    }
    out.fit = std::move(next);
    if (change < 1e-10) break;
  }
  for (std::size_t k = 0; k < initial.size(); ++k) {
    Component c;
    c.amplitude = out.fit.parameters[2 * k];
    c.tau_ns = out.fit.parameters[2 * k + 1];
    c.amplitude_sigma3 = out.fit.sigma3[2 * k];
    c.tau_sigma3 = out.fit.sigma3[2 * k + 1];
    out.components.push_back(c);
  }
  return out;
}

// Amplitude and lifetime guess from area/peak and a log-linear slope.
Component single_guess(const Data& d) {
  double area = 0.0;
  for (std::size_t i = 1; i < d.t.size(); ++i) {
    area += 0.5 * (d.t[i] - d.t[i - 1]) * (d.y[i] + d.y[i - 1]);
  }
  const double peak = std::max(d.y.front(), 1e-12);
  double tau = area > 0.0 ? area / peak : (d.t.back() - d.t.front()) / 3.0;
  if (!(tau > 0.0)) tau = 1.0;
  return {peak * std::exp(d.t.front() / tau), tau, 0.0, 0.0};
}

bool any_at_tau_bound(const nls::FitResult& fit) {
  for (std::size_t j = 1; j < fit.at_bound.size(); j += 2) {
    if (fit.at_bound[j]) return true;
  }
  return false;
}

void sort_descending(std::vector<Component>& comps) {
  std::sort(comps.begin(), comps.end(),
            [](const Component& a, const Component& b) { return a.tau_ns > b.tau_ns; });
}

double aic(const nls::FitResult& fit, std::size_t n_free) {
  return fit.chi2 + 2.0 * static_cast<double>(n_free);
}

std::size_t count_free(const std::vector<bool>& pinned, std::size_t n) {
  std::size_t free = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (pinned.empty() || !pinned[j]) ++free;
  }
  return free;
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::single_exp ? "single" : "double";
}

FitKind parse_fit_kind(const std::string& text) {
  if (text == "single") return FitKind::single_exp;
  if (text == "double") return FitKind::double_exp;
  if (text == "auto") return FitKind::automatic;
  throw ValidationError("unknown decay model kind '" + text + "' (expected auto|single|double)");
}

Background estimate_background(const DecayTrace& trace) {
  const std::size_t n = trace.pre_pulse_bins();
  if (n < kMinBaselineBins) {
    throw InsufficientDataError("insufficient baseline: " + std::to_string(n) +
                                " bins precede the pulse, need at least 10");
  }
  const auto counts = trace.counts().first(n);
  const double mean = std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double c : counts) ss += (c - mean) * (c - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean, sd / std::sqrt(static_cast<double>(n)), sd, n};
}

double multi_exponential(std::span<const Component> components, double t) {
  double f = 0.0;
  for (const auto& c : components) f += c.amplitude * std::exp(-t / c.tau_ns);
  return f;
}

FitWindow default_window(const DecayTrace& trace, const Background& bg) {
  const auto times = trace.time_ns();
  const auto counts = trace.counts();
  const double start = trace.pulse_time_ns() + 2.0 * trace.bin_width_ns();
  const double threshold = bg.mean + 3.0 * bg.std_dev;
  double end = start;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (times[i] >= start && counts[i] >= threshold) end = times[i];
  }
  return {start, end};
}

DecayFitResult fit_decay(const DecayTrace& trace, const DecayFitOptions& options) {
  DecayFitResult result;
  result.background = estimate_background(trace);
  result.band_center_nm = trace.band_center_nm();
  result.temperature_K = trace.temperature_K();
  result.window = options.window.value_or(default_window(trace, result.background));
  if (result.window.t_start_ns <= trace.pulse_time_ns()) {
    throw PreconditionError("fit window must start after the excitation pulse");
  }
  if (!(result.window.t_end_ns > result.window.t_start_ns)) {
    throw PreconditionError("fit window is empty");
  }
  const Data d = window_data(trace, result.background, result.window);
  if (d.t.size() < 5) throw InsufficientDataError("fewer than 5 bins in the fit window");
  result.n_points = d.t.size();
  const double span = d.t.back() - d.t.front();
  const double bin = trace.bin_width_ns();

  // Explicitly seeded fit: one shot, no model selection.
  if (!options.initial.empty()) {
    if (options.initial.size() > 2) throw PreconditionError("at most two decay components");
    RawFit raw = run_fit(d, options.initial, options.pinned, span, bin);
    result.components = raw.components;
    sort_descending(result.components);
    result.model_kind = raw.components.size() == 1 ? ModelKind::single_exp : ModelKind::double_exp;
    result.chi2 = raw.fit.chi2;
    result.reduced_chi2 = raw.fit.reduced_chi2;
    result.converged = raw.fit.converged;
    result.aic_single = aic(raw.fit, count_free(options.pinned, 2 * options.initial.size()));
    if (any_at_tau_bound(raw.fit)) result.warnings.push_back("lifetime at fit bound");
    return result;
  }

  const RawFit single = run_fit(d, {single_guess(d)}, {}, span, bin);
  result.aic_single = aic(single.fit, 2);

  auto use_single = [&](DecayFitResult& r) {
    r.components = single.components;
    r.model_kind = ModelKind::single_exp;
    r.chi2 = single.fit.chi2;
    r.reduced_chi2 = single.fit.reduced_chi2;
    r.converged = single.fit.converged;
    if (any_at_tau_bound(single.fit)) r.warnings.push_back("lifetime at fit bound");
  };

  if (options.kind == FitKind::single_exp) {
    use_single(result);
    return result;
  }

  // Double model: τ bracketing the single-exponential value.
  const Component& s = single.components.front();
  std::vector<Component> init = {{s.amplitude / 2.0, 3.0 * s.tau_ns, 0.0, 0.0},
                                 {s.amplitude / 2.0, s.tau_ns / 3.0, 0.0, 0.0}};
  std::vector<bool> pinned;
  if (options.pinned_slow_tau_ns) {
    init[0].tau_ns = *options.pinned_slow_tau_ns;
    pinned = {false, true, false, false};
  }

  std::optional<RawFit> dbl;
  std::vector<std::string> dbl_warnings;
  try {
    dbl = run_fit(d, init, pinned, span, bin);
  } catch (const DegenerateFitError& e) {
    // A vanishing amplitude leaves its lifetime unidentifiable: hold that
    // lifetime where it is and refit the rest.
    if (options.kind == FitKind::double_exp) {
      const auto& dir = e.direction();
      const std::size_t tau_idx = std::abs(dir[3]) >= std::abs(dir[1]) ? 3 : 1;
      std::vector<bool> hold = pinned.empty() ? std::vector<bool>(4, false) : pinned;
      hold[tau_idx] = true;
      try {
        dbl = run_fit(d, init, hold, span, bin);
        dbl_warnings.push_back("component amplitude vanished; tau" +
                               std::to_string(tau_idx / 2 + 1) + " held at its initial value");
      } catch (const DegenerateFitError&) {
        dbl.reset();
      }
    }
    if (!dbl) dbl_warnings.push_back(std::string("double fit degenerate: ") + e.what());
  }

  if (dbl) {
    const auto& c = dbl->components;
    const double rel = std::abs(c[0].tau_ns - c[1].tau_ns) / std::max(c[0].tau_ns, c[1].tau_ns);
    if (rel < 1e-2 && !options.pinned_slow_tau_ns) {
      dbl_warnings.push_back("double fit lifetimes coincide; collapsed to single");
      dbl.reset();
    }
  }

  if (dbl) result.aic_double = aic(dbl->fit, count_free(pinned, 4));
  // A lifetime on its bound mimics a background offset rather than a second
  // decay channel, so automatic selection does not accept it.
  if (dbl && options.kind == FitKind::automatic && any_at_tau_bound(dbl->fit)) {
    dbl_warnings.push_back("double fit rejected: lifetime at fit bound");
    dbl.reset();
  }
  // Likewise an amplitude consistent with zero does not establish a channel.
  if (dbl && options.kind == FitKind::automatic) {
    for (const auto& c : dbl->components) {
      if (c.amplitude <= c.amplitude_sigma3) {
        dbl_warnings.push_back("double fit rejected: amplitude consistent with zero");
        dbl.reset();
        break;
      }
    }
  }

  const bool take_double =
      dbl && (options.kind == FitKind::double_exp ||
              result.aic_single - *result.aic_double > options.aic_threshold);
  if (take_double) {
    result.components = dbl->components;
    sort_descending(result.components);
    result.model_kind = ModelKind::double_exp;
    result.chi2 = dbl->fit.chi2;
    result.reduced_chi2 = dbl->fit.reduced_chi2;
    result.converged = dbl->fit.converged;
    if (any_at_tau_bound(dbl->fit)) result.warnings.push_back("lifetime at fit bound");
  } else {
    use_single(result);
  }
  for (auto& w : dbl_warnings) result.warnings.push_back(std::move(w));
  return result;
}

// ---------------------------------------------------------------------------

double thermal_lifetime(double tau, double tau_p, double e_p, double temperature) {
  const double activated = std::exp(-e_p / (kBoltzmannMeVPerK * temperature));
  return 1.0 / (1.0 / tau + activated / tau_p);
}

double ThermalModel::lifetime(double temperature_K) const {
  return thermal_lifetime(tau_ns, tau_p_ns, e_p_meV, temperature_K);
}

ThermalModel fit_thermal(std::span<const ThermalPoint> points) {
  if (points.size() < 4) throw InsufficientDataError("thermal fit needs at least 4 points");
  std::vector<ThermalPoint> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(),
            [](const auto& a, const auto& b) { return a.temperature_K < b.temperature_K; });
  std::size_t distinct = 1;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].temperature_K != pts[i - 1].temperature_K) ++distinct;
  }
  for (const auto& p : pts) {
    if (!(p.sigma_ns > 0.0)) throw ValidationError("thermal point sigma must be > 0");
    if (!(p.temperature_K > 0.0) || !(p.tau_ns > 0.0)) {
      throw ValidationError("thermal points need T > 0 and tau > 0");
    }
  }
  if (distinct < 3) {
    throw DegenerateFitError("degenerate fit: thermal data span fewer than 3 distinct temperatures",
                             {0.0, 1.0, 1.0});
  }

  nls::FitProblem problem;
  problem.model = models::thermal;
  problem.gradient = models::thermal_gradient;
  problem.names = {"tau", "tau_p", "E_p"};
  for (const auto& p : pts) {
    problem.x.push_back(p.temperature_K);
    problem.y.push_back(p.tau_ns);
    problem.weight.push_back(1.0 / (p.sigma_ns * p.sigma_ns));
  }
  problem.bounds = {{1e-6, 1e9}, {1e-6, 1e9}, {1e-3, 1e4}};

  // Plateau from the coldest point; Arrhenius line through the quenched ones.
  const double tau0 = pts.front().tau_ns;
  double tau_p0 = tau0;
  double e0 = 10.0;
  {
    std::vector<double> xs, ys;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      const double q = 1.0 / pts[i].tau_ns - 1.0 / tau0;
      if (q > 0.0) {
        xs.push_back(1.0 / (kBoltzmannMeVPerK * pts[i].temperature_K));
        ys.push_back(std::log(q));
      }
    }
    if (xs.size() >= 2) {
      const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
      const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
      }
      if (sxx > 0.0 && sxy < 0.0) {
        e0 = -sxy / sxx;
        tau_p0 = std::exp(-(my + e0 * mx));
      }
    }
  }

  std::optional<nls::FitResult> best;
  std::optional<DegenerateFitError> last_degenerate;
  for (double e_start : {e0, 3.0, 10.0, 30.0, 100.0}) {
    problem.initial = {std::clamp(tau0, 1e-6, 1e9), std::clamp(e_start == e0 ? tau_p0 : tau0, 1e-6, 1e9),
                       std::clamp(e_start, 1e-3, 1e4)};
    try {
      auto fit = nls::minimize(problem);
      if (!best || fit.chi2 < best->chi2) best = std::move(fit);
    } catch (const DegenerateFitError& e) {
      last_degenerate = e;
    }
  }
  if (!best) throw *last_degenerate;

  ThermalModel m;
  m.tau_ns = best->parameters[0];
  m.tau_p_ns = best->parameters[1];
  m.e_p_meV = best->parameters[2];
  m.tau_sigma3 = best->sigma3[0];
  m.tau_p_sigma3 = best->sigma3[1];
  m.e_p_sigma3 = best->sigma3[2];
  m.reduced_chi2 = best->reduced_chi2;
  m.converged = best->converged;
  return m;
}

std::vector<ThermalPoint> load_thermal_points(const std::filesystem::path& path) {
  std::vector<ThermalPoint> out;
  for (const auto& row : read_columns(path, 3)) out.push_back({row[0], row[1], row[2]});
  return out;
}

// ---------------------------------------------------------------------------

std::vector<PooledChannel> pool_lifetimes(std::span<const LifetimeSample> samples,
                                          double match_tolerance) {
  if (samples.empty()) throw InsufficientDataError("no data: no lifetimes to pool");
  std::vector<LifetimeSample> sorted(samples.begin(), samples.end());
  for (const auto& s : sorted) {
    if (!(s.tau_ns > 0.0) || !(s.sigma_ns >= 0.0)) {
      throw ValidationError("lifetime samples need tau > 0 and sigma >= 0");
    }
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.tau_ns < b.tau_ns; });

  struct Accum {
    double sw = 0.0, swx = 0.0;
    std::size_t exact = 0;  // samples with zero sigma
    double exact_sum = 0.0;
    std::vector<std::string> bands;
    double mean() const { return exact > 0 ? exact_sum / static_cast<double>(exact) : swx / sw; }
  };
  std::vector<Accum> groups;
  for (const auto& s : sorted) {
    if (groups.empty() ||
        std::abs(s.tau_ns - groups.back().mean()) / groups.back().mean() >= match_tolerance) {
      groups.emplace_back();
    }
    auto& g = groups.back();
    if (s.sigma_ns == 0.0) {
      ++g.exact;
      g.exact_sum += s.tau_ns;
    } else {
      const double w = 1.0 / (s.sigma_ns * s.sigma_ns);
      g.sw += w;
      g.swx += w * s.tau_ns;
    }
    g.bands.push_back(s.band);
  }

  std::vector<PooledChannel> out;
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    PooledChannel c;
    c.tau_ns = it->mean();
    c.sigma_ns = it->exact > 0 ? 0.0 : 1.0 / std::sqrt(it->sw);
    c.bands = std::move(it->bands);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<PooledChannel> pool_lifetimes(std::span<const DecayFitResult> results,
                                          double match_tolerance) {
  std::vector<LifetimeSample> samples;
  for (const auto& r : results) {
    for (const auto& c : r.components) {
      if (c.amplitude <= 0.0) continue;
      samples.push_back({c.tau_ns, c.tau_sigma3 / 3.0, format_double(r.band_center_nm) + " nm"});
    }
  }
  return pool_lifetimes(samples, match_tolerance);
}

}  // namespace ccphot::decay
