#include "ccphot/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "ccphot/core.hpp"
#include "ccphot/decay.hpp"
#include "ccphot/errors.hpp"
#include "ccphot/photophysics.hpp"
#include "ccphot/report.hpp"
#include "ccphot/spectrum.hpp"
#include "ccphot/synth.hpp"

namespace ccphot::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

enum class Arg { input, inputs, number, text, pair, ranges };

struct Flag {
  const char* flag;
  const char* key;
  Arg type;
  const char* help;
};

struct CommandSpec {
  const char* name;
  const char* help;
  std::vector<Flag> flags;
  std::vector<const char*> required_inputs;
};

const std::vector<CommandSpec>& specs() {
  static const std::vector<CommandSpec> s = {
      {"fit-decay",
       "Fit a single or double exponential to a decay trace",
       {{"--trace", "trace", Arg::input, "two-column trace file (time ns, counts)"},
        {"--kind", "kind", Arg::text, "auto, single or double"},
        {"--window", "window", Arg::pair, "fit window t0,t1 in ns"},
        {"--pulse-ns", "pulse_ns", Arg::number, "excitation pulse time"},
        {"--temperature-K", "temperature_K", Arg::number, "sample temperature"},
        {"--band-center-nm", "band_center_nm", Arg::number, "filter band center"},
        {"--aic-threshold", "aic_threshold", Arg::number, "AIC margin for the double model"},
        {"--pin-slow-tau-ns", "pin_slow_tau_ns", Arg::number, "hold the slow lifetime of the double model"}},
       {"trace"}},
      {"fit-thermal",
       "Fit the thermally activated lifetime model",
       {{"--points", "points", Arg::input, "three-column file (T K, tau ns, sigma ns)"}},
       {"points"}},
      {"zpl",
       "Locate and fit zero-phonon lines",
       {{"--spectrum", "spectrum", Arg::input, "two-column spectrum (nm, counts)"},
        {"--zpl-config", "zpl_config", Arg::input, "JSON list of expected lines"},
        {"--resolution-nm", "resolution_nm", Arg::number, "spectral resolution"},
        {"--temperature-K", "temperature_K", Arg::number, "sample temperature"}},
       {"spectrum"}},
      {"fit-psb",
       "Fit the alpha phonon sideband and partition the Debye-Waller factors",
       {{"--spectrum", "spectrum", Arg::input, "two-column spectrum (nm, counts)"},
        {"--zpl-config", "zpl_config", Arg::input, "JSON list of expected lines"},
        {"--partition-meV", "partition_meV", Arg::number, "alpha phonon energy of the partition"},
        {"--beta-min-meV", "beta_min_phonon_meV", Arg::number, "lowest beta phonon energy"},
        {"--max-phonon-meV", "max_phonon_meV", Arg::number, "highest phonon energy"},
        {"--truncation-correction", "truncation_correction", Arg::number, "factor for truncated records"},
        {"--exclude", "exclude_nm", Arg::ranges, "excluded range a:b in nm (repeatable)"},
        {"--alpha-assigned", "alpha_assigned_nm", Arg::ranges, "residual range kept with alpha a:b"},
        {"--resolution-nm", "resolution_nm", Arg::number, "spectral resolution"},
        {"--temperature-K", "temperature_K", Arg::number, "sample temperature"}},
       {"spectrum"}},
      {"budget",
       "Radiative efficiency budget",
       {{"--tau-rad", "tau_rad_ns", Arg::number, "radiative lifetime (ns)"},
        {"--tau-tot", "tau_tot_ns", Arg::number, "measured lifetime (ns)"},
        {"--dw", "dw_exp", Arg::number, "measured Debye-Waller factor"},
        {"--s", "S_th", Arg::number, "calculated Huang-Rhys factor"},
        {"--site", "site", Arg::text, "k or h"}},
       {}},
      {"cavity",
       "Cooperativity and cavity emission probability",
       {{"--lambda-nm", "lambda_nm", Arg::number, "emission wavelength"},
        {"--finesse", "finesse", Arg::number, "cavity finesse"},
        {"--roc-mm", "roc_mm", Arg::number, "mirror radius of curvature"},
        {"--lvac-um", "lvac_um", Arg::number, "vacuum gap"},
        {"--lsic-um", "lsic_um", Arg::number, "SiC membrane thickness"},
        {"--eta-tot", "eta_tot", Arg::number, "total emitter efficiency"},
        {"--n-sic", "n_sic", Arg::number, "SiC refractive index (default 2.56)"},
        {"--wc-um", "wc_um", Arg::number, "mode field radius override"},
        {"--extraction", "extraction", Arg::number, "output coupling fraction (default 0.61)"},
        {"--sweep", "sweep", Arg::text, "finesse=a:b:n log-spaced sweep"}},
       {}},
      {"simulate",
       "Generate synthetic data from a generator spec",
       {{"--spec", "spec", Arg::input, "JSON generator spec"}, {"--out", "out", Arg::text, "output data file"}},
       {"spec"}},
      {"report",
       "Bundle budget reports into a summary table",
       {{"--input", "reports", Arg::inputs, "report files"}},
       {"reports"}},
  };
  return s;
}

const CommandSpec& spec_for(const std::string& command) {
  for (const auto& s : specs()) {
    if (command == s.name) return s;
  }
  throw UsageError("unknown command '" + command + "'");
}

bool is_input(Arg a) { return a == Arg::input || a == Arg::inputs; }

double parse_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw UsageError(what + ": '" + text + "' is not a decimal number");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

// Parameter accessors. Numbers may be given as JSON numbers only.
double number(const Json& p, const char* key) {
  if (!p.contains(key)) throw ValidationError(std::string("missing parameter ") + key);
  if (!p[key].is_number()) throw ValidationError(std::string("parameter ") + key + " must be a number");
  return p[key].get<double>();
}

std::optional<double> opt_number(const Json& p, const char* key) {
  if (!p.contains(key)) return std::nullopt;
  return number(p, key);
}

std::optional<std::string> opt_text(const Json& p, const char* key) {
  if (!p.contains(key)) return std::nullopt;
  if (!p[key].is_string()) throw ValidationError(std::string("parameter ") + key + " must be a string");
  return p[key].get<std::string>();
}

std::vector<std::pair<double, double>> ranges(const Json& p, const char* key) {
  std::vector<std::pair<double, double>> out;
  if (!p.contains(key)) return out;
  if (!p[key].is_array()) throw ValidationError(std::string("parameter ") + key + " must be a list of [a, b]");
  for (const auto& r : p[key]) {
    if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
      throw ValidationError(std::string("parameter ") + key + " must be a list of [a, b]");
    }
    double a = r[0].get<double>(), b = r[1].get<double>();
    if (a > b) std::swap(a, b);
    out.emplace_back(a, b);
  }
  return out;
}

Metadata metadata_for(const fs::path& data, const Json& p) {
  Metadata meta;
  if (fs::exists(sidecar_path(data))) meta = load_metadata(sidecar_path(data));
  if (auto t = opt_number(p, "temperature_K")) meta["temperature_K"] = format_double(*t);
  if (auto t = opt_number(p, "pulse_ns")) meta["pulse_time_ns"] = format_double(*t);
  if (auto t = opt_number(p, "band_center_nm")) meta["band_center_nm"] = format_double(*t);
  return meta;
}

std::string with_sigma(double value, double sigma3) {
  std::ostringstream s;
  s.precision(6);
  s << value << " +/- " << sigma3 << " (3 sigma)";
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

void write_columns(const fs::path& path, const std::string& header, const std::vector<std::vector<double>>& cols) {
  std::ostringstream s;
  s << "# " << header << "\n";
  const std::size_t n = cols.empty() ? 0 : cols.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) s << (c ? "\t" : "") << format_double(cols[c][i]);
    s << "\n";
  }
  write_text(path, s.str());
}

struct Outcome {
  Json report;
  std::vector<report::InputRef> inputs;
};

std::vector<report::InputRef> input_refs(const RunConfig& cfg) {
  std::vector<report::InputRef> refs;
  for (const auto& [role, paths] : cfg.inputs) {
    for (const auto& p : paths) refs.push_back({role, p});
  }
  return refs;
}

// ---------------------------------------------------------------------------

Outcome run_fit_decay(const RunConfig& cfg, std::ostream& out) {
  const auto& p = cfg.parameters;
  const fs::path path = cfg.inputs.at("trace").front();
  const auto trace = load_trace(path, metadata_for(path, p));
  decay::DecayFitOptions opts;
  opts.kind = decay::parse_fit_kind(opt_text(p, "kind").value_or("auto"));
  if (p.contains("window")) {
    const auto& w = p["window"];
    if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number()) {
      throw ValidationError("parameter window must be [t0, t1]");
    }
    opts.window = decay::FitWindow{w[0].get<double>(), w[1].get<double>()};
  }
  if (auto a = opt_number(p, "aic_threshold")) opts.aic_threshold = *a;
  if (auto t = opt_number(p, "pin_slow_tau_ns")) opts.pinned_slow_tau_ns = *t;
  const auto fit = decay::fit_decay(trace, opts);

  out << "model: " << decay::to_string(fit.model_kind) << "\n";
  for (std::size_t i = 0; i < fit.components.size(); ++i) {
    out << "tau" << i + 1 << "_ns = " << with_sigma(fit.components[i].tau_ns, fit.components[i].tau_sigma3) << "\n";
  }
  out << "reduced_chi2 = " << fit.reduced_chi2 << "\n";

  if (cfg.emit_plot_data) {
    const auto t = trace.time_ns();
    const auto c = trace.counts();
    write_columns(cfg.output_dir / "fit-decay_data.txt", "time_ns counts",
                  {std::vector<double>(t.begin(), t.end()), std::vector<double>(c.begin(), c.end())});
    std::vector<double> ft, fy;
    for (double ti : t) {
      if (ti < fit.window.t_start_ns || ti > fit.window.t_end_ns) continue;
      ft.push_back(ti);
      fy.push_back(fit.background.mean + decay::multi_exponential(fit.components, ti - trace.pulse_time_ns()));
    }
    write_columns(cfg.output_dir / "fit-decay_fit.txt", "time_ns model_counts", {ft, fy});
  }
  return {report::decay_report(fit), input_refs(cfg)};
}

Outcome run_fit_thermal(const RunConfig& cfg, std::ostream& out) {
  const auto points = decay::load_thermal_points(cfg.inputs.at("points").front());
  const auto model = decay::fit_thermal(points);
  out << "tau_ns = " << with_sigma(model.tau_ns, model.tau_sigma3) << "\n"
      << "tau_p_ns = " << with_sigma(model.tau_p_ns, model.tau_p_sigma3) << "\n"
      << "E_p_meV = " << with_sigma(model.e_p_meV, model.e_p_sigma3) << "\n";
  if (cfg.emit_plot_data) {
    std::vector<double> t, tau;
    double t_max = 0.0;
    for (const auto& pt : points) {
      t.push_back(pt.temperature_K);
      tau.push_back(pt.tau_ns);
      t_max = std::max(t_max, pt.temperature_K);
    }
    write_columns(cfg.output_dir / "fit-thermal_data.txt", "temperature_K tau_ns", {t, tau});
    std::vector<double> ft, fy;
    for (int i = 0; i <= 200; ++i) {
      const double ti = 1.0 + (1.2 * t_max - 1.0) * i / 200.0;
      ft.push_back(ti);
      fy.push_back(model.lifetime(ti));
    }
    write_columns(cfg.output_dir / "fit-thermal_fit.txt", "temperature_K tau_ns", {ft, fy});
  }
  return {report::thermal_report(model, points), input_refs(cfg)};
}

struct ZplConfig {
  std::vector<spectrum::ExpectedLine> lines;
  double resolution_nm = 0.0;
};

ZplConfig zpl_config(const RunConfig& cfg) {
  ZplConfig z;
  if (auto it = cfg.inputs.find("zpl_config"); it != cfg.inputs.end()) {
    std::ifstream in(it->second.front());
    Json j;
    try {
      in >> j;
    } catch (const Json::exception& e) {
      throw ValidationError("ZPL config " + it->second.front().string() + ": " + e.what());
    }
    for (const auto& [k, v] : j.items()) {
      if (k != "lines" && k != "resolution_nm") throw ValidationError("ZPL config: unknown key '" + k + "'");
    }
    try {
      for (const auto& l : j.at("lines")) {
        for (const auto& [k, v] : l.items()) {
          if (k != "label" && k != "center_nm" && k != "half_window_nm") {
            throw ValidationError("ZPL config line: unknown key '" + k + "'");
          }
        }
        z.lines.push_back({l.at("label").get<std::string>(), l.at("center_nm").get<double>(),
                           l.value("half_window_nm", 1.0)});
      }
      z.resolution_nm = j.value("resolution_nm", 0.0);
    } catch (const Json::exception& e) {
      throw ValidationError(std::string("ZPL config: ") + e.what());
    }
  } else {
    for (const auto& site : {alpha_site_assignment(), beta_site_assignment()}) {
      for (const auto& [label, nm] : site.zpl_lines) z.lines.push_back({label, nm, 1.0});
    }
  }
  if (auto r = opt_number(cfg.parameters, "resolution_nm")) z.resolution_nm = *r;
  return z;
}

Outcome run_zpl(const RunConfig& cfg, std::ostream& out) {
  const fs::path path = cfg.inputs.at("spectrum").front();
  const auto spec = load_spectrum(path, metadata_for(path, cfg.parameters));
  const auto z = zpl_config(cfg);
  const auto set = spectrum::find_zpls(spec, z.lines, z.resolution_nm);
  for (const auto& l : set.lines) {
    out << l.label << ": center_nm = " << with_sigma(l.center_nm, l.center_sigma3) << ", fwhm_nm "
        << (l.fwhm_upper_bound ? "<= " : "= ") << l.fwhm_nm << ", area = " << l.area << "\n";
  }
  if (set.doublet_splitting_meV) out << "doublet splitting = " << *set.doublet_splitting_meV << " meV\n";
  for (const auto& w : set.warnings) out << "warning: " << w << "\n";
  if (cfg.emit_plot_data) {
    const auto wl = spec.wavelength_nm();
    const auto y = spec.intensity();
    std::vector<double> model(wl.size(), 0.0);
    for (const auto& l : set.lines) {
      for (std::size_t i = 0; i < wl.size(); ++i) model[i] += l.profile(wl[i]);
    }
    std::vector<double> x(wl.begin(), wl.end());
    write_columns(cfg.output_dir / "zpl_data.txt", "wavelength_nm intensity", {x, std::vector<double>(y.begin(), y.end())});
    write_columns(cfg.output_dir / "zpl_fit.txt", "wavelength_nm zpl_model", {x, model});
  }
  return {report::zpl_report(set), input_refs(cfg)};
}

Outcome run_fit_psb(const RunConfig& cfg, std::ostream& out) {
  const auto& p = cfg.parameters;
  const fs::path path = cfg.inputs.at("spectrum").front();
  const auto spec = load_spectrum(path, metadata_for(path, p));
  const auto z = zpl_config(cfg);
  const auto set = spectrum::find_zpls(spec, z.lines, z.resolution_nm);

  spectrum::PsbConstraints c;
  c.beta_min_phonon_meV = opt_number(p, "beta_min_phonon_meV").value_or(c.beta_min_phonon_meV);
  c.max_phonon_meV = opt_number(p, "max_phonon_meV").value_or(c.max_phonon_meV);
  c.exclude_nm = ranges(p, "exclude_nm");
  c.alpha_assigned_nm = ranges(p, "alpha_assigned_nm");
  const auto fit = spectrum::fit_psb(spec, set, c);

  double partition = 0.0;
  if (auto v = opt_number(p, "partition_meV")) {
    partition = *v;
  } else {
    const auto* beta = set.find("beta");
    partition = 1e3 * (fit.reference_eV - wavelength_to_energy(beta->center_nm).eV()) + c.beta_min_phonon_meV;
  }
  spectrum::PartitionOptions po;
  po.max_phonon_meV = c.max_phonon_meV;
  po.truncation_correction = opt_number(p, "truncation_correction").value_or(po.truncation_correction);
  const auto part = spectrum::partition_dw(spec, set, partition, &fit, po);

  auto rep = report::psb_report(fit, part, spec.area());
  rep["partition"]["partition_meV"] = partition;
  rep["zpl"] = report::zpl_report(set)["lines"];
  out << "I0 = " << with_sigma(fit.alpha.i0, fit.i0_sigma3) << "\n"
      << "sigma_meV = " << with_sigma(fit.alpha.sigma_meV, fit.sigma_sigma3) << "\n"
      << "delta0_meV = " << with_sigma(fit.alpha.delta0_meV, fit.delta0_sigma3) << "\n"
      << "dw_mean = " << part.dw_mean << "\n"
      << part.dw_alpha_low << " <= dw_alpha <= " << part.dw_alpha_high << "\n"
      << "dw_beta >= " << part.dw_beta_low << "\n";
  if (part.dw_alpha_refined) out << "dw_alpha (refined) = " << *part.dw_alpha_refined << "\n";
  if (part.dw_beta_refined) out << "dw_beta (refined) = " << *part.dw_beta_refined << "\n";
  for (const auto& w : fit.warnings) out << "warning: " << w << "\n";

  std::vector<double> recon(fit.wavelength_nm.size());
  for (std::size_t i = 0; i < recon.size(); ++i) recon[i] = fit.zpl_model[i] + fit.alpha_model[i];
  write_columns(cfg.output_dir / "fit-psb_reconstructed.txt", "wavelength_nm zpl_plus_alpha_sideband",
                {fit.wavelength_nm, recon});
  if (cfg.emit_plot_data) {
    const auto y = spec.intensity();
    write_columns(cfg.output_dir / "fit-psb_data.txt", "wavelength_nm intensity",
                  {fit.wavelength_nm, std::vector<double>(y.begin(), y.end())});
    write_columns(cfg.output_dir / "fit-psb_alpha_sideband.txt", "wavelength_nm alpha_sideband",
                  {fit.wavelength_nm, fit.alpha_model});
    write_columns(cfg.output_dir / "fit-psb_beta_residual.txt", "wavelength_nm beta_residual",
                  {fit.wavelength_nm, fit.residual});
  }
  return {rep, input_refs(cfg)};
}

Outcome run_budget(const RunConfig& cfg, std::ostream& out) {
  const auto& p = cfg.parameters;
  std::optional<SiteAssignment> site;
  if (auto s = opt_text(p, "site")) {
    if (*s == "k") {
      site = alpha_site_assignment();
    } else if (*s == "h") {
      site = beta_site_assignment();
    } else {
      throw ValidationError("site must be k or h");
    }
  }
  const auto b = photophysics::budget(number(p, "tau_rad_ns"), number(p, "tau_tot_ns"), number(p, "dw_exp"),
                                      number(p, "S_th"), site);
  char buf[256];
  std::snprintf(buf, sizeof buf, "dw_th = %.3f\ntau_NR_ns = %s\neta_rad = %.1f%%\neta_tot = %.1f%%\n", b.dw_th,
                b.tau_nr_ns ? format_double(std::round(*b.tau_nr_ns * 10) / 10).c_str() : "absent",
                100 * b.eta_rad, 100 * b.eta_tot);
  out << buf;
  for (const auto& n : b.notes) out << "note: " << n << "\n";
  return {report::budget_report(b), {}};
}

Outcome run_cavity(const RunConfig& cfg, std::ostream& out) {
  const auto& p = cfg.parameters;
  photophysics::CavityParams c;
  c.wavelength_nm = number(p, "lambda_nm");
  c.finesse = number(p, "finesse");
  c.roc_mm = number(p, "roc_mm");
  c.l_vac_um = number(p, "lvac_um");
  c.l_sic_um = number(p, "lsic_um");
  c.eta_tot = number(p, "eta_tot");
  c.n_sic = opt_number(p, "n_sic").value_or(c.n_sic);
  c.w_c_um = opt_number(p, "wc_um");
  c.extraction = opt_number(p, "extraction").value_or(c.extraction);
  const auto r = photophysics::cooperativity(c);

  std::vector<photophysics::SweepPoint> sweep;
  if (auto s = opt_text(p, "sweep")) {
    const auto eq = s->find('=');
    if (eq == std::string::npos || s->substr(0, eq) != "finesse") {
      throw ValidationError("sweep must have the form finesse=a:b:n");
    }
    const auto parts = split(s->substr(eq + 1), ':');
    if (parts.size() != 3) throw ValidationError("sweep must have the form finesse=a:b:n");
    const double n = parse_number(parts[2], "sweep count");
    if (!(n >= 2) || n != std::floor(n)) throw ValidationError("sweep count must be an integer >= 2");
    sweep = photophysics::finesse_sweep(c, parse_number(parts[0], "sweep start"), parse_number(parts[1], "sweep end"),
                                        static_cast<std::size_t>(n));
    std::vector<double> f, cc, ec, eo;
    for (const auto& pt : sweep) {
      f.push_back(pt.finesse);
      cc.push_back(pt.c);
      ec.push_back(pt.eta_cav);
      eo.push_back(pt.eta_out);
    }
    write_columns(cfg.output_dir / "cavity_sweep.txt", "finesse C eta_cav eta_out", {f, cc, ec, eo});
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "w_C = %.3f um\nf_L = %.4f\nC = %.4f\neta_cav = %.1f%%\neta_out = %.1f%%\n",
                r.w_c_um, r.f_l, r.c, 100 * r.eta_cav, 100 * r.eta_out);
  out << buf;
  return {report::cavity_report(c, r, sweep), {}};
}

Outcome run_simulate(const RunConfig& cfg, std::ostream& out) {
  const auto& p = cfg.parameters;
  const auto spec = synth::load_generator_spec(cfg.inputs.at("spec").front());
  const auto target = opt_text(p, "out");
  if (!target || target->empty()) throw ValidationError("simulate needs an output file (--out)");
  const fs::path dest = *target;
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  Json meta = Json::object();
  switch (spec.kind) {
    case synth::Kind::decay: {
      const auto t = synth::gen_decay(spec);
      save_trace(dest, t);
      meta = {{"pulse_time_ns", t.pulse_time_ns()},
              {"temperature_K", t.temperature_K()},
              {"band_center_nm", t.band_center_nm()},
              {"band_width_nm", t.band_width_nm()}};
      break;
    }
    case synth::Kind::spectrum: {
      const auto s = synth::gen_spectrum(spec);
      save_spectrum(dest, s);
      meta = {{"temperature_K", s.temperature_K()}, {"power_mW", s.excitation_power_mW()}, {"label", s.label()}};
      break;
    }
    case synth::Kind::thermal_series: {
      std::vector<double> t, tau, sig;
      for (const auto& pt : synth::gen_thermal_series(spec)) {
        t.push_back(pt.temperature_K);
        tau.push_back(pt.tau_ns);
        sig.push_back(pt.sigma_ns);
      }
      write_columns(dest, "temperature_K tau_ns sigma_ns", {t, tau, sig});
      break;
    }
    case synth::Kind::power_series:
    case synth::Kind::polarization_series: {
      const auto pts = spec.kind == synth::Kind::power_series ? synth::gen_power_series(spec)
                                                               : synth::gen_polarization_series(spec);
      std::vector<double> x, y;
      for (const auto& [a, b] : pts) {
        x.push_back(a);
        y.push_back(b);
      }
      write_columns(dest, spec.kind == synth::Kind::power_series ? "power_mW intensity" : "angle_deg intensity",
                    {x, y});
      break;
    }
  }
  if (!meta.empty()) write_text(sidecar_path(dest), meta.dump(2) + "\n");
  out << "wrote " << dest.generic_string() << "\n";
  Json rep = {{"kind", "simulate"},
              {"generator", synth::to_string(spec.kind)},
              {"seed", spec.seed},
              {"out", dest.generic_string()},
              {"fnv1a", report::hash_file(dest)}};
  return {rep, input_refs(cfg)};
}

Outcome run_report(const RunConfig& cfg, std::ostream& out) {
  std::vector<report::Json> reports;
  for (const auto& path : cfg.inputs.at("reports")) {
    std::ifstream in(path);
    report::Json j;
    try {
      in >> j;
    } catch (const report::Json::exception& e) {
      throw ValidationError("report " + path.string() + ": " + e.what());
    }
    reports.push_back(std::move(j));
  }
  const auto rows = report::bundle_rows(reports);
  const auto md = report::bundle_markdown(rows);
  write_text(cfg.output_dir / "summary.md", md);
  out << md;
  return {report::bundle_json(rows), input_refs(cfg)};
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = [] {
    std::vector<std::string> v;
    for (const auto& s : specs()) v.emplace_back(s.name);
    return v;
  }();
  return c;
}

void RunConfig::validate() const {
  const auto& spec = [&]() -> const CommandSpec& {
    try {
      return spec_for(command);
    } catch (const UsageError& e) {
      throw ValidationError(e.what());
    }
  }();
  std::set<std::string> roles, keys;
  for (const auto& f : spec.flags) (is_input(f.type) ? roles : keys).insert(f.key);
  for (const auto& [role, paths] : inputs) {
    if (!roles.count(role)) throw ValidationError("command " + command + ": unknown input '" + role + "'");
    if (paths.empty()) throw ValidationError("command " + command + ": input '" + role + "' lists no files");
    for (const auto& p : paths) {
      if (!fs::is_regular_file(p)) throw ValidationError("input file not found: " + p.string());
    }
  }
  for (const char* r : spec.required_inputs) {
    if (!inputs.count(r)) throw ValidationError("command " + command + ": missing input '" + std::string(r) + "'");
  }
  if (!parameters.is_object()) throw ValidationError("parameters must be an object");
  for (const auto& [k, v] : parameters.items()) {
    if (!keys.count(k)) throw ValidationError("command " + command + ": unknown parameter '" + k + "'");
  }
}

Json RunConfig::to_json() const {
  Json j;
  j["command"] = command;
  Json in = Json::object();
  for (const auto& [role, paths] : inputs) {
    Json a = Json::array();
    for (const auto& p : paths) a.push_back(p.generic_string());
    in[role] = a;
  }
  j["inputs"] = in;
  j["parameters"] = parameters;
  j["output_dir"] = output_dir.generic_string();
  j["emit_plot_data"] = emit_plot_data;
  return j;
}

RunConfig parse_run_config(const std::string& json_text) {
  try {
    const auto j = Json::parse(json_text);
    if (!j.is_object()) throw ValidationError("run config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (k != "command" && k != "inputs" && k != "parameters" && k != "output_dir" && k != "emit_plot_data") {
        throw ValidationError("run config: unknown key '" + k + "'");
      }
    }
    RunConfig c;
    c.command = j.at("command").get<std::string>();
    if (j.contains("inputs")) {
      for (const auto& [role, v] : j["inputs"].items()) {
        auto& dst = c.inputs[role];
        if (v.is_string()) {
          dst.emplace_back(v.get<std::string>());
        } else {
          for (const auto& s : v) dst.emplace_back(s.get<std::string>());
        }
      }
    }
    if (j.contains("parameters")) c.parameters = j["parameters"];
    c.output_dir = j.value("output_dir", std::string("."));
    c.emit_plot_data = j.value("emit_plot_data", false);
    return c;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config file not found: " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_run_config(s.str());
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return kUsage;
  if (dynamic_cast<const DegenerateFitError*>(&e) || dynamic_cast<const EvaluationError*>(&e) ||
      dynamic_cast<const LineNotFoundError*>(&e) || dynamic_cast<const ModelInconsistencyError*>(&e)) {
    return kFitFailure;
  }
  return kValidation;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    config.validate();
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec) throw ValidationError("cannot create output directory " + config.output_dir.string());
    Outcome o;
    const auto& c = config.command;
    if (c == "fit-decay") {
      o = run_fit_decay(config, out);
    } else if (c == "fit-thermal") {
      o = run_fit_thermal(config, out);
    } else if (c == "zpl") {
      o = run_zpl(config, out);
    } else if (c == "fit-psb") {
      o = run_fit_psb(config, out);
    } else if (c == "budget") {
      o = run_budget(config, out);
    } else if (c == "cavity") {
      o = run_cavity(config, out);
    } else if (c == "simulate") {
      o = run_simulate(config, out);
    } else {
      o = run_report(config, out);
    }
    write_text(config.output_dir / (c + ".json"), report::dump(o.report));
    write_text(config.output_dir / "manifest.json",
               report::dump(report::manifest(c, config.to_json(), o.inputs)));
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Photoluminescence and lifetime analysis for color centers"};
  app.name("ccphot");
  std::string config_path;
  std::string out_dir;
  bool plot = false;
  app.add_option("--config", config_path, "run configuration (JSON)");
  auto* out_opt = app.add_option("-o,--out-dir", out_dir, "directory for reports (default .)");
  auto* plot_opt = app.add_flag("--emit-plot-data", plot, "write two-column plot data");
  app.require_subcommand(0, 1);
  app.fallthrough();
  app.set_version_flag("--version", report::kToolVersion);

  struct Bound {
    const Flag* flag;
    CLI::Option* option;
  };
  std::map<std::string, std::pair<CLI::App*, std::vector<Bound>>> subs;
  std::map<std::string, std::vector<std::string>> values;
  for (const auto& s : specs()) {
    auto* sub = app.add_subcommand(s.name, s.help);
    auto& entry = subs[s.name];
    entry.first = sub;
    for (const auto& f : s.flags) {
      auto& store = values[std::string(s.name) + f.flag];
      CLI::Option* opt = nullptr;
      if (f.type == Arg::inputs || f.type == Arg::ranges) {
        opt = sub->add_option(f.flag, store, f.help)->expected(1, -1);
      } else {
        opt = sub->add_option(f.flag, store, f.help)->expected(1);
      }
      entry.second.push_back({&f, opt});
    }
  }

  std::ostringstream usage;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << report::kToolVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  }

  try {
    RunConfig cfg;
    const auto chosen = app.get_subcommands();
    if (!config_path.empty()) {
      if (!chosen.empty()) throw UsageError("give either --config or a command, not both");
      cfg = load_run_config(config_path);
    } else {
      if (chosen.empty()) {
        err << app.help();
        return kUsage;
      }
      cfg.command = chosen.front()->get_name();
      for (const auto& [flag, opt] : subs.at(cfg.command).second) {
        if (opt->count() == 0) continue;
        const auto& v = values.at(cfg.command + flag->flag);
        switch (flag->type) {
          case Arg::input:
            cfg.inputs[flag->key] = {v.front()};
            break;
          case Arg::inputs:
            for (const auto& s : v) cfg.inputs[flag->key].emplace_back(s);
            break;
          case Arg::number:
            cfg.parameters[flag->key] = parse_number(v.front(), flag->flag);
            break;
          case Arg::text:
            cfg.parameters[flag->key] = v.front();
            break;
          case Arg::pair: {
            const auto parts = split(v.front(), ',');
            if (parts.size() != 2) throw UsageError(std::string(flag->flag) + " expects a,b");
            cfg.parameters[flag->key] = {parse_number(parts[0], flag->flag), parse_number(parts[1], flag->flag)};
            break;
          }
          case Arg::ranges: {
            Json a = Json::array();
            for (const auto& s : v) {
              const auto parts = split(s, ':');
              if (parts.size() != 2) throw UsageError(std::string(flag->flag) + " expects a:b");
              a.push_back({parse_number(parts[0], flag->flag), parse_number(parts[1], flag->flag)});
            }
            cfg.parameters[flag->key] = a;
            break;
          }
        }
      }
    }
    if (out_opt->count() > 0) cfg.output_dir = out_dir;
    if (plot_opt->count() > 0) cfg.emit_plot_data = plot;
    if (cfg.command.empty() ||
        std::find(commands().begin(), commands().end(), cfg.command) == commands().end()) {
      throw UsageError("unknown command '" + cfg.command + "'");
    }
    return run(cfg, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace ccphot::cli
