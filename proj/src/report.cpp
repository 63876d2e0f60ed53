#include "ccphot/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ccphot/errors.hpp"

namespace ccphot::report {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read input file: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes));
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json manifest(const std::string& command, const Json& config, std::span<const InputRef> inputs) {
  Json m;
  m["command"] = command;
  m["tool_version"] = kToolVersion;
  m["config_hash"] = hex64(fnv1a(config.dump()));
  m["config"] = config;
  Json in = Json::array();
  for (const auto& r : inputs) {
    in.push_back({{"role", r.role}, {"path", r.path.generic_string()}, {"fnv1a", hash_file(r.path)}});
  }
  m["inputs"] = in;
  return m;
}

namespace {

Json param(double value, double sigma3) { return {{"value", value}, {"sigma3", sigma3}}; }

Json check(const std::string& name, bool passed, const std::string& detail = {}) {
  Json c = {{"name", name}, {"passed", passed}};
  if (!detail.empty()) c["detail"] = detail;
  return c;
}

Json strings(const std::vector<std::string>& v) {
  Json a = Json::array();
  for (const auto& s : v) a.push_back(s);
  return a;
}

}  // namespace

Json decay_report(const decay::DecayFitResult& fit) {
  Json j;
  j["kind"] = "decay-fit";
  j["model"] = decay::to_string(fit.model_kind);
  Json p;
  p["background"] = param(fit.background.mean, 3.0 * fit.background.std_error);
  for (std::size_t i = 0; i < fit.components.size(); ++i) {
    const auto& c = fit.components[i];
    const std::string n = std::to_string(i + 1);
    p["A" + n] = param(c.amplitude, c.amplitude_sigma3);
    p["tau" + n + "_ns"] = param(c.tau_ns, c.tau_sigma3);
  }
  j["parameters"] = p;
  j["fit"] = {{"chi2", fit.chi2},
              {"reduced_chi2", fit.reduced_chi2},
              {"n_points", fit.n_points},
              {"aic_single", fit.aic_single},
              {"window_ns", {fit.window.t_start_ns, fit.window.t_end_ns}},
              {"converged", fit.converged}};
  if (fit.aic_double) j["fit"]["aic_double"] = *fit.aic_double;
  j["metadata"] = {{"temperature_K", fit.temperature_K}, {"band_center_nm", fit.band_center_nm}};
  bool ordered = true;
  for (std::size_t i = 1; i < fit.components.size(); ++i) {
    ordered = ordered && fit.components[i - 1].tau_ns >= fit.components[i].tau_ns;
  }
  j["invariants"] = {check("components ordered by lifetime", ordered), check("converged", fit.converged)};
  j["warnings"] = strings(fit.warnings);
  return j;
}

Json thermal_report(const decay::ThermalModel& model, std::span<const decay::ThermalPoint> points) {
  Json j;
  j["kind"] = "thermal-fit";
  j["parameters"] = {{"tau_ns", param(model.tau_ns, model.tau_sigma3)},
                     {"tau_p_ns", param(model.tau_p_ns, model.tau_p_sigma3)},
                     {"E_p_meV", param(model.e_p_meV, model.e_p_sigma3)}};
  j["fit"] = {{"reduced_chi2", model.reduced_chi2}, {"n_points", points.size()}, {"converged", model.converged}};
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (double t = 1.0; t <= 400.0; t += 1.0) {
    const double v = model.lifetime(t);
    monotone = monotone && v <= prev;
    prev = v;
  }
  j["invariants"] = {check("lifetime non-increasing in temperature", monotone),
                     check("low-temperature limit equals tau", std::abs(model.lifetime(1e-3) - model.tau_ns) <=
                                                                  1e-9 * model.tau_ns),
                     check("converged", model.converged)};
  return j;
}

Json zpl_report(const spectrum::ZplSet& zpls) {
  Json j;
  j["kind"] = "zpl";
  Json lines = Json::array();
  for (const auto& l : zpls.lines) {
    lines.push_back({{"label", l.label},
                     {"center_nm", param(l.center_nm, l.center_sigma3)},
                     {"fwhm_nm", l.fwhm_nm},
                     {"fwhm_is_upper_bound", l.fwhm_upper_bound},
                     {"area", param(l.area, 3.0 * l.area_sigma)},
                     {"energy_eV", wavelength_to_energy(l.center_nm).eV()}});
  }
  j["lines"] = lines;
  if (zpls.doublet_splitting_meV) {
    j["doublet_splitting_meV"] = *zpls.doublet_splitting_meV;
    j["invariants"] = {check("doublet splitting positive", *zpls.doublet_splitting_meV > 0.0),
                       check("splitting within 0.3 meV of 1.47 meV", zpls.splitting_consistent)};
  } else {
    j["invariants"] = Json::array();
  }
  j["warnings"] = strings(zpls.warnings);
  return j;
}

Json psb_report(const spectrum::PsbFit& fit, const spectrum::DwPartition& partition, double total_area) {
  Json j;
  j["kind"] = "psb-fit";
  j["parameters"] = {{"I0", param(fit.alpha.i0, fit.i0_sigma3)},
                     {"sigma_meV", param(fit.alpha.sigma_meV, fit.sigma_sigma3)},
                     {"delta0_meV", param(fit.alpha.delta0_meV, fit.delta0_sigma3)},
                     {"j_max", fit.alpha.j_max}};
  if (fit.alpha.doublet) {
    j["parameters"]["doublet"] = {{"splitting_meV", fit.alpha.doublet->splitting_meV},
                                  {"ratio", fit.alpha.doublet->ratio}};
  }
  j["fit"] = {{"reduced_chi2", fit.reduced_chi2}, {"reference_eV", fit.reference_eV}};
  j["areas"] = {{"alpha_zpl", fit.alpha_zpl_area},
                {"alpha_psb", fit.alpha_psb_area},
                {"beta_zpl", fit.beta_zpl_area},
                {"beta_psb", fit.beta_psb_area},
                {"total", total_area}};
  j["dw_fit"] = {{"alpha", fit.dw_alpha}, {"beta", fit.dw_beta}};
  Json p = {{"dw_mean", partition.dw_mean},
            {"dw_alpha_low", partition.dw_alpha_low},
            {"dw_alpha_high", partition.dw_alpha_high},
            {"dw_beta_low", partition.dw_beta_low},
            {"alpha_only_psb_area", partition.alpha_only_psb_area},
            {"ambiguous_psb_area", partition.ambiguous_psb_area},
            {"truncation_corrected", partition.truncation_corrected},
            {"truncation_factor", partition.truncation_factor}};
  if (partition.dw_alpha_refined) p["dw_alpha_refined"] = *partition.dw_alpha_refined;
  if (partition.dw_beta_refined) p["dw_beta_refined"] = *partition.dw_beta_refined;
  j["partition"] = p;
  const double alpha_fraction = total_area > 0.0 ? (fit.alpha_zpl_area + fit.alpha_psb_area) / total_area : 0.0;
  j["invariants"] = {check("partition bounds ordered", partition.ordered()),
                     check("alpha ZPL plus sideband within total area", alpha_fraction <= 1.0 + 1e-6,
                           "fraction " + format_double(alpha_fraction))};
  j["warnings"] = strings(fit.warnings);
  return j;
}

Json budget_report(const photophysics::Budget& b) {
  Json j;
  j["kind"] = "budget";
  if (b.site) j["site"] = to_string(b.site->site);
  Json p = {{"S_th", b.s_th},
            {"dw_th", b.dw_th},
            {"dw_exp", b.dw_exp},
            {"tau_rad_ns", b.tau_rad_ns},
            {"tau_tot_ns", b.tau_tot_ns}};
  if (b.tau_nr_ns) {
    p["tau_NR_ns"] = *b.tau_nr_ns;
  } else {
    p["tau_NR_ns"] = "absent";
  }
  p["eta_rad"] = b.eta_rad;
  p["eta_tot"] = b.eta_tot;
  j["parameters"] = p;
  bool identity = true;
  if (b.tau_nr_ns) {
    const double rebuilt = 1.0 / (1.0 / b.tau_rad_ns + 1.0 / *b.tau_nr_ns);
    identity = std::abs(rebuilt - b.tau_tot_ns) <= 1e-9 * b.tau_tot_ns;
  }
  j["invariants"] = {check("1/tau_tot = 1/tau_rad + 1/tau_NR", identity),
                     check("eta_tot <= eta_rad <= 1", b.eta_tot <= b.eta_rad && b.eta_rad <= 1.0)};
  j["notes"] = strings(b.notes);
  return j;
}

Json cavity_report(const photophysics::CavityParams& p, const photophysics::Cooperativity& c,
                   std::span<const photophysics::SweepPoint> sweep) {
  Json j;
  j["kind"] = "cavity";
  j["inputs"] = {{"lambda_nm", p.wavelength_nm}, {"finesse", p.finesse},   {"roc_mm", p.roc_mm},
                 {"lvac_um", p.l_vac_um},        {"lsic_um", p.l_sic_um},  {"n_sic", p.n_sic},
                 {"eta_tot", p.eta_tot},         {"extraction", p.extraction}};
  j["inputs"]["wc_um"] = p.w_c_um ? Json(*p.w_c_um) : Json("derived");
  j["parameters"] = {{"w_c_um", c.w_c_um},
                     {"sigma_E_m2", c.sections.sigma_e_m2},
                     {"sigma_C_m2", c.sections.sigma_c_m2},
                     {"f_L", c.f_l},
                     {"C", c.c},
                     {"eta_cav", c.eta_cav},
                     {"eta_out", c.eta_out}};
  bool monotone = true;
  for (std::size_t i = 1; i < sweep.size(); ++i) monotone = monotone && sweep[i].eta_cav > sweep[i - 1].eta_cav;
  j["invariants"] = {check("eta_cav (2C + 1) = 2C", std::abs(c.eta_cav * (2.0 * c.c + 1.0) - 2.0 * c.c) <=
                                                       1e-12 * std::max(1.0, 2.0 * c.c)),
                     check("f_L in (0, 1]", c.f_l > 0.0 && c.f_l <= 1.0)};
  if (!sweep.empty()) j["invariants"].push_back(check("eta_cav increasing over the sweep", monotone));
  j["notes"] = {"n_SiC default 2.56 and the plano-concave waist are modelling assumptions",
                "eta_out uses the extraction fraction as an assumption"};
  return j;
}

// ---------------------------------------------------------------------------

namespace {

double number(const Json& p, const char* key) {
  if (!p.contains(key) || !p[key].is_number()) {
    throw AggregationError(std::string("budget report lacks numeric ") + key);
  }
  return p[key].get<double>();
}

bool same_row(const BundleRow& a, const BundleRow& b) {
  auto eq = [](double x, double y) { return std::abs(x - y) <= 1e-12 * std::max(std::abs(x), std::abs(y)); };
  return eq(a.s_th, b.s_th) && eq(a.dw_exp, b.dw_exp) && eq(a.tau_rad_ns, b.tau_rad_ns) &&
         eq(a.tau_tot_ns, b.tau_tot_ns);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<BundleRow> bundle_rows(std::span<const Json> reports) {
  if (reports.empty()) throw AggregationError("no reports to bundle");
  std::vector<BundleRow> rows;
  for (const auto& r : reports) {
    if (!r.is_object() || r.value("kind", "") != "budget") continue;
    if (!r.contains("site") || !r["site"].is_string()) throw AggregationError("budget report without site label");
    BundleRow row;
    row.site = r["site"].get<std::string>();
    if (row.site != "k" && row.site != "h") throw AggregationError("unknown site label '" + row.site + "'");
    const auto& p = r.at("parameters");
    row.s_th = number(p, "S_th");
    row.dw_th = number(p, "dw_th");
    row.dw_exp = number(p, "dw_exp");
    row.tau_rad_ns = number(p, "tau_rad_ns");
    row.tau_tot_ns = number(p, "tau_tot_ns");
    if (p.contains("tau_NR_ns") && p["tau_NR_ns"].is_number()) row.tau_nr_ns = p["tau_NR_ns"].get<double>();
    row.eta_rad = number(p, "eta_rad");
    row.eta_tot = number(p, "eta_tot");
    if (r.contains("notes")) {
      for (const auto& n : r["notes"]) row.notes.push_back(n.get<std::string>());
    }
    bool merged = false;
    for (const auto& existing : rows) {
      if (existing.site != row.site) continue;
      if (!same_row(existing, row)) throw AggregationError("conflicting budgets for site " + row.site);
      merged = true;
    }
    if (!merged) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw AggregationError("no budget reports among the inputs");
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.site == "k" && b.site == "h"; });
  return rows;
}

Json bundle_json(std::span<const BundleRow> rows) {
  Json j;
  j["kind"] = "summary";
  j["columns"] = {"site", "S", "DW_th", "DW_exp", "tau_rad_ns", "tau_tot_ns", "tau_NR_ns", "eta_rad", "eta_tot"};
  Json t = Json::array();
  Json notes = Json::array();
  for (const auto& r : rows) {
    t.push_back({r.site, r.s_th, r.dw_th, r.dw_exp, r.tau_rad_ns, r.tau_tot_ns,
                 r.tau_nr_ns ? Json(*r.tau_nr_ns) : Json("absent"), r.eta_rad, r.eta_tot});
    for (const auto& n : r.notes) notes.push_back(n);
  }
  j["rows"] = t;
  j["notes"] = notes;
  return j;
}

std::string bundle_markdown(std::span<const BundleRow> rows) {
  std::ostringstream s;
  s << "| Site | S | DW (th.) | DW (exp.) | tau_rad (ns) | tau_tot (ns) | tau_NR (ns) | eta_rad | eta_tot |\n";
  s << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    s << "| " << r.site << " | " << fixed(r.s_th, 2) << " | " << fixed(r.dw_th, 2) << " | " << fixed(r.dw_exp, 2)
      << " | " << fixed(r.tau_rad_ns, 0) << " | " << fixed(r.tau_tot_ns, 1) << " | "
      << (r.tau_nr_ns ? fixed(*r.tau_nr_ns, 1) : std::string("absent")) << " | " << fixed(100 * r.eta_rad, 1)
      << "% | " << fixed(100 * r.eta_tot, 1) << "% |\n";
  }
  bool first = true;
  for (const auto& r : rows) {
    for (const auto& n : r.notes) {
      if (first) s << "\n";
      first = false;
      s << "- " << n << "\n";
    }
  }
  return s.str();
}

}  // namespace ccphot::report
