#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ccphot/decay.hpp"
#include "ccphot/photophysics.hpp"
#include "ccphot/spectrum.hpp"

namespace ccphot::report {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);
/// FNV-1a of the file contents. Throws ValidationError naming a missing file.
std::string hash_file(const std::filesystem::path& path);

struct InputRef {
  std::string role;
  std::filesystem::path path;
};

Json manifest(const std::string& command, const Json& config, std::span<const InputRef> inputs);

Json decay_report(const decay::DecayFitResult& fit);
Json thermal_report(const decay::ThermalModel& model, std::span<const decay::ThermalPoint> points);
Json zpl_report(const spectrum::ZplSet& zpls);
Json psb_report(const spectrum::PsbFit& fit, const spectrum::DwPartition& partition, double total_area);
Json budget_report(const photophysics::Budget& b);
Json cavity_report(const photophysics::CavityParams& p, const photophysics::Cooperativity& c,
                   std::span<const photophysics::SweepPoint> sweep);

/// Stable serialisation used for every written report.
std::string dump(const Json& j);

struct BundleRow {
  std::string site;
  double s_th = 0.0;
  double dw_th = 0.0;
  double dw_exp = 0.0;
  double tau_rad_ns = 0.0;
  double tau_tot_ns = 0.0;
  std::optional<double> tau_nr_ns;
  double eta_rad = 0.0;
  double eta_tot = 0.0;
  std::vector<std::string> notes;
};

/// Collects budget reports into summary rows ordered k, h. Non-budget
/// reports are ignored. Throws AggregationError for an empty input, a budget
/// without site label, or two different budgets for one site.
std::vector<BundleRow> bundle_rows(std::span<const Json> reports);

Json bundle_json(std::span<const BundleRow> rows);
std::string bundle_markdown(std::span<const BundleRow> rows);

}  // namespace ccphot::report
