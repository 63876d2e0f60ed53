#include "ccphot/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ccphot/errors.hpp"

namespace ccphot {

EnergyValue wavelength_to_energy(double wavelength_nm) {
  if (!(wavelength_nm > 0.0) || !std::isfinite(wavelength_nm)) {
    throw DomainError("wavelength must be positive and finite, got " +
                      format_double(wavelength_nm));
  }
  return {kHcEvNm / wavelength_nm, EnergyUnit::eV};
}

double energy_to_wavelength(EnergyValue energy) {
  const double ev = energy.eV();
  if (!(ev > 0.0) || !std::isfinite(ev)) {
    throw DomainError("energy must be positive and finite, got " + format_double(ev) + " eV");
  }
  return kHcEvNm / ev;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& metadata_keys() {
  static const std::vector<std::string> keys = {
      "temperature_K", "power_mW",      "band_center_nm",   "band_width_nm",
      "pulse_time_ns", "polarization_deg", "label"};
  return keys;
}

Metadata load_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open metadata file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("metadata file " + path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ValidationError("metadata file " + path.string() + " is not an object");
  const auto& keys = metadata_keys();
  Metadata meta;
  for (const auto& [key, value] : doc.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ValidationError("metadata file " + path.string() + ": unknown key '" + key + "'");
    }
    if (value.is_number()) {
      meta[key] = format_double(value.get<double>());
    } else if (value.is_string()) {
      meta[key] = value.get<std::string>();
    } else {
      throw ValidationError("metadata key '" + key + "' must be a number or string");
    }
  }
  return meta;
}

std::filesystem::path sidecar_path(const std::filesystem::path& data_file) {
  return std::filesystem::path(data_file.string() + ".meta.json");
}

std::optional<double> metadata_number(const Metadata& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) return std::nullopt;
  const std::string& s = it->second;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("metadata key '" + key + "' is not numeric: '" + s + "'");
  }
  return v;
}

// ---------------------------------------------------------------------------

Spectrum::Spectrum(std::vector<double> wavelength_nm, std::vector<double> intensity,
                   double temperature_K, double excitation_power_mW,
                   std::optional<double> polarization_deg, std::string label)
    : wavelength_nm_(std::move(wavelength_nm)),
      intensity_(std::move(intensity)),
      temperature_K_(temperature_K),
      excitation_power_mW_(excitation_power_mW),
      polarization_deg_(polarization_deg),
      label_(std::move(label)) {
  if (wavelength_nm_.size() != intensity_.size()) {
    throw ValidationError("spectrum: wavelength and intensity lengths differ");
  }
  if (wavelength_nm_.empty()) throw ValidationError("spectrum: no points");
  if (!(temperature_K_ > 0.0) || !std::isfinite(temperature_K_)) {
    throw ValidationError("spectrum: temperature must be > 0 K");
  }
  for (std::size_t i = 0; i < wavelength_nm_.size(); ++i) {
    if (!std::isfinite(wavelength_nm_[i]) || wavelength_nm_[i] <= 0.0) {
      throw ValidationError("spectrum: invalid wavelength at index " + std::to_string(i));
    }
    if (!std::isfinite(intensity_[i]) || intensity_[i] < 0.0) {
      throw ValidationError("spectrum: intensity must be finite and >= 0 at index " +
                            std::to_string(i));
    }
    if (i > 0 && !(wavelength_nm_[i] > wavelength_nm_[i - 1])) {
      throw ValidationError("spectrum: wavelengths not strictly increasing at index " +
                            std::to_string(i));
    }
  }
}

double Spectrum::area() const { return trapezoid(wavelength_nm_, intensity_); }

// ---------------------------------------------------------------------------

DecayTrace::DecayTrace(std::vector<double> time_ns, std::vector<double> counts,
                       double pulse_time_ns, double temperature_K, double band_center_nm,
                       double band_width_nm)
    : time_ns_(std::move(time_ns)),
      counts_(std::move(counts)),
      bin_width_(0.0),
      pulse_time_(pulse_time_ns),
      temperature_K_(temperature_K),
      band_center_(band_center_nm),
      band_width_(band_width_nm) {
  if (time_ns_.size() != counts_.size()) {
    throw ValidationError("trace: time and count lengths differ");
  }
  if (time_ns_.size() < 2) throw ValidationError("trace: need at least two bins");
  if (!(temperature_K_ > 0.0)) throw ValidationError("trace: temperature must be > 0 K");
  if (!std::isfinite(pulse_time_)) throw ValidationError("trace: pulse time must be finite");
  bin_width_ = time_ns_[1] - time_ns_[0];
  if (!(bin_width_ > 0.0)) throw ValidationError("trace: times not strictly increasing");
  for (std::size_t i = 0; i < time_ns_.size(); ++i) {
    if (!std::isfinite(time_ns_[i])) {
      throw ValidationError("trace: non-finite time at index " + std::to_string(i));
    }
    if (i > 0) {
      const double w = time_ns_[i] - time_ns_[i - 1];
      if (std::abs(w - bin_width_) > 1e-6 * bin_width_) {
        throw ValidationError("trace: non-uniform bin width at index " + std::to_string(i));
      }
    }
    if (!std::isfinite(counts_[i]) || counts_[i] < 0.0) {
      throw ValidationError("trace: counts must be finite and >= 0 at index " +
                            std::to_string(i));
    }
  }
}

std::size_t DecayTrace::pre_pulse_bins() const {
  return static_cast<std::size_t>(
      std::lower_bound(time_ns_.begin(), time_ns_.end(), pulse_time_) - time_ns_.begin());
}

// ---------------------------------------------------------------------------

std::string to_string(Site site) { return site == Site::k_cubic ? "k" : "h"; }

void SiteAssignment::validate() const {
  std::set<std::string> seen;
  for (const auto& [label, nm] : zpl_lines) {
    if (!seen.insert(label).second) throw ValidationError("duplicate ZPL label '" + label + "'");
    if (nm < 1200.0 || nm > 1400.0) {
      throw ValidationError("ZPL '" + label + "' outside 1200-1400 nm: " + format_double(nm));
    }
  }
}

SiteAssignment alpha_site_assignment() {
  return {Site::k_cubic,
          {{"alpha3", 1278.6}, {"alpha2", 1280.2}},
          "alpha doublet; excited state 2E; a1* above e* (stronger c-axis confinement)"};
}

SiteAssignment beta_site_assignment() {
  return {Site::h_hexagonal,
          {{"beta", 1334.0}},
          "beta line; excited state 2A1; a1* below e*"};
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  const bool comma = line.find(',') != std::string_view::npos;
  auto is_sep = [comma](char c) {
    return comma ? c == ',' : (c == ' ' || c == '\t' || c == '\r');
  };
  std::size_t i = 0;
  while (i <= line.size()) {
    if (!comma) {
      while (i < line.size() && is_sep(line[i])) ++i;
      if (i >= line.size()) break;
    }
    std::size_t j = i;
    while (j < line.size() && !is_sep(line[j])) ++j;
    fields.push_back(line.substr(i, j - i));
    if (j >= line.size()) break;
    i = j + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

double parse_number(std::string_view field, std::size_t line_no) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("not a number: '" + std::string(field) + "'", line_no);
  }
  if (!std::isfinite(v)) throw ParseError("non-finite value", line_no);
  return v;
}

std::vector<std::vector<double>> parse_columns(const std::string& text, std::size_t n_columns) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_fields(line);
    if (fields.size() != n_columns) {
      throw ParseError("expected " + std::to_string(n_columns) + " columns, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    std::vector<double> row;
    row.reserve(n_columns);
    for (auto f : fields) row.push_back(parse_number(f, line_no));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<std::pair<double, double>> parse_two_column(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  for (auto& row : parse_columns(text, 2)) out.emplace_back(row[0], row[1]);
  return out;
}

std::vector<std::pair<double, double>> read_two_column(const std::filesystem::path& path) {
  return parse_two_column(slurp(path));
}

std::vector<std::vector<double>> read_columns(const std::filesystem::path& path,
                                              std::size_t n_columns) {
  return parse_columns(slurp(path), n_columns);
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_two_column(const std::filesystem::path& path, std::span<const double> x,
                      std::span<const double> y, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  if (!header.empty()) out << "# " << header << '\n';
  for (std::size_t i = 0; i < x.size(); ++i) {
    out << format_double(x[i]) << '\t' << format_double(y[i]) << '\n';
  }
}

Spectrum load_spectrum(const std::filesystem::path& path, const Metadata& meta) {
  auto rows = read_two_column(path);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<double> wl, in;
  wl.reserve(rows.size());
  in.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].first == rows[i - 1].first) {
      throw ValidationError(path.string() + ": duplicate wavelength " +
                            format_double(rows[i].first));
    }
    wl.push_back(rows[i].first);
    in.push_back(rows[i].second);
  }
  std::string label = path.filename().string();
  if (auto it = meta.find("label"); it != meta.end()) label = it->second;
  return Spectrum(std::move(wl), std::move(in), metadata_number(meta, "temperature_K").value_or(4.0),
                  metadata_number(meta, "power_mW").value_or(0.0),
                  metadata_number(meta, "polarization_deg"), std::move(label));
}

DecayTrace load_trace(const std::filesystem::path& path, const Metadata& meta) {
  const auto rows = read_two_column(path);
  std::vector<double> t, c;
  t.reserve(rows.size());
  c.reserve(rows.size());
  for (const auto& [time, count] : rows) {
    t.push_back(time);
    c.push_back(count);
  }
  const double pulse = metadata_number(meta, "pulse_time_ns").value_or(0.0);
  return DecayTrace(std::move(t), std::move(c), pulse,
                    metadata_number(meta, "temperature_K").value_or(4.0),
                    metadata_number(meta, "band_center_nm").value_or(0.0),
                    metadata_number(meta, "band_width_nm").value_or(0.0));
}

void save_spectrum(const std::filesystem::path& path, const Spectrum& spectrum) {
  write_two_column(path, spectrum.wavelength_nm(), spectrum.intensity(), "wavelength_nm\tcounts");
}

void save_trace(const std::filesystem::path& path, const DecayTrace& trace) {
  write_two_column(path, trace.time_ns(), trace.counts(), "time_ns\tcounts");
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

std::vector<double> trapezoid_weights(std::span<const double> x) {
  std::vector<double> w(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double h = 0.5 * (x[i] - x[i - 1]);
    w[i - 1] += h;
    w[i] += h;
  }
  return w;
}

}  // namespace ccphot
