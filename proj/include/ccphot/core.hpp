#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ccphot {

/// hc in eV·nm; all wavelengths are vacuum values.
inline constexpr double kHcEvNm = 1239.84198;

// ---------------------------------------------------------------------------
// Energies

enum class EnergyUnit { eV, meV };

struct EnergyValue {
  double value = 0.0;
  EnergyUnit unit = EnergyUnit::eV;

  double eV() const { return unit == EnergyUnit::eV ? value : value * 1e-3; }
  double meV() const { return unit == EnergyUnit::meV ? value : value * 1e3; }
};

/// E[eV] = hc / λ[nm]. Throws DomainError for λ <= 0.
EnergyValue wavelength_to_energy(double wavelength_nm);
/// Inverse of wavelength_to_energy. Throws DomainError for E <= 0.
double energy_to_wavelength(EnergyValue energy);

// ---------------------------------------------------------------------------
// Metadata

/// Free-form key/value metadata as read from CLI flags or a sidecar file.
/// Recognised keys: temperature_K, power_mW, band_center_nm, band_width_nm,
/// pulse_time_ns, polarization_deg, label.
using Metadata = std::map<std::string, std::string>;

const std::vector<std::string>& metadata_keys();

/// Reads a JSON object sidecar. Unknown keys raise ValidationError.
Metadata load_metadata(const std::filesystem::path& path);

/// Returns the sidecar path used for `data_file` (data_file + ".meta.json").
std::filesystem::path sidecar_path(const std::filesystem::path& data_file);

std::optional<double> metadata_number(const Metadata& meta, const std::string& key);

// ---------------------------------------------------------------------------
// Spectrum

class Spectrum {
 public:
  Spectrum(std::vector<double> wavelength_nm, std::vector<double> intensity,
           double temperature_K, double excitation_power_mW = 0.0,
           std::optional<double> polarization_deg = std::nullopt, std::string label = {});

  std::span<const double> wavelength_nm() const { return wavelength_nm_; }
  std::span<const double> intensity() const { return intensity_; }
  std::size_t size() const { return wavelength_nm_.size(); }
  double temperature_K() const { return temperature_K_; }
  double excitation_power_mW() const { return excitation_power_mW_; }
  std::optional<double> polarization_deg() const { return polarization_deg_; }
  const std::string& label() const { return label_; }

  /// Trapezoidal area over the full wavelength range (counts·nm).
  double area() const;

 private:
  std::vector<double> wavelength_nm_;
  std::vector<double> intensity_;
  double temperature_K_;
  double excitation_power_mW_;
  std::optional<double> polarization_deg_;
  std::string label_;
};

// ---------------------------------------------------------------------------
// DecayTrace

class DecayTrace {
 public:
  DecayTrace(std::vector<double> time_ns, std::vector<double> counts, double pulse_time_ns,
             double temperature_K = 4.0, double band_center_nm = 0.0, double band_width_nm = 0.0);

  std::span<const double> time_ns() const { return time_ns_; }
  std::span<const double> counts() const { return counts_; }
  std::size_t size() const { return time_ns_.size(); }
  double bin_width_ns() const { return bin_width_; }
  double pulse_time_ns() const { return pulse_time_; }
  double temperature_K() const { return temperature_K_; }
  double band_center_nm() const { return band_center_; }
  double band_width_nm() const { return band_width_; }

  /// Number of bins strictly before the excitation pulse.
  std::size_t pre_pulse_bins() const;

 private:
  std::vector<double> time_ns_;
  std::vector<double> counts_;
  double bin_width_;
  double pulse_time_;
  double temperature_K_;
  double band_center_;
  double band_width_;
};

// ---------------------------------------------------------------------------
// Site assignment (descriptive metadata only)

enum class Site { k_cubic, h_hexagonal };

std::string to_string(Site site);

struct SiteAssignment {
  Site site = Site::k_cubic;
  std::vector<std::pair<std::string, double>> zpl_lines;  // (label, nm)
  std::string notes;

  void validate() const;
};

/// α lines on the quasi-cubic site, β on the hexagonal site.
SiteAssignment alpha_site_assignment();
SiteAssignment beta_site_assignment();

// ---------------------------------------------------------------------------
// Two-column text IO

/// Parses two-column numeric text with comma, tab or whitespace separators
/// and optional `#` comment lines. Rows are returned in file order.
std::vector<std::pair<double, double>> read_two_column(const std::filesystem::path& path);
std::vector<std::pair<double, double>> parse_two_column(const std::string& text);

std::vector<std::vector<double>> read_columns(const std::filesystem::path& path,
                                              std::size_t n_columns);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

void write_two_column(const std::filesystem::path& path, std::span<const double> x,
                      std::span<const double> y, const std::string& header = {});

Spectrum load_spectrum(const std::filesystem::path& path, const Metadata& meta);
DecayTrace load_trace(const std::filesystem::path& path, const Metadata& meta);

void save_spectrum(const std::filesystem::path& path, const Spectrum& spectrum);
void save_trace(const std::filesystem::path& path, const DecayTrace& trace);

/// Trapezoid rule over arbitrary (sorted) abscissae.
double trapezoid(std::span<const double> x, std::span<const double> y);
/// Per-sample trapezoid weights so that Σ w_i y_i equals trapezoid(x, y).
std::vector<double> trapezoid_weights(std::span<const double> x);

}  // namespace ccphot
