#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ensplan/geo.hpp"

namespace ensplan {

/// Coordinate axes of a 4-D weather grid. Latitude, longitude and time are
/// ascending; the level axis holds pressures in hPa and may run in either
/// direction (descending pressure means ascending altitude).
struct GridAxes {
  std::vector<double> lat;    // degrees
  std::vector<double> lon;    // degrees
  std::vector<double> level;  // hPa
  std::vector<double> time;   // hours from issuance

  std::size_t size() const { return lat.size() * lon.size() * level.size() * time.size(); }
  friend bool operator==(const GridAxes&, const GridAxes&) = default;
};

struct WindTemp {
  double u = 0.0;            // m/s, eastward
  double v = 0.0;            // m/s, northward
  double temperature = 0.0;  // K
};

/// Immutable gridded wind and temperature. Arrays are laid out lat-major,
/// then lon, level, time.
class WeatherGrid {
 public:
  WeatherGrid(GridAxes axes, std::vector<double> u, std::vector<double> v,
              std::vector<double> temperature);

  const GridAxes& axes() const noexcept { return axes_; }
  std::span<const double> u() const noexcept { return u_; }
  std::span<const double> v() const noexcept { return v_; }
  std::span<const double> temperature() const noexcept { return t_; }

  std::size_t index(std::size_t ilat, std::size_t ilon, std::size_t ilev, std::size_t itime) const {
    return ((ilat * axes_.lon.size() + ilon) * axes_.level.size() + ilev) * axes_.time.size() + itime;
  }

  friend bool operator==(const WeatherGrid&, const WeatherGrid&) = default;

 private:
  GridAxes axes_;
  std::vector<double> u_, v_, t_;
};

/// Throws InvalidSpec when axes break monotonicity or the level minimum.
void validate_axes(const GridAxes& axes);

/// Quadrilinear interpolation. Exact at grid nodes. Throws OutOfDomain when
/// any coordinate is outside its axis; nothing is clamped.
WindTemp sample_at(const WeatherGrid& grid, double lat, double lon, double pressure_hpa,
                   double t_hours);

/// Control member plus perturbed members. The control is not counted in
/// `members`.
struct EnsembleForecast {
  WeatherGrid control;
  std::vector<WeatherGrid> members;
  std::string issuance_time;

  std::size_t n_members() const noexcept { return members.size(); }
};

/// Parameters of the synthetic weather world: a zonal jet (Gaussian in
/// latitude and pressure, optionally meandering) plus smooth Gaussian noise.
struct SyntheticWeatherSpec {
  double jet_peak = 55.0;               // m/s at the core
  double jet_center_lat = 46.0;         // degrees
  double jet_width_deg = 4.0;           // Gaussian sigma in latitude
  double jet_core_hpa = 250.0;          // pressure of the core
  double jet_depth_hpa = 120.0;         // Gaussian sigma in pressure
  double meander_amplitude_deg = 3.0;   // north-south excursion of the core
  double meander_wavelength_deg = 50.0; // longitude wavelength
  double meander_phase_speed = 1.0;     // degrees of longitude per hour
  double background_u = 5.0;            // uniform westerly, m/s
  double perturbation_sigma = 3.0;      // member noise std, m/s
  double jet_shift_sigma_deg = 0.75;    // std of each member's core latitude shift
  double correlation_length_deg = 10.0;
  double correlation_time_h = 12.0;
  double correlation_levels = 2.0;      // noise correlation length in level steps
  double nowcast_sigma = 3.0;           // truth noise std, m/s
  double nowcast_jet_shift_sigma_deg = 0.75;
  // The control run carries its own error, statistically like a member's.
  // Zero for both makes the control the unperturbed base field.
  double control_sigma = 3.0;
  double control_jet_shift_sigma_deg = 0.75;
  std::size_t n_members = 20;
  std::uint64_t seed = 1;
  std::string issuance_time = "2020-01-01T00:00:00Z";

  void validate() const;
};

struct EnsembleWithTruth {
  EnsembleForecast ensemble;
  WeatherGrid nowcast;
};

/// Deterministic for a given spec and axes.
EnsembleWithTruth generate_ensemble(const SyntheticWeatherSpec& spec, const GridAxes& axes);

/// The unperturbed field every member, the control and the nowcast perturb.
WeatherGrid base_field(const SyntheticWeatherSpec& spec, const GridAxes& axes);

/// ISA temperature at a pressure level, K.
double isa_temperature(double pressure_hpa);

/// Regular axes covering a lat/lon box, snapped outward to `step_deg`.
GridAxes make_axes(double lat_min, double lat_max, double lon_min, double lon_max, double step_deg,
                   std::vector<double> levels_hpa, double time_end_h, double time_step_h = 6.0);

/// Ten isobaric levels, near-surface to lower stratosphere.
std::vector<double> default_levels_hpa();

// WGRD1 binary container.
void save_grid(const WeatherGrid& grid, const std::filesystem::path& path);
WeatherGrid load_grid(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_grid(const WeatherGrid& grid);
WeatherGrid decode_grid(std::span<const std::uint8_t> bytes);

/// JSON sidecar next to a grid file. member_index is absent for the control
/// and the nowcast.
struct GridManifest {
  std::string issuance_time;
  std::string role;  // "control", "member", "nowcast"
  std::optional<std::size_t> member_index;
};

void save_grid_manifest(const GridManifest& m, const std::filesystem::path& path);
GridManifest load_grid_manifest(const std::filesystem::path& path);

}  // namespace ensplan
