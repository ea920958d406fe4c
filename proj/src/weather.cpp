#include "ensplan/weather.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ensplan/error.hpp"
#include "ensplan/random.hpp"

namespace ensplan {

namespace {

constexpr std::array<char, 4> kMagic{'W', 'G', 'R', 'D'};
constexpr std::uint8_t kVersion = 1;

bool strictly_ascending(const std::vector<double>& a) {
  return std::adjacent_find(a.begin(), a.end(), std::greater_equal<>()) == a.end();
}

bool strictly_descending(const std::vector<double>& a) {
  return std::adjacent_find(a.begin(), a.end(), std::less_equal<>()) == a.end();
}

bool all_finite(const std::vector<double>& a) {
  return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

struct Bracket {
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  double f = 0.0;
};

Bracket bracket(const std::vector<double>& ax, double x, const char* name) {
  const double lo = std::min(ax.front(), ax.back());
  const double hi = std::max(ax.front(), ax.back());
  if (!(x >= lo && x <= hi)) throw OutOfDomain(name, x, lo, hi);
  const std::size_t n = ax.size();
  if (n == 1) return {0, 0, 0.0};
  std::size_t idx;
  if (ax[1] > ax[0]) {
    idx = static_cast<std::size_t>(std::upper_bound(ax.begin(), ax.end(), x) - ax.begin());
  } else {
    idx = static_cast<std::size_t>(std::upper_bound(ax.begin(), ax.end(), x, std::greater<>()) -
                                   ax.begin());
  }
  const std::size_t i = std::clamp<std::size_t>(idx == 0 ? 0 : idx - 1, 0, n - 2);
  return {i, i + 1, (x - ax[i]) / (ax[i + 1] - ax[i])};
}

// ---------------------------------------------------------------------------
// Smooth noise: white N(0,1) passed through a separable Gaussian kernel, one
// axis at a time. Each output row of the kernel is scaled to unit L2 norm so
// the field keeps unit variance at every point, edges included.

struct Band {
  std::vector<std::size_t> start;
  std::vector<std::vector<double>> w;
};

Band gaussian_band(const std::vector<double>& coords, double length) {
  Band b;
  const std::size_t n = coords.size();
  b.start.resize(n);
  b.w.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j0 = i, j1 = i;
    while (j0 > 0 && std::abs(coords[j0 - 1] - coords[i]) <= 3.0 * length) --j0;
    while (j1 + 1 < n && std::abs(coords[j1 + 1] - coords[i]) <= 3.0 * length) ++j1;
    double norm2 = 0.0;
    for (std::size_t j = j0; j <= j1; ++j) {
      const double d = (coords[j] - coords[i]) / length;
      const double w = std::exp(-0.5 * d * d);
      b.w[i].push_back(w);
      norm2 += w * w;
    }
    const double s = 1.0 / std::sqrt(norm2);
    for (double& w : b.w[i]) w *= s;
    b.start[i] = j0;
  }
  return b;
}

void smooth_axis(std::vector<double>& x, const std::array<std::size_t, 4>& n, int axis,
                 const Band& band) {
  std::size_t stride = 1;
  for (int k = axis + 1; k < 4; ++k) stride *= n[k];
  std::size_t outer = 1;
  for (int k = 0; k < axis; ++k) outer *= n[k];
  const std::size_t len = n[axis];
  if (len == 1) return;
  std::vector<double> line(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t s = 0; s < stride; ++s) {
      const std::size_t base = o * len * stride + s;
      for (std::size_t i = 0; i < len; ++i) line[i] = x[base + i * stride];
      for (std::size_t i = 0; i < len; ++i) {
        double acc = 0.0;
        const auto& w = band.w[i];
        for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * line[band.start[i] + j];
        x[base + i * stride] = acc;
      }
    }
  }
}

struct NoiseKernel {
  std::array<std::size_t, 4> dims;
  std::array<Band, 4> bands;
};

NoiseKernel make_kernel(const SyntheticWeatherSpec& spec, const GridAxes& axes) {
  std::vector<double> level_index(axes.level.size());
  for (std::size_t i = 0; i < level_index.size(); ++i) level_index[i] = static_cast<double>(i);
  return {{axes.lat.size(), axes.lon.size(), axes.level.size(), axes.time.size()},
          {gaussian_band(axes.lat, spec.correlation_length_deg),
           gaussian_band(axes.lon, spec.correlation_length_deg),
           gaussian_band(level_index, spec.correlation_levels),
           gaussian_band(axes.time, spec.correlation_time_h)}};
}

std::vector<double> smooth_noise(const NoiseKernel& k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(k.dims[0] * k.dims[1] * k.dims[2] * k.dims[3]);
  for (double& v : x) v = normal(rng);
  for (int axis = 0; axis < 4; ++axis) smooth_axis(x, k.dims, axis, k.bands[axis]);
  return x;
}

WeatherGrid jet_field(const SyntheticWeatherSpec& spec, const GridAxes& axes, double shift_deg) {
  const std::size_t n = axes.size();
  std::vector<double> u(n), v(n), t(n);
  const double two_pi = 2.0 * geo::kPi;
  std::size_t idx = 0;
  for (double lat : axes.lat) {
    const double coslat = std::max(std::cos(geo::deg2rad(lat)), 1e-3);
    for (double lon : axes.lon) {
      for (double p : axes.level) {
        const double dp = (p - spec.jet_core_hpa) / spec.jet_depth_hpa;
        const double vertical = std::exp(-0.5 * dp * dp);
        const double temp = isa_temperature(p);
        for (double hour : axes.time) {
          const double phase = two_pi * (lon - spec.meander_phase_speed * hour) / spec.meander_wavelength_deg;
          const double center = spec.jet_center_lat + shift_deg + spec.meander_amplitude_deg * std::sin(phase);
          const double slope = spec.meander_amplitude_deg * two_pi / spec.meander_wavelength_deg * std::cos(phase);
          const double dy = (lat - center) / spec.jet_width_deg;
          const double jet = spec.jet_peak * std::exp(-0.5 * dy * dy) * vertical;
          u[idx] = spec.background_u + jet;
          v[idx] = jet * slope / coslat;
          t[idx] = temp;
          ++idx;
        }
      }
    }
  }
  return WeatherGrid(axes, std::move(u), std::move(v), std::move(t));
}

WeatherGrid perturbed(const SyntheticWeatherSpec& spec, const GridAxes& axes, const NoiseKernel& kernel,
                      std::uint64_t seed, double sigma, double shift_sigma) {
  std::mt19937_64 rng(seed);
  double shift = 0.0;
  if (shift_sigma > 0.0) shift = std::normal_distribution<double>(0.0, shift_sigma)(rng);
  WeatherGrid base = jet_field(spec, axes, shift);
  if (sigma == 0.0) return base;
  auto nu = smooth_noise(kernel, rng);
  auto nv = smooth_noise(kernel, rng);
  std::vector<double> u(base.u().begin(), base.u().end());
  std::vector<double> v(base.v().begin(), base.v().end());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] += sigma * nu[i];
    v[i] += sigma * nv[i];
  }
  return WeatherGrid(axes, std::move(u), std::move(v),
                     std::vector<double>(base.temperature().begin(), base.temperature().end()));
}

// Little-endian byte packing.

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint64_t offset() const { return pos_; }

  std::uint8_t u8(const char* field) {
    need(1, field);
    return b_[pos_++];
  }

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::vector<double> f64_array(std::uint64_t count, const char* field) {
    const std::uint64_t remaining = b_.size() - pos_;
    if (remaining / 8 < count) {
      throw FormatError(pos_, std::string("field '") + field + "' declares " + std::to_string(count) +
                                  " values but only " + std::to_string(remaining) + " bytes remain");
    }
    std::vector<double> out(count);
    for (auto& d : out) {
      std::uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
      d = std::bit_cast<double>(v);
      pos_ += 8;
    }
    return out;
  }

  bool at_end() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* field) {
    if (b_.size() - pos_ < n) throw FormatError(pos_, std::string("truncated in ") + field);
  }

  std::span<const std::uint8_t> b_;
  std::uint64_t pos_ = 0;
};

}  // namespace

OutOfDomain::OutOfDomain(std::string axis, double value, double lo, double hi)
    : Error("coordinate " + std::to_string(value) + " outside " + axis + " axis [" +
            std::to_string(lo) + ", " + std::to_string(hi) + "]"),
      axis_(std::move(axis)) {}

FormatError::FormatError(std::uint64_t offset, std::string reason)
    : Error("format error at byte " + std::to_string(offset) + ": " + reason),
      offset_(offset),
      reason_(std::move(reason)) {}

void validate_axes(const GridAxes& axes) {
  auto check = [](const std::vector<double>& a, const char* name) {
    if (a.empty()) throw InvalidSpec(std::string(name) + " axis is empty");
    if (!all_finite(a)) throw InvalidSpec(std::string(name) + " axis has non-finite values");
  };
  check(axes.lat, "lat");
  check(axes.lon, "lon");
  check(axes.level, "level");
  check(axes.time, "time");
  if (!strictly_ascending(axes.lat)) throw InvalidSpec("lat axis not strictly ascending");
  if (!strictly_ascending(axes.lon)) throw InvalidSpec("lon axis not strictly ascending");
  if (!strictly_ascending(axes.time)) throw InvalidSpec("time axis not strictly ascending");
  if (axes.level.size() < 2) throw InvalidSpec("level axis needs at least 2 entries");
  if (!strictly_ascending(axes.level) && !strictly_descending(axes.level))
    throw InvalidSpec("level axis not strictly monotone");
}

WeatherGrid::WeatherGrid(GridAxes axes, std::vector<double> u, std::vector<double> v,
                         std::vector<double> temperature)
    : axes_(std::move(axes)), u_(std::move(u)), v_(std::move(v)), t_(std::move(temperature)) {
  validate_axes(axes_);
  const std::size_t n = axes_.size();
  if (u_.size() != n || v_.size() != n || t_.size() != n)
    throw InvalidSpec("array extents do not match axis lengths");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(u_[i]) || !std::isfinite(v_[i]) || !std::isfinite(t_[i]))
      throw InvalidSpec("non-finite value at index " + std::to_string(i));
    if (std::abs(u_[i]) >= 200.0 || std::abs(v_[i]) >= 200.0)
      throw InvalidSpec("wind component out of range at index " + std::to_string(i));
    if (t_[i] <= 0.0) throw InvalidSpec("non-positive temperature at index " + std::to_string(i));
  }
}

WindTemp sample_at(const WeatherGrid& grid, double lat, double lon, double pressure_hpa,
                   double t_hours) {
  const auto& ax = grid.axes();
  const std::array<Bracket, 4> b{bracket(ax.lat, lat, "lat"), bracket(ax.lon, lon, "lon"),
                                 bracket(ax.level, pressure_hpa, "level"),
                                 bracket(ax.time, t_hours, "time")};
  WindTemp out{0.0, 0.0, 0.0};
  const auto u = grid.u(), v = grid.v(), t = grid.temperature();
  for (int a = 0; a < 2; ++a) {
    const double wa = a ? b[0].f : 1.0 - b[0].f;
    if (wa == 0.0) continue;
    for (int c = 0; c < 2; ++c) {
      const double wc = c ? b[1].f : 1.0 - b[1].f;
      if (wc == 0.0) continue;
      for (int d = 0; d < 2; ++d) {
        const double wd = d ? b[2].f : 1.0 - b[2].f;
        if (wd == 0.0) continue;
        for (int e = 0; e < 2; ++e) {
          const double we = e ? b[3].f : 1.0 - b[3].f;
          if (we == 0.0) continue;
          const double w = wa * wc * wd * we;
          const std::size_t i = grid.index(a ? b[0].i1 : b[0].i0, c ? b[1].i1 : b[1].i0,
                                           d ? b[2].i1 : b[2].i0, e ? b[3].i1 : b[3].i0);
          out.u += w * u[i];
          out.v += w * v[i];
          out.temperature += w * t[i];
        }
      }
    }
  }
  return out;
}

void SyntheticWeatherSpec::validate() const {
  if (perturbation_sigma < 0 || nowcast_sigma < 0 || jet_shift_sigma_deg < 0 ||
      nowcast_jet_shift_sigma_deg < 0 || control_sigma < 0 || control_jet_shift_sigma_deg < 0)
    throw InvalidSpec("sigmas must be non-negative");
  if (!(correlation_length_deg > 0) || !(correlation_time_h > 0) || !(correlation_levels > 0))
    throw InvalidSpec("correlation lengths must be positive");
  if (!(jet_width_deg > 0) || !(jet_depth_hpa > 0) || !(meander_wavelength_deg > 0))
    throw InvalidSpec("jet widths must be positive");
}

double isa_temperature(double pressure_hpa) {
  const double h = 44330.8 * (1.0 - std::pow(pressure_hpa / 1013.25, 0.190263));
  return std::max(288.15 - 0.0065 * h, 216.65);
}

WeatherGrid base_field(const SyntheticWeatherSpec& spec, const GridAxes& axes) {
  spec.validate();
  validate_axes(axes);
  return jet_field(spec, axes, 0.0);
}

EnsembleWithTruth generate_ensemble(const SyntheticWeatherSpec& spec, const GridAxes& axes) {
  spec.validate();
  validate_axes(axes);
  const NoiseKernel kernel = make_kernel(spec, axes);
  WeatherGrid control = perturbed(spec, axes, kernel, derive_seed(spec.seed, {3}), spec.control_sigma,
                                  spec.control_jet_shift_sigma_deg);
  std::vector<WeatherGrid> members;
  members.reserve(spec.n_members);
  for (std::size_t m = 0; m < spec.n_members; ++m) {
    members.push_back(perturbed(spec, axes, kernel, derive_seed(spec.seed, {1, m}),
                                spec.perturbation_sigma, spec.jet_shift_sigma_deg));
  }
  WeatherGrid nowcast = perturbed(spec, axes, kernel, derive_seed(spec.seed, {2}), spec.nowcast_sigma,
                                  spec.nowcast_jet_shift_sigma_deg);
  return {EnsembleForecast{std::move(control), std::move(members), spec.issuance_time},
          std::move(nowcast)};
}

GridAxes make_axes(double lat_min, double lat_max, double lon_min, double lon_max, double step_deg,
                   std::vector<double> levels_hpa, double time_end_h, double time_step_h) {
  auto span_axis = [](double lo, double hi, double step) {
    const double start = std::floor(lo / step) * step;
    const auto n = static_cast<std::size_t>(std::ceil(hi / step) - std::floor(lo / step)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = start + static_cast<double>(i) * step;
    return out;
  };
  GridAxes axes{span_axis(lat_min, lat_max, step_deg), span_axis(lon_min, lon_max, step_deg),
                std::move(levels_hpa), span_axis(0.0, std::max(time_end_h, time_step_h), time_step_h)};
  validate_axes(axes);
  return axes;
}

std::vector<double> default_levels_hpa() {
  return {1000, 925, 850, 700, 500, 400, 300, 250, 200, 150};
}

std::vector<std::uint8_t> encode_grid(const WeatherGrid& grid) {
  const auto& ax = grid.axes();
  std::vector<std::uint8_t> out;
  out.reserve(5 + 16 + 8 * (ax.lat.size() + ax.lon.size() + ax.level.size() + ax.time.size() + 3 * ax.size()));
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  for (const auto* a : {&ax.lat, &ax.lon, &ax.level, &ax.time}) put_u32(out, static_cast<std::uint32_t>(a->size()));
  for (const auto* a : {&ax.lat, &ax.lon, &ax.level, &ax.time})
    for (double d : *a) put_f64(out, d);
  for (auto arr : {grid.u(), grid.v(), grid.temperature()})
    for (double d : arr) put_f64(out, d);
  return out;
}

WeatherGrid decode_grid(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char c : kMagic) {
    const auto off = r.offset();
    if (r.u8("magic") != static_cast<std::uint8_t>(c)) throw FormatError(off, "bad magic, expected WGRD");
  }
  const auto voff = r.offset();
  const std::uint8_t version = r.u8("version");
  if (version != kVersion) throw FormatError(voff, "unsupported version " + std::to_string(version));
  std::array<std::uint32_t, 4> len{};
  const char* len_names[] = {"lat_len", "lon_len", "level_len", "time_len"};
  for (int i = 0; i < 4; ++i) {
    const auto off = r.offset();
    len[i] = r.u32(len_names[i]);
    if (len[i] == 0) throw FormatError(off, std::string(len_names[i]) + " is zero");
  }
  GridAxes axes;
  axes.lat = r.f64_array(len[0], "lat_axis");
  axes.lon = r.f64_array(len[1], "lon_axis");
  axes.level = r.f64_array(len[2], "level_axis");
  axes.time = r.f64_array(len[3], "time_axis");
  const std::uint64_t n = static_cast<std::uint64_t>(len[0]) * len[1] * len[2] * len[3];
  auto u = r.f64_array(n, "u_wind");
  auto v = r.f64_array(n, "v_wind");
  auto t = r.f64_array(n, "temperature");
  if (!r.at_end()) {
    throw FormatError(r.offset(), "declared array lengths end before the file does (" +
                                      std::to_string(bytes.size() - r.offset()) + " trailing bytes after 'temperature')");
  }
  try {
    return WeatherGrid(std::move(axes), std::move(u), std::move(v), std::move(t));
  } catch (const InvalidSpec& e) {
    throw FormatError(0, std::string("invalid grid contents: ") + e.what());
  }
}

void save_grid(const WeatherGrid& grid, const std::filesystem::path& path) {
  const auto bytes = encode_grid(grid);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

WeatherGrid load_grid(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_grid(bytes);
}

void save_grid_manifest(const GridManifest& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "WGRD1";
  j["issuance_time"] = m.issuance_time;
  j["role"] = m.role;
  j["member_index"] = m.member_index ? nlohmann::ordered_json(*m.member_index) : nlohmann::ordered_json(nullptr);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
}

GridManifest load_grid_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(f);
    GridManifest m;
    m.issuance_time = j.at("issuance_time").get<std::string>();
    m.role = j.at("role").get<std::string>();
    if (!j.at("member_index").is_null()) m.member_index = j.at("member_index").get<std::size_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, std::string("grid manifest: ") + e.what());
  }
}

}  // namespace ensplan
