#include "sigpca/data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "sigpca/container.hpp"
#include "sigpca/error.hpp"

namespace sigpca::data {

using json = nlohmann::json;

namespace {

constexpr const char* kMaskBlobName = "mask.u8";

void check_coords(const std::vector<LatLon>& coords, const std::string& what) {
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto& c = coords[i];
    if (!(c.lat >= -90.0 && c.lat <= 90.0) || !(c.lon >= -180.0 && c.lon <= 180.0)) {
      throw DataError(what + ": coordinate " + std::to_string(i) + " out of range (" +
                      std::to_string(c.lat) + ", " + std::to_string(c.lon) + ")");
    }
  }
}

json coords_to_json(const std::vector<LatLon>& coords) {
  auto out = json::array();
  for (const auto& c : coords) out.push_back({c.lat, c.lon});
  return out;
}

std::vector<LatLon> coords_from_json(const json& j) {
  std::vector<LatLon> out;
  out.reserve(j.size());
  for (const auto& c : j) out.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
  return out;
}

std::array<std::size_t, 3> shape_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw DataError("manifest shape must be [S, T_w, D]");
  }
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

void check_encoding(const json& m, const fs::path& dir) {
  if (m.value("byte_order", "") != "LE" || m.value("dtype", "") != "f64") {
    throw DataError("unsupported encoding in " + dir.string() + " (need byte_order LE, dtype f64)");
  }
}

}  // namespace

double haversine_km(const LatLon& a, const LatLon& b) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * deg;
  const double dlon = (b.lon - a.lon) * deg;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 + std::cos(a.lat * deg) * std::cos(b.lat * deg) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::min(1.0, h)));
}

void GriddedField::validate() const {
  if (samples() < 1 || steps() < 2 || locations() < 1) {
    throw DataError("gridded field needs S >= 1, T_w >= 2, D >= 1");
  }
  if (coords.size() != locations()) {
    throw DataError("gridded field has " + std::to_string(coords.size()) + " coords for " +
                    std::to_string(locations()) + " locations");
  }
  if (sample_labels.size() != samples()) {
    throw DataError("gridded field has " + std::to_string(sample_labels.size()) +
                    " sample labels for " + std::to_string(samples()) + " samples");
  }
  check_coords(coords, "gridded field");
  for (double v : values.flat()) {
    if (!std::isfinite(v)) {
      throw DataError("gridded field contains a non-finite (NaN/Inf) value");
    }
  }
}

void StationSeries::refresh_missing_fraction() {
  const std::size_t n = samples() * steps();
  missing_fraction.assign(stations(), 0.0);
  for (std::size_t p = 0; p < stations(); ++p) {
    std::size_t present_count = 0;
    for (std::size_t s = 0; s < samples(); ++s) {
      for (std::size_t t = 0; t < steps(); ++t) present_count += mask(s, t, p) ? 1 : 0;
    }
    missing_fraction[p] =
        n == 0 ? 1.0 : 1.0 - static_cast<double>(present_count) / static_cast<double>(n);
  }
}

void StationSeries::validate() const {
  if (mask.shape() != values.shape()) {
    throw DataError("station mask shape differs from values shape");
  }
  if (station_ids.size() != stations() || coords.size() != stations()) {
    throw DataError("station ids/coords do not match station count");
  }
  if (sample_labels.size() != samples()) {
    throw DataError("station series sample labels do not match sample count");
  }
  check_coords(coords, "station series");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask.flat()[i] && !std::isfinite(values.flat()[i])) {
      throw DataError("station series has a non-finite value marked present");
    }
  }
  StationSeries copy = *this;
  copy.refresh_missing_fraction();
  if (copy.missing_fraction != missing_fraction) {
    throw DataError("station missing_fraction inconsistent with mask");
  }
}

std::vector<std::size_t> StationSeries::retained(double threshold) const {
  std::vector<std::size_t> keep;
  for (std::size_t p = 0; p < stations(); ++p) {
    if (missing_fraction.at(p) <= threshold) keep.push_back(p);
  }
  return keep;
}

std::size_t NearestMap::gridpoint_of(std::size_t station) const {
  for (const auto& p : pairs) {
    if (p.station == station) return p.gridpoint;
  }
  throw DataError("nearest map has no entry for station " + std::to_string(station));
}

GriddedField load_field(const fs::path& dir) {
  const auto m = container::read_manifest(dir);
  GriddedField f;
  try {
    check_encoding(m, dir);
    const auto shape = shape_from_json(m.at("shape"));
    f.variable_name = m.at("variable").get<std::string>();
    f.units = m.at("units").get<std::string>();
    f.coords = coords_from_json(m.at("coords"));
    f.sample_labels = m.at("sample_labels").get<std::vector<std::string>>();
    auto blob = container::read_blob(dir / container::kBlobName, shape[0] * shape[1] * shape[2]);
    f.values = Cube<double>(shape[0], shape[1], shape[2], std::move(blob));
  } catch (const json::exception& e) {
    throw DataError("malformed field manifest in " + dir.string() + ": " + e.what());
  }
  f.validate();
  return f;
}

void save_field(const GriddedField& field, const fs::path& dir) {
  field.validate();
  json m;
  m["schema_version"] = container::kSchemaVersion;
  m["kind"] = "gridded_field";
  m["variable"] = field.variable_name;
  m["units"] = field.units;
  m["shape"] = {field.samples(), field.steps(), field.locations()};
  m["coords"] = coords_to_json(field.coords);
  m["sample_labels"] = field.sample_labels;
  m["byte_order"] = "LE";
  m["dtype"] = "f64";
  container::write_manifest(dir, m);
  container::write_blob(dir / container::kBlobName, field.values.flat());
}

StationSeries load_stations(const fs::path& dir) {
  const auto m = container::read_manifest(dir);
  StationSeries st;
  try {
    check_encoding(m, dir);
    const auto shape = shape_from_json(m.at("shape"));
    const std::size_t n = shape[0] * shape[1] * shape[2];
    st.station_ids = m.at("station_ids").get<std::vector<std::string>>();
    st.coords = coords_from_json(m.at("coords"));
    st.sample_labels = m.at("sample_labels").get<std::vector<std::string>>();
    st.variable_name = m.at("variable").get<std::string>();
    st.units = m.at("units").get<std::string>();
    st.values = Cube<double>(shape[0], shape[1], shape[2],
                             container::read_blob(dir / container::kBlobName, n));
    st.mask = Cube<std::uint8_t>(shape[0], shape[1], shape[2],
                                 container::read_bytes(dir / kMaskBlobName, n));
  } catch (const json::exception& e) {
    throw DataError("malformed station manifest in " + dir.string() + ": " + e.what());
  }
  st.refresh_missing_fraction();
  st.validate();
  return st;
}

void save_stations(const StationSeries& stations, const fs::path& dir) {
  stations.validate();
  json m;
  m["schema_version"] = container::kSchemaVersion;
  m["kind"] = "station_series";
  m["variable"] = stations.variable_name;
  m["units"] = stations.units;
  m["shape"] = {stations.samples(), stations.steps(), stations.stations()};
  m["station_ids"] = stations.station_ids;
  m["coords"] = coords_to_json(stations.coords);
  m["sample_labels"] = stations.sample_labels;
  m["missing_fraction"] = stations.missing_fraction;
  m["byte_order"] = "LE";
  m["dtype"] = "f64";
  m["mask_dtype"] = "u8";
  container::write_manifest(dir, m);
  container::write_blob(dir / container::kBlobName, stations.values.flat());
  container::write_bytes(dir / kMaskBlobName, stations.mask.flat());
}

void save_nearest(const NearestMap& map, const fs::path& file) {
  auto arr = json::array();
  for (const auto& p : map.pairs) {
    arr.push_back({{"station", p.station}, {"gridpoint", p.gridpoint}, {"distance_km", p.distance_km}});
  }
  std::ofstream out(file, std::ios::trunc);
  out << json{{"kind", "nearest_map"}, {"pairs", arr}}.dump(2) << '\n';
}

NearestMap load_nearest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("missing nearest map: " + file.string());
  NearestMap map;
  try {
    const auto j = json::parse(in);
    for (const auto& p : j.at("pairs")) {
      map.pairs.push_back({p.at("station").get<std::size_t>(), p.at("gridpoint").get<std::size_t>(),
                           p.at("distance_km").get<double>()});
    }
  } catch (const json::exception& e) {
    throw DataError("malformed nearest map " + file.string() + ": " + e.what());
  }
  return map;
}

std::int64_t parse_iso8601(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 'T';
  int consumed = 0;
  const int n = std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi,
                            &s, &consumed);
  bool ok = false;
  if (n >= 3) {
    if (text.size() == 10) {
      h = mi = s = 0;
      ok = true;
    } else if (n >= 6 && (sep == 'T' || sep == ' ')) {
      if (n == 6) s = 0;
      ok = true;
    }
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ok || !ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) {
    throw DataError("unparseable ISO-8601 timestamp: '" + text + "'");
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_iso8601(std::int64_t epoch_seconds) {
  using namespace std::chrono;
  std::int64_t days = epoch_seconds / 86400;
  std::int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60),
                static_cast<int>(rem % 60));
  return buf;
}

StationSeries aggregate_subhourly(std::span<const RawStation> raw, const AggregationWindow& window) {
  if (window.interval_seconds <= 0 || window.samples == 0 || window.steps == 0) {
    throw ConfigError("aggregation window needs positive interval, samples and steps");
  }
  const std::size_t S = window.samples;
  const std::size_t T = window.steps;
  const std::size_t P = raw.size();
  const auto cells = static_cast<std::int64_t>(S * T);
  const std::int64_t end = window.start + cells * window.interval_seconds;

  StationSeries out;
  out.values = Cube<double>(S, T, P, 0.0);
  out.mask = Cube<std::uint8_t>(S, T, P, 0);
  Cube<double> sum(S, T, P, 0.0);
  Cube<double> count(S, T, P, 0.0);

  for (std::size_t p = 0; p < P; ++p) {
    const auto& st = raw[p];
    out.station_ids.push_back(st.id);
    out.coords.push_back(st.coord);
    std::int64_t previous = std::numeric_limits<std::int64_t>::min();
    for (const auto& obs : st.observations) {
      if (obs.time < previous) {
        throw DataError("station " + st.id + ": timestamps not sorted");
      }
      previous = obs.time;
      if (obs.time < window.start || obs.time >= end) {
        throw DataError("station " + st.id + ": timestamp " + format_iso8601(obs.time) +
                        " outside the declared range");
      }
      if (!std::isfinite(obs.value)) continue;
      const auto cell = static_cast<std::size_t>((obs.time - window.start) / window.interval_seconds);
      sum(cell / T, cell % T, p) += obs.value;
      count(cell / T, cell % T, p) += 1.0;
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (count.flat()[i] > 0.0) {
      out.values.flat()[i] = sum.flat()[i] / count.flat()[i];
      out.mask.flat()[i] = 1;
    }
  }
  for (std::size_t s = 0; s < S; ++s) {
    out.sample_labels.push_back(
        format_iso8601(window.start + static_cast<std::int64_t>(s * T) * window.interval_seconds));
  }
  out.refresh_missing_fraction();
  return out;
}

std::vector<RawStation> read_station_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open station CSV " + file.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty station CSV " + file.string());
  const auto header = split(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("station CSV lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column("station_id"), c_lat = column("lat"), c_lon = column("lon"),
                    c_ts = column("timestamp"), c_val = column("value");

  std::vector<RawStation> stations;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() < header.size()) {
      throw DataError("station CSV line " + std::to_string(line_no) + " has too few columns");
    }
    try {
      const auto& id = cells[c_id];
      auto [it, inserted] = index.try_emplace(id, stations.size());
      if (inserted) {
        stations.push_back(RawStation{id, {std::stod(cells[c_lat]), std::stod(cells[c_lon])}, {}});
      }
      const double value = cells[c_val].empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : std::stod(cells[c_val]);
      stations[it->second].observations.push_back({parse_iso8601(cells[c_ts]), value});
    } catch (const std::invalid_argument&) {
      throw DataError("station CSV line " + std::to_string(line_no) + " has a non-numeric field");
    }
  }
  return stations;
}

NearestMap nearest_gridpoints(std::span<const LatLon> stations, std::span<const LatLon> gridpoints) {
  if (stations.empty() || gridpoints.empty()) {
    throw DataError("nearest_gridpoints needs non-empty station and gridpoint sets");
  }
  NearestMap map;
  map.pairs.reserve(stations.size());
  for (std::size_t p = 0; p < stations.size(); ++p) {
    std::size_t best = 0;
    double best_d = haversine_km(stations[p], gridpoints[0]);
    for (std::size_t g = 1; g < gridpoints.size(); ++g) {
      const double d = haversine_km(stations[p], gridpoints[g]);
      if (d < best_d) {
        best_d = d;
        best = g;
      }
    }
    map.pairs.push_back({p, best, best_d});
  }
  return map;
}

NearestMap nearest_gridpoints(const StationSeries& stations, const GriddedField& field) {
  return nearest_gridpoints(std::span(stations.coords), std::span(field.coords));
}

Cube<double> reshape_time_axis(std::span<const double> flat, std::size_t n_steps,
                               std::size_t n_locations, std::size_t window) {
  if (flat.size() != n_steps * n_locations) {
    throw DataError("flat series size does not match steps x locations");
  }
  if (window < 2 || window > n_steps) {
    throw ConfigError("window length must be in [2, number of steps]");
  }
  const std::size_t S = n_steps / window;
  Cube<double> out(S, window, n_locations);
  std::copy_n(flat.begin(), S * window * n_locations, out.flat().begin());
  return out;
}

double synthetic_bias(const SyntheticSpec& spec, const LatLon& where) {
  const double u = (where.lat - spec.lat_min) / (spec.lat_max - spec.lat_min);
  const double v = (where.lon - spec.lon_min) / (spec.lon_max - spec.lon_min);
  return spec.bias_amplitude * std::cos(std::numbers::pi * u) *
         std::sin(std::numbers::pi * (v + 0.25));
}

namespace {

void check_synthetic(const SyntheticSpec& spec) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("synthetic." + field + ": " + why);
  };
  if (spec.grid_rows < 2) fail("grid_rows", "must be >= 2");
  if (spec.grid_cols < 2) fail("grid_cols", "must be >= 2");
  if (spec.samples < 1) fail("samples", "must be >= 1");
  if (spec.steps < 2) fail("steps", "must be >= 2");
  if (spec.n_stations < 1) fail("n_stations", "must be >= 1");
  if (!(spec.lat_max > spec.lat_min)) fail("lat_max", "must exceed lat_min");
  if (!(spec.lon_max > spec.lon_min)) fail("lon_max", "must exceed lon_min");
  if (spec.lat_min < -90 || spec.lat_max > 90) fail("lat_min", "latitudes must lie in [-90, 90]");
  if (spec.lon_min < -180 || spec.lon_max > 180) fail("lon_min", "longitudes must lie in [-180, 180]");
  if (!(spec.step_hours > 0)) fail("step_hours", "must be positive");
  if (spec.noise_sigma < 0) fail("noise_sigma", "must be >= 0");
  if (spec.obs_noise_sigma < 0) fail("obs_noise_sigma", "must be >= 0");
  if (!(std::abs(spec.noise_phi) < 1)) fail("noise_phi", "must lie in (-1, 1)");
  if (spec.missing_probability < 0 || spec.missing_probability >= 1) {
    fail("missing_probability", "must lie in [0, 1)");
  }
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  check_synthetic(spec);
  constexpr double pi = std::numbers::pi;
  const std::size_t S = spec.samples, T = spec.steps;
  const std::size_t D = spec.grid_rows * spec.grid_cols;
  const std::size_t P = spec.n_stations;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> anomaly(S);
  for (auto& a : anomaly) a = normal(rng);

  const double lat_ext = spec.lat_max - spec.lat_min;
  const double lon_ext = spec.lon_max - spec.lon_min;
  auto truth_at = [&](std::size_t s, std::size_t t, const LatLon& c) {
    const double u = (c.lat - spec.lat_min) / lat_ext;
    const double v = (c.lon - spec.lon_min) / lon_ext;
    const double hours = static_cast<double>(s * T + t) * spec.step_hours;
    const double climatology = spec.base_level + 2.0 * (0.5 - u) + std::sin(pi * v);
    const double diurnal = spec.diurnal_amplitude * (0.8 + 0.4 * v) *
                           std::sin(2.0 * pi * (hours - 9.0 - 2.0 * u) / 24.0);
    const double synoptic =
        spec.synoptic_amplitude * std::sin(2.0 * pi * hours / (24.0 * 4.7) + pi * (u + 0.5 * v));
    const double seasonal =
        spec.seasonal_amplitude * std::sin(2.0 * pi * static_cast<double>(s) / static_cast<double>(S));
    const double weather = 0.5 * spec.synoptic_amplitude * anomaly[s] * std::cos(pi * (u - v));
    return climatology + diurnal + synoptic + seasonal + weather;
  };

  const auto start = parse_iso8601(spec.start);
  const auto step_seconds = static_cast<std::int64_t>(std::llround(spec.step_hours * 3600.0));
  std::vector<std::string> labels;
  for (std::size_t s = 0; s < S; ++s) {
    labels.push_back(format_iso8601(start + static_cast<std::int64_t>(s * T) * step_seconds));
  }

  SyntheticData out;
  auto& truth = out.truth;
  truth.variable_name = "temperature";
  truth.units = "degC";
  truth.sample_labels = labels;
  for (std::size_t i = 0; i < spec.grid_rows; ++i) {
    for (std::size_t j = 0; j < spec.grid_cols; ++j) {
      truth.coords.push_back(
          {spec.lat_min + lat_ext * static_cast<double>(i) / static_cast<double>(spec.grid_rows - 1),
           spec.lon_min + lon_ext * static_cast<double>(j) / static_cast<double>(spec.grid_cols - 1)});
    }
  }
  truth.values = Cube<double>(S, T, D);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t g = 0; g < D; ++g) truth.values(s, t, g) = truth_at(s, t, truth.coords[g]);
    }
  }

  out.model = truth;
  const double innovation = std::sqrt(1.0 - spec.noise_phi * spec.noise_phi) * spec.noise_sigma;
  for (std::size_t g = 0; g < D; ++g) {
    const double bias = synthetic_bias(spec, truth.coords[g]);
    double e = spec.noise_sigma * normal(rng);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t t = 0; t < T; ++t) {
        if (s + t > 0) e = spec.noise_phi * e + innovation * normal(rng);
        out.model.values(s, t, g) += bias + e;
      }
    }
  }

  auto& st = out.stations;
  st.variable_name = truth.variable_name;
  st.units = truth.units;
  st.sample_labels = labels;
  for (std::size_t p = 0; p < P; ++p) {
    char id[32];
    std::snprintf(id, sizeof id, "ST%03zu", p);
    st.station_ids.emplace_back(id);
    const double lat = spec.lat_min + lat_ext * unit(rng);
    const double lon = spec.lon_min + lon_ext * unit(rng);
    st.coords.push_back({lat, lon});
  }
  st.values = Cube<double>(S, T, P, 0.0);
  st.mask = Cube<std::uint8_t>(S, T, P, 0);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t t = 0; t < T; ++t) {
        const double noise = spec.obs_noise_sigma * normal(rng);
        if (unit(rng) >= spec.missing_probability) {
          st.values(s, t, p) = truth_at(s, t, st.coords[p]) + noise;
          st.mask(s, t, p) = 1;
        }
      }
    }
  }
  st.refresh_missing_fraction();
  return out;
}

}  // namespace sigpca::data
