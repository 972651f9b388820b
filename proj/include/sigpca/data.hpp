#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sigpca/cube.hpp"

namespace sigpca::data {

namespace fs = std::filesystem;

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kDefaultMissingThreshold = 0.5;

struct LatLon {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
  bool operator==(const LatLon&) const = default;
};

double haversine_km(const LatLon& a, const LatLon& b);

/// Dense model output over [samples][time steps per sample][gridpoints].
struct GriddedField {
  Cube<double> values;
  std::vector<LatLon> coords;
  std::vector<std::string> sample_labels;
  std::string variable_name;
  std::string units;

  std::size_t samples() const { return values.samples(); }
  std::size_t steps() const { return values.steps(); }
  std::size_t locations() const { return values.locations(); }

  /// Throws DataError naming the first violated invariant.
  void validate() const;

  bool operator==(const GriddedField&) const = default;
};

/// Sparse observations on the same [sample][time step] layout as a field.
struct StationSeries {
  std::vector<std::string> station_ids;
  std::vector<LatLon> coords;
  Cube<double> values;
  Cube<std::uint8_t> mask;  // 1 = present
  std::vector<double> missing_fraction;
  std::vector<std::string> sample_labels;
  std::string variable_name;
  std::string units;

  std::size_t samples() const { return values.samples(); }
  std::size_t steps() const { return values.steps(); }
  std::size_t stations() const { return values.locations(); }
  bool present(std::size_t s, std::size_t t, std::size_t p) const { return mask(s, t, p) != 0; }

  /// Recomputes missing_fraction from the mask.
  void refresh_missing_fraction();
  void validate() const;

  /// Indices of stations whose missing fraction does not exceed `threshold`.
  std::vector<std::size_t> retained(double threshold = kDefaultMissingThreshold) const;

  bool operator==(const StationSeries&) const = default;
};

struct NearestPair {
  std::size_t station = 0;
  std::size_t gridpoint = 0;
  double distance_km = 0.0;
  bool operator==(const NearestPair&) const = default;
};

struct NearestMap {
  std::vector<NearestPair> pairs;
  std::size_t gridpoint_of(std::size_t station) const;
  bool operator==(const NearestMap&) const = default;
};

GriddedField load_field(const fs::path& dir);
void save_field(const GriddedField& field, const fs::path& dir);

StationSeries load_stations(const fs::path& dir);
void save_stations(const StationSeries& stations, const fs::path& dir);

void save_nearest(const NearestMap& map, const fs::path& file);
NearestMap load_nearest(const fs::path& file);

/// Seconds since the Unix epoch, UTC. Accepts `YYYY-MM-DD`,
/// `YYYY-MM-DDThh:mm[:ss][Z]` and a space in place of `T`.
std::int64_t parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t epoch_seconds);

struct RawObservation {
  std::int64_t time = 0;  // epoch seconds
  double value = 0.0;
};

struct RawStation {
  std::string id;
  LatLon coord;
  std::vector<RawObservation> observations;  // sorted by time
};

/// Declared output grid for aggregation: `samples` windows of `steps`
/// consecutive intervals each, starting at `start`.
struct AggregationWindow {
  std::int64_t start = 0;
  std::int64_t interval_seconds = 3600;
  std::size_t samples = 1;
  std::size_t steps = 24;
};

/// Averages irregular observations into fixed intervals; empty intervals
/// are masked missing.
StationSeries aggregate_subhourly(std::span<const RawStation> raw, const AggregationWindow& window);

/// Station CSV with columns station_id, lat, lon, timestamp, value. Rows of
/// one station may be interleaved with others but must be time-sorted.
std::vector<RawStation> read_station_csv(const fs::path& file);

NearestMap nearest_gridpoints(std::span<const LatLon> stations, std::span<const LatLon> gridpoints);
NearestMap nearest_gridpoints(const StationSeries& stations, const GriddedField& field);

/// Cuts a flat [time][location] series into consecutive windows of
/// `window` steps, dropping any trailing remainder.
Cube<double> reshape_time_axis(std::span<const double> flat, std::size_t n_steps,
                               std::size_t n_locations, std::size_t window);

struct SyntheticSpec {
  std::uint64_t seed = 7;
  std::size_t samples = 60;
  std::size_t steps = 24;
  std::size_t grid_rows = 20;  // latitude
  std::size_t grid_cols = 20;  // longitude
  double lat_min = 41.0;
  double lat_max = 47.0;
  double lon_min = -91.0;
  double lon_max = -83.0;
  std::size_t n_stations = 40;
  double step_hours = 1.0;
  std::string start = "2010-01-01";

  double base_level = 10.0;
  double diurnal_amplitude = 4.0;
  double synoptic_amplitude = 3.0;
  double seasonal_amplitude = 2.0;
  double bias_amplitude = 1.4;
  double noise_sigma = 0.1;
  double noise_phi = 0.8;
  double obs_noise_sigma = 0.05;
  double missing_probability = 0.02;
};

struct SyntheticData {
  GriddedField model;
  StationSeries stations;
  GriddedField truth;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// The additive spatial bias surface the generator imposes on the model field.
double synthetic_bias(const SyntheticSpec& spec, const LatLon& where);

}  // namespace sigpca::data
