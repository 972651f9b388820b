#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sigpca/data.hpp"

namespace sigpca::evaluate {

/// Root-mean-square difference over entries where `mask` is non-zero (all
/// entries when the mask is empty).
double rmse(std::span<const double> pred, std::span<const double> ref,
            std::span<const std::uint8_t> mask = {});

/// 100 * RMSE(pred, ref) / mean(ref), skipping masked entries in both.
double pct_rmse(std::span<const double> pred, std::span<const double> ref,
                std::span<const std::uint8_t> mask = {});

/// 100 * (model - corrected) / model; negative when the correction hurts.
double pct_improvement(double model_rmse, double corrected_rmse);

/// L1 distance between the empirical quantile functions of two samples.
double wasserstein1(std::span<const double> a, std::span<const double> b);

/// Linear-interpolation quantile of sorted data at probability p.
double empirical_quantile(std::span<const double> sorted, double p);

/// Matched quantiles of a and b at probabilities (i - 0.5) / n.
std::vector<std::pair<double, double>> qq_pairs(std::span<const double> a, std::span<const double> b,
                                                std::size_t n_quantiles);

/// Per-location series for correlation analysis. `series` is time x
/// locations; `present` (same shape, optional) marks usable entries.
struct SeriesSet {
  std::string name;
  Eigen::MatrixXd series;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present;
  std::vector<data::LatLon> coords;
};

SeriesSet series_from_field(const std::string& name, const data::GriddedField& field);
SeriesSet series_from_stations(const std::string& name, const data::StationSeries& stations);

struct CorrelationPoint {
  double distance_km = 0.0;
  double r = 0.0;
};

struct CorrelationSet {
  std::string source;
  std::vector<CorrelationPoint> points;
  std::size_t skipped = 0;  // pairs with an undefined correlation
};

double pearson(std::span<const double> a, std::span<const double> b);

/// Pearson correlation over time against haversine distance for location
/// pairs; a seeded uniform subset of at most `max_pairs` pairs when there are
/// more.
CorrelationSet correlation_vs_distance(const SeriesSet& set, std::size_t max_pairs, std::uint64_t seed);
std::vector<CorrelationSet> correlation_vs_distance(std::span<const SeriesSet> sets,
                                                    std::size_t max_pairs, std::uint64_t seed);

struct Spectrum {
  std::vector<double> frequency_per_day;
  std::vector<double> power;
};

struct SpectrumOptions {
  bool welch = false;
  std::size_t welch_segment = 0;  // 0: n / 4, at least 8
};

/// One-sided periodogram of the mean-removed series. Interior bins carry both
/// the positive and negative frequency, so the powers sum to the sum of
/// squared mean-removed values. Missing entries (present == 0) are linearly
/// interpolated first.
Spectrum power_spectrum(std::span<const double> series, double sample_interval_hours,
                        std::span<const std::uint8_t> present = {}, const SpectrumOptions& opt = {});

struct SeasonalPartition {
  std::map<std::string, std::vector<std::size_t>> groups;  // winter, spring, summer, fall
  std::vector<std::size_t> unassigned;                     // December
};

/// Winter Jan-Feb, spring Mar-May, summer Jun-Aug, fall Sep-Nov; labels must
/// start with YYYY-MM-DD.
SeasonalPartition seasonal_partition(std::span<const std::string> labels);

struct StationMetrics {
  std::string station_id;
  std::size_t gridpoint = 0;
  double distance_km = 0.0;
  double missing_fraction = 0.0;
  bool retained = true;
  double rmse_model = 0.0;
  double rmse_corrected = 0.0;
  double pct_rmse_model = 0.0;
  double pct_rmse_corrected = 0.0;
  double pct_improvement = 0.0;
  double wasserstein_model = 0.0;
  double wasserstein_corrected = 0.0;
};

struct SpectrumEntry {
  std::string source;
  std::size_t location = 0;
  std::string season;
  Spectrum spectrum;
};

struct QqEntry {
  std::string name;
  std::vector<std::pair<double, double>> pairs;
};

struct EvalOptions {
  std::size_t max_pairs = 50000;
  std::uint64_t seed = 11;
  std::size_t n_quantiles = 100;
  std::size_t spectrum_stations = 5;
  double sample_interval_hours = 1.0;
  double missing_threshold = data::kDefaultMissingThreshold;
  SpectrumOptions spectrum;
};

struct EvalInputs {
  const data::GriddedField* model = nullptr;
  const data::StationSeries* stations = nullptr;
  const data::NearestMap* nearest = nullptr;
  const data::GriddedField* reconstruction = nullptr;  // optional
  const data::GriddedField* corrected = nullptr;       // corrected or directly predicted field
  const data::GriddedField* truth = nullptr;           // optional, synthetic runs only
  std::string corrected_label = "corrected";
};

struct EvalReport {
  std::vector<StationMetrics> stations;
  std::vector<CorrelationSet> correlations;
  std::vector<SpectrumEntry> spectra;
  std::vector<QqEntry> qq;
  SeasonalPartition seasons;
  nlohmann::json summary = nlohmann::json::object();
};

EvalReport evaluate(const EvalInputs& in, const EvalOptions& opt = {});

nlohmann::json to_json(const EvalReport& report);
/// report.json plus correlation.csv, spectra.csv and qq.csv.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace sigpca::evaluate
