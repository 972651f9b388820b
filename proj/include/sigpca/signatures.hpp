#pragma once

// Windowed path-signature features. Discrete series are treated as
// piecewise-linear paths, so depth-1 and depth-2 iterated integrals have
// exact closed forms per segment.

#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sigpca/data.hpp"

namespace sigpca::signatures {

struct SignatureConfig {
  int depth = 1;         // 1 or 2
  int window_depth = 3;  // number of dyadic levels
  bool basepoint = true;
  bool time_augment = true;
  /// Keep the (constant) depth-1 terms of the time channel as features.
  bool keep_time_features = false;
  /// Gridpoints whose joint path gets depth-2 terms.
  std::vector<std::size_t> depth2_locations;
  bool depth2_all = false;

  /// Throws ConfigError if the configuration cannot be applied to series of
  /// `steps` samples over `locations` gridpoints.
  void validate(std::size_t steps, std::size_t locations) const;
  std::size_t augmented_steps(std::size_t steps) const { return steps + (basepoint ? 1 : 0); }
};

struct Window {
  int level = 1;
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const Window&) const = default;
};

/// Level-major list of dyadic windows; level 1 is the global window.
struct WindowSet {
  std::vector<Window> windows;
  std::size_t size() const { return windows.size(); }
};

/// Prepends a zero sample (basepoint) and/or a leading normalised time
/// channel t / (T' - 1). Rows are channels, columns are time.
Eigen::MatrixXd augment_path(const Eigen::MatrixXd& path, bool basepoint, bool time_augment);

WindowSet dyadic_windows(std::size_t steps, int window_depth);

/// Displacement of every channel over [start, end].
Eigen::VectorXd signature_depth1(const Eigen::MatrixXd& path, std::size_t start, std::size_t end);

/// Second iterated integrals S^{ij} over [start, end].
Eigen::MatrixXd signature_depth2(const Eigen::MatrixXd& path, std::size_t start, std::size_t end);

/// Marks the time channel in a column descriptor.
inline constexpr long kTimeChannel = -1;

/// One feature column: a window and the channels of its multi-index, each
/// channel being a gridpoint index or kTimeChannel.
struct ColumnDesc {
  std::size_t window = 0;
  std::vector<long> channels;
  bool operator==(const ColumnDesc&) const = default;
};

struct FeatureMatrix {
  Eigen::MatrixXd values;  // samples x features
  std::vector<ColumnDesc> columns;
  std::vector<Window> windows;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

/// Features for every sample of `field`. Columns: the depth-1 block
/// (window-major, then location) followed, at depth 2, by the pairwise block
/// (window-major, then ordered channel pair over [time, selected locations]).
FeatureMatrix compute_features(const data::GriddedField& field, const SignatureConfig& cfg,
                               std::size_t threads = 1);

/// Number of depth-1 columns compute_features produces.
std::size_t depth1_feature_count(std::size_t locations, int window_depth, bool keep_time_features);

struct Fluctuation {
  ColumnDesc column;
  double std_dev = 0.0;
};

/// Sample standard deviation of every feature column across samples,
/// ordered by leading channel, then window.
std::vector<Fluctuation> signature_fluctuations(const FeatureMatrix& features);

void save_features(const FeatureMatrix& features, const std::filesystem::path& dir,
                   const nlohmann::json& extra_meta = nlohmann::json::object());
FeatureMatrix load_features(const std::filesystem::path& dir, nlohmann::json* meta_out = nullptr);

}  // namespace sigpca::signatures
