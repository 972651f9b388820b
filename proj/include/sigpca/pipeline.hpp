#pragma once

// Reconstruction and observation-corrective workflow: summary statistics ->
// reconstruction network -> residual network at stations -> corrected field.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sigpca/data.hpp"
#include "sigpca/neuralnet.hpp"
#include "sigpca/reduction.hpp"
#include "sigpca/signatures.hpp"
#include "sigpca/spatialbasis.hpp"

namespace sigpca::pipeline {

enum class Variant { sigpca_dk, sigpca2_dk, eof_dk, direct_obs_sigpca, direct_obs_sigpca_dk };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
bool uses_kriging_basis(Variant v);
bool is_direct(Variant v);
bool uses_eof(Variant v);

struct NetworkConfig {
  std::vector<std::size_t> hidden{512, 256, 128, 64, 32, 16};
  bool batch_norm = true;
  neuralnet::OutputActivation output_activation = neuralnet::OutputActivation::identity;
  neuralnet::TrainConfig train;
};

struct BasisConfig {
  std::size_t base_knots_per_axis = 5;
  std::size_t n_resolutions = 3;
};

struct PipelineConfig {
  signatures::SignatureConfig signature;
  double variance_target = reduction::kDefaultVarianceTarget;
  bool standardize_features = false;
  double x_percent = 4.0;
  Variant variant = Variant::sigpca_dk;
  std::uint64_t subset_seed = 1;
  std::uint64_t init_seed = 2;
  std::uint64_t shuffle_seed = 3;
  NetworkConfig reconstruction;
  NetworkConfig corrective;
  BasisConfig basis;
  double missing_threshold = data::kDefaultMissingThreshold;
  std::size_t depth2_top_m = 20;
  std::size_t threads = 1;

  void validate() const;
};

/// Number of training gridpoints: D * x / 100 rounded half to even.
std::size_t training_count(std::size_t n_locations, double x_percent);

/// Sorted uniform sample without replacement of training_count() indices.
std::vector<std::size_t> select_training_gridpoints(std::size_t n_locations, double x_percent,
                                                    std::uint64_t seed);

/// Per-sample summary statistics and the reduction that produced them.
struct Summary {
  Eigen::MatrixXd reduced;  // samples x components
  std::optional<signatures::FeatureMatrix> features;
  std::optional<reduction::PcaModel> pca;
  std::optional<reduction::EofModel> eof;
  std::vector<std::size_t> depth2_locations;
};

/// Signature features for the variant (depth-1, or depth-1 plus depth-2 on
/// the top locations of a preliminary depth-1 reduction).
signatures::FeatureMatrix variant_features(const PipelineConfig& cfg, const data::GriddedField& field,
                                           std::vector<std::size_t>* depth2_locations = nullptr);

Summary summarize(const PipelineConfig& cfg, const data::GriddedField& field);

/// Spatial part of a network input row: lat/lon scaled to [0, 1] over `bbox`
/// followed by the kriging basis row when `basis` is given.
struct SpatialEncoder {
  spatialbasis::BoundingBox bbox;
  std::optional<spatialbasis::KrigingBasis> basis;

  std::size_t width() const;
  Eigen::MatrixXd encode(std::span<const data::LatLon> coords) const;
};

SpatialEncoder make_encoder(const data::GriddedField& field, bool with_basis, const BasisConfig& cfg);

/// Network rows for every (sample, location) pair in sample-major order:
/// [summary row of the sample, spatial row of the location].
Eigen::MatrixXd assemble_inputs(const Eigen::MatrixXd& reduced, const Eigen::MatrixXd& spatial,
                                std::span<const std::size_t> locations);

neuralnet::ModelBundle train_reconstruction(const Eigen::MatrixXd& reduced,
                                            const data::GriddedField& field,
                                            std::span<const std::size_t> subset,
                                            const SpatialEncoder& encoder, const NetworkConfig& net,
                                            std::uint64_t init_seed, std::uint64_t shuffle_seed);

/// Predicts every (sample, gridpoint) series; the result has the shape,
/// coords and labels of `like`.
data::GriddedField predict_field(const neuralnet::ModelBundle& model, const Eigen::MatrixXd& reduced,
                                 const data::GriddedField& like, const SpatialEncoder& encoder);

data::GriddedField reconstruct_full(const neuralnet::ModelBundle& model, const Eigen::MatrixXd& reduced,
                                    const data::GriddedField& like, const SpatialEncoder& encoder);

struct CorrectionTargets {
  Cube<double> values;  // [S][T_w][P]
  Cube<std::uint8_t> mask;
};

/// Observation minus the reconstruction at each station's nearest gridpoint.
CorrectionTargets compute_corrections(const data::StationSeries& stations,
                                      const data::GriddedField& recon, const data::NearestMap& nearest);

/// Trains on rows (sample, retained station) with masked targets. Station
/// coordinates, not their nearest gridpoints, feed the spatial encoder.
neuralnet::ModelBundle train_station_network(const Eigen::MatrixXd& reduced, const Cube<double>& targets,
                                             const Cube<std::uint8_t>& mask,
                                             std::span<const data::LatLon> station_coords,
                                             std::span<const std::size_t> retained,
                                             const SpatialEncoder& encoder, const NetworkConfig& net,
                                             std::uint64_t init_seed, std::uint64_t shuffle_seed);

neuralnet::ModelBundle train_corrective(const Eigen::MatrixXd& reduced, const CorrectionTargets& targets,
                                        const data::StationSeries& stations,
                                        std::span<const std::size_t> retained,
                                        const SpatialEncoder& encoder, const NetworkConfig& net,
                                        std::uint64_t init_seed, std::uint64_t shuffle_seed);

struct CorrectionResult {
  data::GriddedField recon_field;
  data::GriddedField corrections;
  data::GriddedField corrected_field;
  data::NearestMap nearest;
  std::vector<std::size_t> training_subset;
};

/// corrected = recon + predicted corrections, elementwise.
CorrectionResult apply_corrections(const data::GriddedField& recon,
                                   const neuralnet::ModelBundle& corrective,
                                   const Eigen::MatrixXd& reduced, const SpatialEncoder& encoder);

struct VariantResult {
  Variant variant = Variant::sigpca_dk;
  Summary summary;
  std::optional<CorrectionResult> correction;
  std::optional<data::GriddedField> direct_field;
  std::optional<neuralnet::ModelBundle> reconstruction_model;
  std::optional<neuralnet::ModelBundle> station_model;
  data::NearestMap nearest;
  std::vector<std::size_t> retained_stations;
  std::size_t station_training_rows = 0;
};

VariantResult run_variant(const PipelineConfig& cfg, const data::GriddedField& field,
                          const data::StationSeries& stations);

struct SweepRow {
  double x_percent = 0.0;
  std::size_t gridpoints = 0;
  std::vector<double> pct_rmse;
  double mean = 0.0;
  double std_dev = 0.0;
};

/// Reconstruction-only %RMSE against the model field over all gridpoints for
/// each training percentage, repeated with distinct seeds.
std::vector<SweepRow> sensitivity_sweep(std::span<const double> x_values, std::size_t repeats,
                                        const PipelineConfig& cfg, const data::GriddedField& field,
                                        const Summary* summary = nullptr);

}  // namespace sigpca::pipeline
