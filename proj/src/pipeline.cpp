#include "sigpca/pipeline.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>
#include <random>

#include "sigpca/error.hpp"
#include "sigpca/evaluate.hpp"

namespace sigpca::pipeline {

using Eigen::Index;
using Eigen::MatrixXd;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::sigpca_dk: return "sigpca_dk";
    case Variant::sigpca2_dk: return "sigpca2_dk";
    case Variant::eof_dk: return "eof_dk";
    case Variant::direct_obs_sigpca: return "direct_obs_sigpca";
    case Variant::direct_obs_sigpca_dk: return "direct_obs_sigpca_dk";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (auto v : {Variant::sigpca_dk, Variant::sigpca2_dk, Variant::eof_dk, Variant::direct_obs_sigpca,
                 Variant::direct_obs_sigpca_dk}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name + "'");
}

bool uses_kriging_basis(Variant v) { return v != Variant::direct_obs_sigpca; }

bool is_direct(Variant v) {
  return v == Variant::direct_obs_sigpca || v == Variant::direct_obs_sigpca_dk;
}

bool uses_eof(Variant v) { return v == Variant::eof_dk; }

void PipelineConfig::validate() const {
  if (!(x_percent > 0.0 && x_percent <= 100.0)) {
    throw ConfigError("x_percent must lie in (0, 100]");
  }
  if (!(variance_target > 0.0 && variance_target <= 1.0)) {
    throw ConfigError("variance_target must lie in (0, 1]");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (depth2_top_m < 1) throw ConfigError("depth2_top_m must be >= 1");
  if (!(missing_threshold >= 0.0 && missing_threshold <= 1.0)) {
    throw ConfigError("missing_threshold must lie in [0, 1]");
  }
  reconstruction.train.validate();
  corrective.train.validate();
}

std::size_t training_count(std::size_t n_locations, double x_percent) {
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double count = std::nearbyint(static_cast<double>(n_locations) * x_percent / 100.0);
  std::fesetround(saved);
  return static_cast<std::size_t>(count);
}

std::vector<std::size_t> select_training_gridpoints(std::size_t n_locations, double x_percent,
                                                    std::uint64_t seed) {
  if (!(x_percent > 0.0 && x_percent <= 100.0)) {
    throw ConfigError("x_percent must lie in (0, 100]");
  }
  const std::size_t count = training_count(n_locations, x_percent);
  if (count == 0) {
    throw ConfigError("x_percent " + std::to_string(x_percent) + " of " + std::to_string(n_locations) +
                      " gridpoints selects no training gridpoint");
  }
  std::vector<std::size_t> all(n_locations);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_locations - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

signatures::FeatureMatrix variant_features(const PipelineConfig& cfg, const data::GriddedField& field,
                                           std::vector<std::size_t>* depth2_locations) {
  auto sig = cfg.signature;
  sig.depth = 1;
  auto depth1 = signatures::compute_features(field, sig, cfg.threads);
  if (cfg.variant != Variant::sigpca2_dk) return depth1;

  const auto prelim = reduction::pca_fit(depth1, cfg.variance_target, cfg.standardize_features);
  const std::size_t m = std::min(cfg.depth2_top_m, field.locations());
  const auto ranking = reduction::top_locations(prelim, depth1.columns, field.locations(), m);
  sig.depth = 2;
  sig.depth2_all = false;
  sig.depth2_locations = ranking.top;
  if (depth2_locations) *depth2_locations = ranking.top;
  return signatures::compute_features(field, sig, cfg.threads);
}

Summary summarize(const PipelineConfig& cfg, const data::GriddedField& field) {
  Summary out;
  if (uses_eof(cfg.variant)) {
    out.eof = reduction::eof_fit(field, cfg.variance_target);
    out.reduced = reduction::eof_transform(*out.eof, field);
    return out;
  }
  out.features = variant_features(cfg, field, &out.depth2_locations);
  out.pca = reduction::pca_fit(*out.features, cfg.variance_target, cfg.standardize_features);
  out.reduced = reduction::pca_transform(*out.pca, out.features->values);
  return out;
}

std::size_t SpatialEncoder::width() const { return 2 + (basis ? basis->size() : 0); }

MatrixXd SpatialEncoder::encode(std::span<const data::LatLon> coords) const {
  MatrixXd out(static_cast<Index>(coords.size()), static_cast<Index>(width()));
  for (std::size_t i = 0; i < coords.size(); ++i) {
    out(static_cast<Index>(i), 0) = coords[i].lat;
    out(static_cast<Index>(i), 1) = coords[i].lon;
  }
  if (basis) {
    out.rightCols(static_cast<Index>(basis->size())) = spatialbasis::basis_matrix(coords, *basis);
  }
  return out;
}

SpatialEncoder make_encoder(const data::GriddedField& field, bool with_basis, const BasisConfig& cfg) {
  SpatialEncoder enc;
  enc.bbox = spatialbasis::BoundingBox::enclosing(field.coords);
  if (with_basis) {
    enc.basis = spatialbasis::build_basis(enc.bbox, cfg.base_knots_per_axis, cfg.n_resolutions);
  }
  return enc;
}

MatrixXd assemble_inputs(const MatrixXd& reduced, const MatrixXd& spatial,
                         std::span<const std::size_t> locations) {
  const Index S = reduced.rows();
  const auto L = static_cast<Index>(locations.size());
  MatrixXd x(S * L, reduced.cols() + spatial.cols());
  for (Index s = 0; s < S; ++s) {
    for (Index i = 0; i < L; ++i) {
      const Index r = s * L + i;
      x.row(r).head(reduced.cols()) = reduced.row(s);
      x.row(r).tail(spatial.cols()) = spatial.row(static_cast<Index>(locations[static_cast<std::size_t>(i)]));
    }
  }
  return x;
}

namespace {

neuralnet::MlpSpec network_spec(const NetworkConfig& net, std::size_t input_dim, std::size_t output_dim,
                                std::uint64_t seed) {
  neuralnet::MlpSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_widths = net.hidden;
  spec.output_dim = output_dim;
  spec.batch_norm.assign(net.hidden.size(), net.batch_norm);
  spec.output_activation = net.output_activation;
  spec.seed = seed;
  return spec;
}

// Fits input/target standardisation, then trains.
neuralnet::ModelBundle fit_bundle(const MatrixXd& x, const MatrixXd& y, const neuralnet::MaskMatrix* mask,
                                  Index summary_cols, const SpatialEncoder& encoder,
                                  const NetworkConfig& net, std::uint64_t init_seed,
                                  std::uint64_t shuffle_seed) {
  neuralnet::ModelBundle b;
  const Index F = x.cols();
  b.input_shift = Eigen::RowVectorXd::Zero(F);
  b.input_scale = Eigen::RowVectorXd::Ones(F);
  for (Index c = 0; c < summary_cols; ++c) {
    const double mean = x.col(c).mean();
    const double sd = std::sqrt((x.col(c).array() - mean).square().mean());
    b.input_shift(c) = mean;
    b.input_scale(c) = sd > 1e-12 ? sd : 1.0;
  }
  const double lat_ext = encoder.bbox.lat_max - encoder.bbox.lat_min;
  const double lon_ext = encoder.bbox.lon_max - encoder.bbox.lon_min;
  b.input_shift(summary_cols) = encoder.bbox.lat_min;
  b.input_scale(summary_cols) = lat_ext > 0.0 ? lat_ext : 1.0;
  b.input_shift(summary_cols + 1) = encoder.bbox.lon_min;
  b.input_scale(summary_cols + 1) = lon_ext > 0.0 ? lon_ext : 1.0;

  double sum = 0.0, count = 0.0;
  for (Index j = 0; j < y.cols(); ++j) {
    for (Index i = 0; i < y.rows(); ++i) {
      if (!mask || (*mask)(i, j)) {
        sum += y(i, j);
        count += 1.0;
      }
    }
  }
  if (count == 0.0) throw DataError("every training target is masked");
  const double mean = sum / count;
  double ss = 0.0;
  for (Index j = 0; j < y.cols(); ++j) {
    for (Index i = 0; i < y.rows(); ++i) {
      if (!mask || (*mask)(i, j)) ss += (y(i, j) - mean) * (y(i, j) - mean);
    }
  }
  const double sd = std::sqrt(ss / count);
  // Constant targets: the bundle predicts the constant and the network
  // trains on zeros.
  const bool constant = sd <= 1e-12 * std::max(1.0, std::abs(mean));
  b.target_shift = mean;
  b.target_scale = constant ? 0.0 : sd;

  const MatrixXd xz = (x.rowwise() - b.input_shift).array().rowwise() / b.input_scale.array();
  MatrixXd yz = constant ? MatrixXd::Zero(y.rows(), y.cols()) : MatrixXd((y.array() - b.target_shift) / sd);
  if (mask) yz = (mask->array() != 0).select(yz, 0.0);

  b.net = neuralnet::mlp_init(network_spec(net, static_cast<std::size_t>(F),
                                           static_cast<std::size_t>(y.cols()), init_seed));
  auto train = net.train;
  train.shuffle_seed = shuffle_seed;
  b.loss_trace = neuralnet::mlp_train(b.net, xz, yz, train, mask);
  return b;
}

}  // namespace

neuralnet::ModelBundle train_reconstruction(const MatrixXd& reduced, const data::GriddedField& field,
                                            std::span<const std::size_t> subset,
                                            const SpatialEncoder& encoder, const NetworkConfig& net,
                                            std::uint64_t init_seed, std::uint64_t shuffle_seed) {
  if (subset.empty()) throw ConfigError("reconstruction needs a non-empty training subset");
  if (static_cast<std::size_t>(reduced.rows()) != field.samples()) {
    throw DataError("summary rows do not match field samples");
  }
  const MatrixXd spatial = encoder.encode(field.coords);
  const MatrixXd x = assemble_inputs(reduced, spatial, subset);
  const auto T = static_cast<Index>(field.steps());
  const auto L = static_cast<Index>(subset.size());
  MatrixXd y(x.rows(), T);
  for (Index s = 0; s < reduced.rows(); ++s) {
    for (Index i = 0; i < L; ++i) {
      const auto g = subset[static_cast<std::size_t>(i)];
      for (Index t = 0; t < T; ++t) {
        y(s * L + i, t) = field.values(static_cast<std::size_t>(s), static_cast<std::size_t>(t), g);
      }
    }
  }
  return fit_bundle(x, y, nullptr, reduced.cols(), encoder, net, init_seed, shuffle_seed);
}

data::GriddedField predict_field(const neuralnet::ModelBundle& model, const MatrixXd& reduced,
                                 const data::GriddedField& like, const SpatialEncoder& encoder) {
  if (static_cast<std::size_t>(reduced.rows()) != like.samples()) {
    throw DataError("summary rows do not match field samples");
  }
  if (model.net.spec.output_dim != like.steps()) {
    throw DataError("network output size does not match the field's time window");
  }
  const MatrixXd spatial = encoder.encode(like.coords);
  data::GriddedField out = like;
  const std::size_t D = like.locations(), T = like.steps();
  std::vector<std::size_t> all(D);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (Index s = 0; s < reduced.rows(); ++s) {
    const MatrixXd x = assemble_inputs(reduced.row(s), spatial, all);
    const MatrixXd pred = model.predict(x);
    for (std::size_t g = 0; g < D; ++g) {
      for (std::size_t t = 0; t < T; ++t) {
        out.values(static_cast<std::size_t>(s), t, g) = pred(static_cast<Index>(g), static_cast<Index>(t));
      }
    }
  }
  return out;
}

data::GriddedField reconstruct_full(const neuralnet::ModelBundle& model, const MatrixXd& reduced,
                                    const data::GriddedField& like, const SpatialEncoder& encoder) {
  return predict_field(model, reduced, like, encoder);
}

CorrectionTargets compute_corrections(const data::StationSeries& stations, const data::GriddedField& recon,
                                      const data::NearestMap& nearest) {
  if (stations.samples() != recon.samples() || stations.steps() != recon.steps()) {
    throw DataError("station series and reconstruction have different sample/time layouts");
  }
  const std::size_t S = stations.samples(), T = stations.steps(), P = stations.stations();
  CorrectionTargets out{Cube<double>(S, T, P, 0.0), stations.mask};
  for (std::size_t p = 0; p < P; ++p) {
    const auto g = nearest.gridpoint_of(p);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t t = 0; t < T; ++t) {
        if (stations.present(s, t, p)) out.values(s, t, p) = stations.values(s, t, p) - recon.values(s, t, g);
      }
    }
  }
  return out;
}

neuralnet::ModelBundle train_station_network(const MatrixXd& reduced, const Cube<double>& targets,
                                             const Cube<std::uint8_t>& mask,
                                             std::span<const data::LatLon> station_coords,
                                             std::span<const std::size_t> retained,
                                             const SpatialEncoder& encoder, const NetworkConfig& net,
                                             std::uint64_t init_seed, std::uint64_t shuffle_seed) {
  if (retained.empty()) throw DataError("no station survives the missing-data filter");
  if (static_cast<std::size_t>(reduced.rows()) != targets.samples()) {
    throw DataError("summary rows do not match station samples");
  }
  const MatrixXd spatial = encoder.encode(station_coords);
  const MatrixXd x = assemble_inputs(reduced, spatial, retained);
  const auto T = static_cast<Index>(targets.steps());
  const auto L = static_cast<Index>(retained.size());
  MatrixXd y(x.rows(), T);
  neuralnet::MaskMatrix m(x.rows(), T);
  for (Index s = 0; s < reduced.rows(); ++s) {
    for (Index i = 0; i < L; ++i) {
      const auto p = retained[static_cast<std::size_t>(i)];
      for (Index t = 0; t < T; ++t) {
        const auto ss = static_cast<std::size_t>(s), tt = static_cast<std::size_t>(t);
        y(s * L + i, t) = targets(ss, tt, p);
        m(s * L + i, t) = mask(ss, tt, p) ? 1 : 0;
      }
    }
  }
  return fit_bundle(x, y, &m, reduced.cols(), encoder, net, init_seed, shuffle_seed);
}

neuralnet::ModelBundle train_corrective(const MatrixXd& reduced, const CorrectionTargets& targets,
                                        const data::StationSeries& stations,
                                        std::span<const std::size_t> retained,
                                        const SpatialEncoder& encoder, const NetworkConfig& net,
                                        std::uint64_t init_seed, std::uint64_t shuffle_seed) {
  return train_station_network(reduced, targets.values, targets.mask, stations.coords, retained, encoder,
                               net, init_seed, shuffle_seed);
}

CorrectionResult apply_corrections(const data::GriddedField& recon, const neuralnet::ModelBundle& corrective,
                                   const MatrixXd& reduced, const SpatialEncoder& encoder) {
  CorrectionResult out;
  out.recon_field = recon;
  out.corrections = predict_field(corrective, reduced, recon, encoder);
  out.corrections.variable_name = recon.variable_name + "_correction";
  out.corrected_field = recon;
  auto dst = out.corrected_field.values.flat();
  const auto add = out.corrections.values.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += add[i];
  return out;
}

VariantResult run_variant(const PipelineConfig& cfg, const data::GriddedField& field,
                          const data::StationSeries& stations) {
  cfg.validate();
  field.validate();
  VariantResult out;
  out.variant = cfg.variant;
  out.summary = summarize(cfg, field);
  const auto encoder = make_encoder(field, uses_kriging_basis(cfg.variant), cfg.basis);
  out.nearest = data::nearest_gridpoints(stations, field);
  out.retained_stations = stations.retained(cfg.missing_threshold);
  const auto& reduced = out.summary.reduced;

  if (is_direct(cfg.variant)) {
    out.station_model = train_station_network(reduced, stations.values, stations.mask, stations.coords,
                                              out.retained_stations, encoder, cfg.reconstruction,
                                              cfg.init_seed, cfg.shuffle_seed);
    out.station_training_rows = field.samples() * out.retained_stations.size();
    out.direct_field = predict_field(*out.station_model, reduced, field, encoder);
    return out;
  }

  const auto subset = select_training_gridpoints(field.locations(), cfg.x_percent, cfg.subset_seed);
  out.reconstruction_model =
      train_reconstruction(reduced, field, subset, encoder, cfg.reconstruction, cfg.init_seed, cfg.shuffle_seed);
  const auto recon = reconstruct_full(*out.reconstruction_model, reduced, field, encoder);
  const auto targets = compute_corrections(stations, recon, out.nearest);
  out.station_model = train_corrective(reduced, targets, stations, out.retained_stations, encoder,
                                       cfg.corrective, cfg.init_seed + 1, cfg.shuffle_seed + 1);
  out.station_training_rows = field.samples() * out.retained_stations.size();
  auto result = apply_corrections(recon, *out.station_model, reduced, encoder);
  result.nearest = out.nearest;
  result.training_subset = subset;
  out.correction = std::move(result);
  return out;
}

std::vector<SweepRow> sensitivity_sweep(std::span<const double> x_values, std::size_t repeats,
                                        const PipelineConfig& cfg, const data::GriddedField& field,
                                        const Summary* summary) {
  if (repeats < 1) throw ConfigError("sweep needs at least one repeat");
  if (is_direct(cfg.variant)) throw ConfigError("the sweep reconstructs the model field; pick a non-direct variant");
  Summary own;
  if (!summary) {
    own = summarize(cfg, field);
    summary = &own;
  }
  const auto encoder = make_encoder(field, uses_kriging_basis(cfg.variant), cfg.basis);
  std::vector<SweepRow> rows;
  for (double x : x_values) {
    SweepRow row;
    row.x_percent = x;
    row.gridpoints = training_count(field.locations(), x);
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto subset = select_training_gridpoints(field.locations(), x, cfg.subset_seed + r);
      const auto model = train_reconstruction(summary->reduced, field, subset, encoder, cfg.reconstruction,
                                              cfg.init_seed + r, cfg.shuffle_seed + r);
      const auto recon = reconstruct_full(model, summary->reduced, field, encoder);
      row.pct_rmse.push_back(evaluate::pct_rmse(recon.values.flat(), field.values.flat()));
    }
    const double n = static_cast<double>(row.pct_rmse.size());
    row.mean = std::accumulate(row.pct_rmse.begin(), row.pct_rmse.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : row.pct_rmse) ss += (v - row.mean) * (v - row.mean);
    row.std_dev = row.pct_rmse.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace sigpca::pipeline
