#include "sigpca/cli.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fftw3.h>

#include "sigpca/container.hpp"
#include "sigpca/error.hpp"
#include "sigpca/neuralnet.hpp"
#include "sigpca/reduction.hpp"
#include "sigpca/signatures.hpp"
#include "sigpca/spatialbasis.hpp"

namespace sigpca::cli {

using nlohmann::json;
using pipeline::Variant;

namespace {

constexpr const char* kVersion = "1.0.0";

// Reads keys from one JSON object and reports the ones nobody asked for.
class Reader {
public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name(key) + " has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  std::string name(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown configuration key '" + name(key.c_str()) + "'");
    }
  }

private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

neuralnet::OutputActivation parse_activation(const std::string& s, const std::string& where) {
  if (s == "identity") return neuralnet::OutputActivation::identity;
  if (s == "relu") return neuralnet::OutputActivation::relu;
  throw ConfigError(where + " must be 'identity' or 'relu'");
}

void parse_network(const json& j, const std::string& where, pipeline::NetworkConfig& net) {
  Reader r(j, where);
  r.get("hidden", net.hidden);
  r.get("batch_norm", net.batch_norm);
  std::string act = net.output_activation == neuralnet::OutputActivation::relu ? "relu" : "identity";
  r.get("output_activation", act);
  net.output_activation = parse_activation(act, r.name("output_activation"));
  r.get("epochs", net.train.epochs);
  r.get("learning_rate", net.train.learning_rate);
  r.get("batch_size", net.train.batch_size);
  r.finish();
}

json network_json(const pipeline::NetworkConfig& net) {
  return {{"hidden", net.hidden},
          {"batch_norm", net.batch_norm},
          {"output_activation", net.output_activation == neuralnet::OutputActivation::relu ? "relu" : "identity"},
          {"epochs", net.train.epochs},
          {"learning_rate", net.train.learning_rate},
          {"batch_size", net.train.batch_size}};
}

void parse_synthetic(const json& j, data::SyntheticSpec& s) {
  Reader r(j, "synthetic");
  r.get("seed", s.seed);
  r.get("samples", s.samples);
  r.get("steps", s.steps);
  r.get("grid_rows", s.grid_rows);
  r.get("grid_cols", s.grid_cols);
  r.get("lat_min", s.lat_min);
  r.get("lat_max", s.lat_max);
  r.get("lon_min", s.lon_min);
  r.get("lon_max", s.lon_max);
  r.get("n_stations", s.n_stations);
  r.get("step_hours", s.step_hours);
  r.get("start", s.start);
  r.get("base_level", s.base_level);
  r.get("diurnal_amplitude", s.diurnal_amplitude);
  r.get("synoptic_amplitude", s.synoptic_amplitude);
  r.get("seasonal_amplitude", s.seasonal_amplitude);
  r.get("bias_amplitude", s.bias_amplitude);
  r.get("noise_sigma", s.noise_sigma);
  r.get("noise_phi", s.noise_phi);
  r.get("obs_noise_sigma", s.obs_noise_sigma);
  r.get("missing_probability", s.missing_probability);
  r.finish();
}

json synthetic_json(const data::SyntheticSpec& s) {
  return {{"seed", s.seed},
          {"samples", s.samples},
          {"steps", s.steps},
          {"grid_rows", s.grid_rows},
          {"grid_cols", s.grid_cols},
          {"lat_min", s.lat_min},
          {"lat_max", s.lat_max},
          {"lon_min", s.lon_min},
          {"lon_max", s.lon_max},
          {"n_stations", s.n_stations},
          {"step_hours", s.step_hours},
          {"start", s.start},
          {"base_level", s.base_level},
          {"diurnal_amplitude", s.diurnal_amplitude},
          {"synoptic_amplitude", s.synoptic_amplitude},
          {"seasonal_amplitude", s.seasonal_amplitude},
          {"bias_amplitude", s.bias_amplitude},
          {"noise_sigma", s.noise_sigma},
          {"noise_phi", s.noise_phi},
          {"obs_noise_sigma", s.obs_noise_sigma},
          {"missing_probability", s.missing_probability}};
}

}  // namespace

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  auto& p = cfg.pipeline;
  Reader r(j, "");
  if (r.has("data")) {
    Reader d(r.at("data"), "data");
    std::string dir = cfg.data_dir.string();
    d.get("dir", dir);
    cfg.data_dir = dir;
    d.finish();
  }
  std::string out = cfg.out_dir.string();
  r.get("out", out);
  cfg.out_dir = out;
  if (r.has("variants")) {
    std::vector<std::string> names;
    r.get("variants", names);
    if (names.empty()) throw ConfigError("variants must name at least one variant");
    cfg.variants.clear();
    for (const auto& n : names) cfg.variants.push_back(pipeline::parse_variant(n));
  }
  r.get("threads", p.threads);
  if (r.has("seeds")) {
    Reader s(r.at("seeds"), "seeds");
    s.get("subset", p.subset_seed);
    s.get("init", p.init_seed);
    s.get("shuffle", p.shuffle_seed);
    s.finish();
  }
  if (r.has("signature")) {
    Reader s(r.at("signature"), "signature");
    s.get("window_depth", p.signature.window_depth);
    s.get("basepoint", p.signature.basepoint);
    s.get("time_augment", p.signature.time_augment);
    s.get("keep_time_features", p.signature.keep_time_features);
    s.get("depth2_top_m", p.depth2_top_m);
    s.finish();
  }
  if (r.has("pca")) {
    Reader s(r.at("pca"), "pca");
    s.get("variance_target", p.variance_target);
    s.get("standardize", p.standardize_features);
    s.finish();
  }
  r.get("x_percent", p.x_percent);
  r.get("missing_threshold", p.missing_threshold);
  if (r.has("basis")) {
    Reader s(r.at("basis"), "basis");
    s.get("base_knots_per_axis", p.basis.base_knots_per_axis);
    s.get("n_resolutions", p.basis.n_resolutions);
    s.finish();
  }
  if (r.has("reconstruction")) parse_network(r.at("reconstruction"), "reconstruction", p.reconstruction);
  if (r.has("corrective")) parse_network(r.at("corrective"), "corrective", p.corrective);
  if (r.has("evaluate")) {
    Reader s(r.at("evaluate"), "evaluate");
    s.get("enabled", cfg.evaluate);
    s.get("max_pairs", cfg.eval.max_pairs);
    s.get("seed", cfg.eval.seed);
    s.get("n_quantiles", cfg.eval.n_quantiles);
    s.get("spectrum_stations", cfg.eval.spectrum_stations);
    s.get("sample_interval_hours", cfg.eval.sample_interval_hours);
    s.get("welch", cfg.eval.spectrum.welch);
    s.get("welch_segment", cfg.eval.spectrum.welch_segment);
    s.finish();
  }
  if (r.has("sweep")) {
    Reader s(r.at("sweep"), "sweep");
    s.get("x", cfg.sweep_x);
    s.get("repeats", cfg.sweep_repeats);
    s.finish();
  }
  if (r.has("synthetic")) parse_synthetic(r.at("synthetic"), cfg.synthetic);
  r.finish();
  cfg.eval.missing_threshold = p.missing_threshold;
  p.validate();
  return cfg;
}

RunConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read configuration " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("configuration " + file.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& cfg) {
  const auto& p = cfg.pipeline;
  json variants = json::array();
  for (auto v : cfg.variants) variants.push_back(pipeline::to_string(v));
  return {{"data", {{"dir", cfg.data_dir.string()}}},
          {"out", cfg.out_dir.string()},
          {"variants", variants},
          {"threads", p.threads},
          {"seeds", {{"subset", p.subset_seed}, {"init", p.init_seed}, {"shuffle", p.shuffle_seed}}},
          {"signature",
           {{"window_depth", p.signature.window_depth},
            {"basepoint", p.signature.basepoint},
            {"time_augment", p.signature.time_augment},
            {"keep_time_features", p.signature.keep_time_features},
            {"depth2_top_m", p.depth2_top_m}}},
          {"pca", {{"variance_target", p.variance_target}, {"standardize", p.standardize_features}}},
          {"x_percent", p.x_percent},
          {"missing_threshold", p.missing_threshold},
          {"basis", {{"base_knots_per_axis", p.basis.base_knots_per_axis}, {"n_resolutions", p.basis.n_resolutions}}},
          {"reconstruction", network_json(p.reconstruction)},
          {"corrective", network_json(p.corrective)},
          {"evaluate",
           {{"enabled", cfg.evaluate},
            {"max_pairs", cfg.eval.max_pairs},
            {"seed", cfg.eval.seed},
            {"n_quantiles", cfg.eval.n_quantiles},
            {"spectrum_stations", cfg.eval.spectrum_stations},
            {"sample_interval_hours", cfg.eval.sample_interval_hours},
            {"welch", cfg.eval.spectrum.welch},
            {"welch_segment", cfg.eval.spectrum.welch_segment}}},
          {"sweep", {{"x", cfg.sweep_x}, {"repeats", cfg.sweep_repeats}}},
          {"synthetic", synthetic_json(cfg.synthetic)}};
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.pipeline.subset_seed = seed;
  cfg.pipeline.init_seed = seed + 1;
  cfg.pipeline.shuffle_seed = seed + 2;
}

fs::path variant_dir(const RunConfig& cfg, Variant v) { return cfg.out_dir / pipeline::to_string(v); }

void cmd_synth(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto d = data::generate_synthetic(cfg.synthetic);
  data::save_field(d.model, out / "field");
  data::save_stations(d.stations, out / "stations");
  data::save_field(d.truth, out / "truth");
  log << "synth: wrote " << d.model.samples() << " samples x " << d.model.steps() << " steps, "
      << d.model.locations() << " gridpoints, " << d.stations.stations() << " stations to " << out.string()
      << '\n';
}

namespace {

struct Paths {
  fs::path dir;
  fs::path features() const { return dir / "features"; }
  fs::path pca() const { return dir / "pca"; }
  fs::path eof() const { return dir / "eof"; }
  fs::path reduced() const { return dir / "reduced"; }
  fs::path basis() const { return dir / "basis"; }
  fs::path recon_model() const { return dir / "recon_model"; }
  fs::path recon() const { return dir / "recon"; }
  fs::path subset() const { return dir / "training_subset.json"; }
  fs::path nearest() const { return dir / "nearest.json"; }
  fs::path corr_model() const { return dir / "corr_model"; }
  fs::path corrections() const { return dir / "corrections"; }
  fs::path corrected() const { return dir / "corrected"; }
  fs::path provenance() const { return dir / "provenance.json"; }
};

void require(const fs::path& p, const std::string& made_by) {
  if (!fs::exists(p)) {
    throw DataError("missing artifact " + p.string() + " (produced by the '" + made_by + "' stage)");
  }
}

data::GriddedField load_model_field(const RunConfig& cfg) {
  const auto p = cfg.data_dir / "field";
  if (!fs::exists(p)) throw DataError("missing input " + p.string());
  return data::load_field(p);
}

data::StationSeries load_station_input(const RunConfig& cfg) {
  const auto p = cfg.data_dir / "stations";
  if (!fs::exists(p)) throw DataError("missing input " + p.string());
  return data::load_stations(p);
}

pipeline::PipelineConfig variant_config(const RunConfig& cfg, Variant v) {
  auto p = cfg.pipeline;
  p.variant = v;
  return p;
}

std::string feature_cache_key(const pipeline::PipelineConfig& p, const data::GriddedField& field) {
  json key = {{"variant", pipeline::to_string(p.variant)},
              {"window_depth", p.signature.window_depth},
              {"basepoint", p.signature.basepoint},
              {"time_augment", p.signature.time_augment},
              {"keep_time_features", p.signature.keep_time_features}};
  if (p.variant == Variant::sigpca2_dk) {
    key["variance_target"] = p.variance_target;
    key["standardize"] = p.standardize_features;
    key["depth2_top_m"] = p.depth2_top_m;
  }
  auto h = container::fnv1a(key.dump());
  h = container::fnv1a(field.values.flat(), h);
  return container::hex64(h);
}

void save_reduced(const Eigen::MatrixXd& reduced, const fs::path& dir, Variant v) {
  container::Archive a("summary_statistics");
  a.meta()["variant"] = pipeline::to_string(v);
  a.put("reduced", reduced);
  a.save(dir);
}

Eigen::MatrixXd load_reduced(const fs::path& dir) {
  return container::Archive::load(dir, "summary_statistics").matrix("reduced");
}

void save_indices(const std::vector<std::size_t>& idx, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out << json(idx).dump() << '\n';
}

void write_provenance(const RunConfig& cfg, Variant v, const std::string& stage) {
  const Paths paths{variant_dir(cfg, v)};
  json prov;
  if (fs::exists(paths.provenance())) {
    std::ifstream in(paths.provenance());
    try {
      prov = json::parse(in);
    } catch (const json::exception&) {
      prov = json::object();
    }
  }
  const auto p = variant_config(cfg, v);
  const json config = to_json(cfg);
  prov["tool"] = "sigpca";
  prov["version"] = kVersion;
  prov["variant"] = pipeline::to_string(v);
  prov["config"] = config;
  prov["config_hash"] = container::hex64(container::fnv1a(config.dump()));
  prov["seeds"] = {{"subset", p.subset_seed},
                   {"reconstruction_init", p.init_seed},
                   {"reconstruction_shuffle", p.shuffle_seed},
                   {"corrective_init", p.init_seed + 1},
                   {"corrective_shuffle", p.shuffle_seed + 1}};
  prov["threads"] = p.threads;
  prov["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                     "." + std::to_string(EIGEN_MINOR_VERSION)},
                       {"fftw", std::string(fftw_version)},
                       {"compiler", std::string(__VERSION__)}};
  for (const char* input : {"field", "stations"}) {
    const auto blob = cfg.data_dir / input / container::kBlobName;
    if (fs::exists(blob)) {
      std::ifstream in(blob, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      prov["inputs"][input] = container::hex64(container::fnv1a(bytes));
    }
  }
  auto& stages = prov["stages"];
  if (!stages.is_array()) stages = json::array();
  if (std::find(stages.begin(), stages.end(), stage) == stages.end()) stages.push_back(stage);
  std::ofstream out(paths.provenance());
  out << prov.dump(2) << '\n';
}

void stage_signatures(const RunConfig& cfg, Variant v, std::ostream& log) {
  const Paths paths{variant_dir(cfg, v)};
  if (pipeline::uses_eof(v)) {
    log << "signatures: " << pipeline::to_string(v) << " reduces the raw field, nothing to compute\n";
    return;
  }
  const auto field = load_model_field(cfg);
  const auto p = variant_config(cfg, v);
  const auto key = feature_cache_key(p, field);
  if (fs::exists(paths.features() / container::kManifestName)) {
    const auto manifest = container::read_manifest(paths.features());
    if (manifest.value("meta", json::object()).value("cache_key", "") == key) {
      log << "signatures: cached features match key " << key << ", skipping\n";
      return;
    }
  }
  std::vector<std::size_t> top;
  const auto features = pipeline::variant_features(p, field, &top);
  json meta = {{"cache_key", key}, {"variant", pipeline::to_string(v)}};
  if (v == Variant::sigpca2_dk) meta["depth2_locations"] = top;
  signatures::save_features(features, paths.features(), meta);
  log << "signatures: " << features.rows() << " x " << features.cols() << " features\n";
}

void stage_reduce(const RunConfig& cfg, Variant v, std::ostream& log) {
  const Paths paths{variant_dir(cfg, v)};
  const auto p = variant_config(cfg, v);
  Eigen::MatrixXd reduced;
  if (pipeline::uses_eof(v)) {
    const auto field = load_model_field(cfg);
    const auto eof = reduction::eof_fit(field, p.variance_target);
    reduced = reduction::eof_transform(eof, field);
    reduction::save_eof(eof, paths.eof());
  } else {
    require(paths.features(), "signatures");
    const auto features = signatures::load_features(paths.features());
    const auto pca = reduction::pca_fit(features, p.variance_target, p.standardize_features);
    reduced = reduction::pca_transform(pca, features.values);
    reduction::save_pca(pca, paths.pca());
  }
  save_reduced(reduced, paths.reduced(), v);
  log << "reduce: kept " << reduced.cols() << " components\n";
}

pipeline::SpatialEncoder encoder_for(const RunConfig& cfg, Variant v, const data::GriddedField& field) {
  return pipeline::make_encoder(field, pipeline::uses_kriging_basis(v), cfg.pipeline.basis);
}

void stage_train_recon(const RunConfig& cfg, Variant v, std::ostream& log) {
  const Paths paths{variant_dir(cfg, v)};
  if (pipeline::is_direct(v)) {
    log << "train-recon: " << pipeline::to_string(v) << " trains on observations directly, nothing to do\n";
    return;
  }
  require(paths.reduced(), "reduce");
  const auto p = variant_config(cfg, v);
  const auto field = load_model_field(cfg);
  const auto reduced = load_reduced(paths.reduced());
  const auto encoder = encoder_for(cfg, v, field);
  if (encoder.basis) spatialbasis::save_basis(*encoder.basis, paths.basis());
  const auto subset = pipeline::select_training_gridpoints(field.locations(), p.x_percent, p.subset_seed);
  save_indices(subset, paths.subset());
  log << "train-recon: " << subset.size() << " training gridpoints (subset seed " << p.subset_seed << ")\n";
  const auto model =
      pipeline::train_reconstruction(reduced, field, subset, encoder, p.reconstruction, p.init_seed, p.shuffle_seed);
  neuralnet::save_bundle(model, paths.recon_model());
  log << "train-recon: final loss " << model.loss_trace.back() << '\n';
}

void stage_reconstruct(const RunConfig& cfg, Variant v, std::ostream& log) {
  const Paths paths{variant_dir(cfg, v)};
  if (pipeline::is_direct(v)) {
    log << "reconstruct: not used by " << pipeline::to_string(v) << '\n';
    return;
  }
  require(paths.reduced(), "reduce");
  require(paths.recon_model(), "train-recon");
  const auto field = load_model_field(cfg);
  const auto model = neuralnet::load_bundle(paths.recon_model());
  const auto recon =
      pipeline::reconstruct_full(model, load_reduced(paths.reduced()), field, encoder_for(cfg, v, field));
  data::save_field(recon, paths.recon());
  log << "reconstruct: %RMSE vs model field "
      << evaluate::pct_rmse(recon.values.flat(), field.values.flat()) << '\n';
}

void stage_train_correct(const RunConfig& cfg, Variant v, std::ostream& log) {
  const Paths paths{variant_dir(cfg, v)};
  require(paths.reduced(), "reduce");
  const auto p = variant_config(cfg, v);
  const auto field = load_model_field(cfg);
  const auto stations = load_station_input(cfg);
  const auto reduced = load_reduced(paths.reduced());
  const auto encoder = encoder_for(cfg, v, field);
  if (encoder.basis && !fs::exists(paths.basis())) spatialbasis::save_basis(*encoder.basis, paths.basis());
  const auto nearest = data::nearest_gridpoints(stations, field);
  data::save_nearest(nearest, paths.nearest());
  const auto retained = stations.retained(p.missing_threshold);
  log << "train-correct: " << retained.size() << " of " << stations.stations() << " stations retained\n";

  neuralnet::ModelBundle model;
  if (pipeline::is_direct(v)) {
    model = pipeline::train_station_network(reduced, stations.values, stations.mask, stations.coords, retained,
                                            encoder, p.reconstruction, p.init_seed, p.shuffle_seed);
  } else {
    require(paths.recon(), "reconstruct");
    const auto recon = data::load_field(paths.recon());
    const auto targets = pipeline::compute_corrections(stations, recon, nearest);
    model = pipeline::train_corrective(reduced, targets, stations, retained, encoder, p.corrective, p.init_seed + 1,
                                       p.shuffle_seed + 1);
  }
  neuralnet::save_bundle(model, paths.corr_model());
  log << "train-correct: final loss " << model.loss_trace.back() << '\n';
}

void stage_correct(const RunConfig& cfg, Variant v, std::ostream& log) {
  const Paths paths{variant_dir(cfg, v)};
  require(paths.reduced(), "reduce");
  require(paths.corr_model(), "train-correct");
  const auto field = load_model_field(cfg);
  const auto reduced = load_reduced(paths.reduced());
  const auto model = neuralnet::load_bundle(paths.corr_model());
  const auto encoder = encoder_for(cfg, v, field);
  if (pipeline::is_direct(v)) {
    auto direct = pipeline::predict_field(model, reduced, field, encoder);
    direct.variable_name = field.variable_name + "_direct";
    data::save_field(direct, paths.corrected());
  } else {
    require(paths.recon(), "reconstruct");
    const auto result = pipeline::apply_corrections(data::load_field(paths.recon()), model, reduced, encoder);
    data::save_field(result.corrections, paths.corrections());
    data::save_field(result.corrected_field, paths.corrected());
  }
  log << "correct: wrote " << paths.corrected().string() << '\n';
}

void stage_evaluate(const RunConfig& cfg, Variant v, std::ostream& log) {
  const Paths paths{variant_dir(cfg, v)};
  require(paths.corrected(), "correct");
  require(paths.nearest(), "train-correct");
  const auto field = load_model_field(cfg);
  const auto stations = load_station_input(cfg);
  const auto nearest = data::load_nearest(paths.nearest());
  const auto corrected = data::load_field(paths.corrected());
  std::optional<data::GriddedField> recon, truth;
  if (fs::exists(paths.recon())) recon = data::load_field(paths.recon());
  if (fs::exists(cfg.data_dir / "truth")) truth = data::load_field(cfg.data_dir / "truth");

  evaluate::EvalInputs in;
  in.model = &field;
  in.stations = &stations;
  in.nearest = &nearest;
  in.corrected = &corrected;
  in.reconstruction = recon ? &*recon : nullptr;
  in.truth = truth ? &*truth : nullptr;
  in.corrected_label = pipeline::is_direct(v) ? "direct" : "corrected";
  auto opt = cfg.eval;
  opt.missing_threshold = cfg.pipeline.missing_threshold;
  const auto report = evaluate::evaluate(in, opt);
  evaluate::write_report(report, paths.dir);
  log << "evaluate: " << report.summary.dump() << '\n';
}

void stage_sweep(const RunConfig& cfg, Variant v, std::ostream& log) {
  const Paths paths{variant_dir(cfg, v)};
  require(paths.reduced(), "reduce");
  const auto p = variant_config(cfg, v);
  const auto field = load_model_field(cfg);
  pipeline::Summary summary;
  summary.reduced = load_reduced(paths.reduced());
  const auto rows = pipeline::sensitivity_sweep(cfg.sweep_x, cfg.sweep_repeats, p, field, &summary);
  std::ofstream out(paths.dir / "sweep.csv");
  if (!out) throw DataError("cannot write " + (paths.dir / "sweep.csv").string());
  out.precision(17);
  out << "x_percent,gridpoints,mean_pct_rmse,std_pct_rmse";
  for (std::size_t r = 0; r < cfg.sweep_repeats; ++r) out << ",run_" << r + 1;
  out << '\n';
  for (const auto& row : rows) {
    out << row.x_percent << ',' << row.gridpoints << ',' << row.mean << ',' << row.std_dev;
    for (double e : row.pct_rmse) out << ',' << e;
    out << '\n';
    log << "sweep: x=" << row.x_percent << "% mean %RMSE " << row.mean << " (sd " << row.std_dev << ")\n";
  }
}

}  // namespace

void cmd_stage(const std::string& stage, const RunConfig& cfg, Variant v, std::ostream& log) {
  fs::create_directories(variant_dir(cfg, v));
  try {
    if (stage == "signatures") {
      stage_signatures(cfg, v, log);
    } else if (stage == "reduce") {
      stage_reduce(cfg, v, log);
    } else if (stage == "train-recon") {
      stage_train_recon(cfg, v, log);
    } else if (stage == "reconstruct") {
      stage_reconstruct(cfg, v, log);
    } else if (stage == "train-correct") {
      stage_train_correct(cfg, v, log);
    } else if (stage == "correct") {
      stage_correct(cfg, v, log);
    } else if (stage == "evaluate") {
      stage_evaluate(cfg, v, log);
    } else if (stage == "sweep") {
      stage_sweep(cfg, v, log);
    } else {
      throw ConfigError("unknown stage '" + stage + "'");
    }
  } catch (const Error& e) {
    throw Error(e.category(), stage + " [" + pipeline::to_string(v) + "]: " + e.what());
  }
  write_provenance(cfg, v, stage);
}

void cmd_run(const RunConfig& cfg, std::ostream& log) {
  for (auto v : cfg.variants) {
    const auto& p = cfg.pipeline;
    log << "run: variant " << pipeline::to_string(v) << " subset_seed=" << p.subset_seed
        << " init_seed=" << p.init_seed << " shuffle_seed=" << p.shuffle_seed << " threads=" << p.threads << '\n';
    for (const auto& stage : stage_names()) {
      if (stage == "sweep") continue;
      if (stage == "evaluate" && !cfg.evaluate) continue;
      cmd_stage(stage, cfg, v, log);
    }
  }
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Signature-based reconstruction and observation correction of gridded model output", "sigpca"};
  app.fallthrough();
  app.require_subcommand(1);
  std::string config_path, out_dir, data_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::vector<std::string> variants;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out_dir, "output directory (dataset directory for synth)");
  app.add_option("--data", data_dir, "dataset directory holding field/, stations/ and truth/");
  app.add_option("--seed", seed, "base seed for subset selection, initialisation and shuffling");
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--variant", variants, "variant(s) to run; repeatable");

  app.add_subcommand("synth", "generate a synthetic dataset");
  app.add_subcommand("run", "run every stage for each configured variant");
  for (const auto& s : stage_names()) app.add_subcommand(s, "run the '" + s + "' stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    const int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? 0 : static_cast<int>(Error::Category::config);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg = config_path.empty() ? parse_config(json::object()) : load_config(config_path);
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    if (seed) apply_seed(cfg, *seed);
    if (threads) {
      if (*threads < 1) throw ConfigError("--threads must be >= 1");
      cfg.pipeline.threads = *threads;
    }
    if (!variants.empty()) {
      cfg.variants.clear();
      for (const auto& v : variants) cfg.variants.push_back(pipeline::parse_variant(v));
    }
    if (command == "synth") {
      cmd_synth(cfg, out_dir.empty() ? cfg.data_dir : fs::path(out_dir), err);
      return 0;
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (command == "run") {
      cmd_run(cfg, err);
    } else {
      for (auto v : cfg.variants) cmd_stage(command, cfg, v, err);
    }
    return 0;
  } catch (const Error& e) {
    err << "sigpca " << command << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "sigpca " << command << ": " << e.what() << '\n';
    return static_cast<int>(Error::Category::data);
  }
}

}  // namespace sigpca::cli
