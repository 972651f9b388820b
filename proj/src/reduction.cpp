#include "sigpca/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SVD>

#include "sigpca/container.hpp"
#include "sigpca/error.hpp"

namespace sigpca::reduction {

std::size_t truncation_rank(std::span<const double> eigenvalues, double target) {
  if (!(target > 0.0 && target <= 1.0)) {
    throw ConfigError("variance target must lie in (0, 1]");
  }
  const double total = std::accumulate(eigenvalues.begin(), eigenvalues.end(), 0.0);
  if (!(total > 0.0)) {
    throw DataError("zero total variance");
  }
  std::size_t positive = 0;
  for (double e : eigenvalues) positive += e > 0.0 ? 1 : 0;
  double cumulative = 0.0;
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
    cumulative += eigenvalues[k];
    if (cumulative / total >= target) return k + 1;
  }
  // Only reachable through rounding when target is 1.
  return std::max<std::size_t>(positive, 1);
}

PcaModel pca_fit(const Eigen::MatrixXd& rows, double variance_target, bool standardize) {
  const auto S = rows.rows();
  const auto F = rows.cols();
  if (S < 2) {
    throw DataError("PCA needs at least 2 samples");
  }
  if (!(variance_target > 0.0 && variance_target <= 1.0)) {
    throw ConfigError("variance target must lie in (0, 1]");
  }
  PcaModel model;
  model.variance_target = variance_target;
  model.mean = rows.colwise().mean().transpose();
  Eigen::MatrixXd centred = rows.rowwise() - model.mean.transpose();
  model.scale = Eigen::VectorXd::Ones(F);
  if (standardize) {
    for (Eigen::Index c = 0; c < F; ++c) {
      const double sd = std::sqrt(centred.col(c).squaredNorm() / static_cast<double>(S - 1));
      if (sd > 0.0) {
        model.scale(c) = sd;
        centred.col(c) /= sd;
      }
    }
  }
  const double total = centred.squaredNorm() / static_cast<double>(S - 1);
  if (!(total > 0.0)) {
    throw DataError("PCA input has zero total variance (all columns constant)");
  }
  model.total_variance = total;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  model.spectrum = sv.array().square() / static_cast<double>(S - 1);

  const std::size_t k = truncation_rank(
      std::span<const double>(model.spectrum.data(), static_cast<std::size_t>(model.spectrum.size())),
      variance_target);
  const auto kk = static_cast<Eigen::Index>(k);
  model.eigenvalues = model.spectrum.head(kk);
  model.loadings = svd.matrixV().leftCols(kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    Eigen::Index arg = 0;
    model.loadings.col(c).cwiseAbs().maxCoeff(&arg);
    if (model.loadings(arg, c) < 0.0) model.loadings.col(c) *= -1.0;
  }
  return model;
}

PcaModel pca_fit(const signatures::FeatureMatrix& features, double variance_target, bool standardize) {
  return pca_fit(features.values, variance_target, standardize);
}

Eigen::MatrixXd pca_transform(const PcaModel& model, const Eigen::MatrixXd& rows) {
  if (static_cast<std::size_t>(rows.cols()) != model.features()) {
    throw DataError("pca_transform: input has " + std::to_string(rows.cols()) +
                    " columns, model expects " + std::to_string(model.features()));
  }
  Eigen::MatrixXd z = rows.rowwise() - model.mean.transpose();
  z = z.array().rowwise() / model.scale.transpose().array();
  return z * model.loadings;
}

Eigen::MatrixXd pca_inverse(const PcaModel& model, const Eigen::MatrixXd& scores) {
  if (static_cast<std::size_t>(scores.cols()) != model.components()) {
    throw DataError("pca_inverse: score width does not match component count");
  }
  Eigen::MatrixXd z = scores * model.loadings.transpose();
  z = z.array().rowwise() * model.scale.transpose().array();
  return z.rowwise() + model.mean.transpose();
}

LocationRanking top_locations(const PcaModel& model,
                              const std::vector<signatures::ColumnDesc>& columns,
                              std::size_t n_locations, std::size_t m) {
  if (m == 0) {
    throw ConfigError("top_locations: m must be positive");
  }
  if (m > n_locations) {
    throw ConfigError("top_locations: m exceeds the number of locations");
  }
  if (columns.size() != model.features()) {
    throw DataError("top_locations: descriptor count does not match model features");
  }
  LocationRanking r;
  r.scores.assign(n_locations, 0.0);
  const Eigen::VectorXd ratio = model.explained_ratio();
  const Eigen::VectorXd weight = model.loadings.array().square().matrix() * ratio;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& ch = columns[c].channels;
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (ch[i] == signatures::kTimeChannel) continue;
      if (std::find(ch.begin(), ch.begin() + static_cast<std::ptrdiff_t>(i), ch[i]) !=
          ch.begin() + static_cast<std::ptrdiff_t>(i)) {
        continue;  // count a location once per column
      }
      const auto g = static_cast<std::size_t>(ch[i]);
      if (g >= n_locations) {
        throw DataError("top_locations: column refers to location " + std::to_string(g));
      }
      r.scores[g] += weight(static_cast<Eigen::Index>(c));
    }
  }
  // Rounded keys keep near-identical scores in index order.
  std::vector<double> key(n_locations);
  for (std::size_t g = 0; g < n_locations; ++g) key[g] = std::round(r.scores[g] * 1e12);
  r.order.resize(n_locations);
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  r.top.assign(r.order.begin(), r.order.begin() + static_cast<std::ptrdiff_t>(m));
  return r;
}

Eigen::MatrixXd flatten_field(const data::GriddedField& field) {
  const auto S = static_cast<Eigen::Index>(field.samples());
  const auto width = static_cast<Eigen::Index>(field.steps() * field.locations());
  return Eigen::Map<const container::RowMatrix>(field.values.flat().data(), S, width);
}

EofModel eof_fit(const data::GriddedField& field, double variance_target) {
  EofModel m;
  m.pca = pca_fit(flatten_field(field), variance_target);
  m.steps = field.steps();
  m.locations = field.locations();
  return m;
}

Eigen::MatrixXd eof_transform(const EofModel& model, const data::GriddedField& field) {
  if (field.steps() != model.steps || field.locations() != model.locations) {
    throw DataError("eof_transform: field shape does not match the fitted model");
  }
  return pca_transform(model.pca, flatten_field(field));
}

namespace {

void put_pca(container::Archive& a, const PcaModel& m) {
  a.meta()["variance_target"] = m.variance_target;
  a.meta()["total_variance"] = m.total_variance;
  a.put("mean", std::span<const double>(m.mean.data(), static_cast<std::size_t>(m.mean.size())));
  a.put("scale", std::span<const double>(m.scale.data(), static_cast<std::size_t>(m.scale.size())));
  a.put("loadings", m.loadings);
  a.put("eigenvalues",
        std::span<const double>(m.eigenvalues.data(), static_cast<std::size_t>(m.eigenvalues.size())));
  a.put("spectrum",
        std::span<const double>(m.spectrum.data(), static_cast<std::size_t>(m.spectrum.size())));
}

Eigen::VectorXd as_vector(const container::Archive& a, const std::string& name) {
  const auto v = a.vector(name);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

PcaModel get_pca(const container::Archive& a) {
  PcaModel m;
  m.variance_target = a.meta().at("variance_target").get<double>();
  m.total_variance = a.meta().at("total_variance").get<double>();
  m.mean = as_vector(a, "mean");
  m.scale = as_vector(a, "scale");
  m.loadings = a.matrix("loadings");
  m.eigenvalues = as_vector(a, "eigenvalues");
  m.spectrum = as_vector(a, "spectrum");
  return m;
}

}  // namespace

void save_pca(const PcaModel& model, const std::filesystem::path& dir) {
  container::Archive a("pca_model");
  put_pca(a, model);
  a.save(dir);
}

PcaModel load_pca(const std::filesystem::path& dir) {
  return get_pca(container::Archive::load(dir, "pca_model"));
}

void save_eof(const EofModel& model, const std::filesystem::path& dir) {
  container::Archive a("eof_model");
  put_pca(a, model.pca);
  a.meta()["steps"] = model.steps;
  a.meta()["locations"] = model.locations;
  a.save(dir);
}

EofModel load_eof(const std::filesystem::path& dir) {
  const auto a = container::Archive::load(dir, "eof_model");
  EofModel m;
  m.pca = get_pca(a);
  m.steps = a.meta().at("steps").get<std::size_t>();
  m.locations = a.meta().at("locations").get<std::size_t>();
  return m;
}

}  // namespace sigpca::reduction
