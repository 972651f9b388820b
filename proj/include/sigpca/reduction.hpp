#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sigpca/data.hpp"
#include "sigpca/signatures.hpp"

namespace sigpca::reduction {

inline constexpr double kDefaultVarianceTarget = 0.995;

/// Principal components of a samples x features matrix.
///
/// `loadings` has orthonormal columns sorted by decreasing eigenvalue; the
/// largest-magnitude entry of each column is positive. `spectrum` keeps every
/// eigenvalue of the centred data so that explained-variance ratios of the
/// discarded directions remain available.
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // all ones unless fitted with standardisation
  Eigen::MatrixXd loadings;
  Eigen::VectorXd eigenvalues;
  Eigen::VectorXd spectrum;
  double variance_target = kDefaultVarianceTarget;
  double total_variance = 0.0;

  std::size_t components() const { return static_cast<std::size_t>(loadings.cols()); }
  std::size_t features() const { return static_cast<std::size_t>(loadings.rows()); }
  Eigen::VectorXd explained_ratio() const { return eigenvalues / total_variance; }
  Eigen::VectorXd spectrum_ratio() const { return spectrum / total_variance; }
};

/// Smallest k whose cumulative share of `eigenvalues` reaches `target`.
std::size_t truncation_rank(std::span<const double> eigenvalues, double target);

/// Thin SVD of the column-centred (optionally standardised) matrix;
/// eigenvalues are singular values squared over (rows - 1).
PcaModel pca_fit(const Eigen::MatrixXd& rows, double variance_target, bool standardize = false);
PcaModel pca_fit(const signatures::FeatureMatrix& features, double variance_target,
                 bool standardize = false);

Eigen::MatrixXd pca_transform(const PcaModel& model, const Eigen::MatrixXd& rows);
Eigen::MatrixXd pca_inverse(const PcaModel& model, const Eigen::MatrixXd& scores);

struct LocationRanking {
  std::vector<double> scores;
  std::vector<std::size_t> order;  // every location, best first
  std::vector<std::size_t> top;    // first m entries of order
};

/// Scores each location by the explained-variance-weighted squared loadings
/// of its feature columns, summed over retained components.
LocationRanking top_locations(const PcaModel& model,
                              const std::vector<signatures::ColumnDesc>& columns,
                              std::size_t n_locations, std::size_t m);

/// PCA of the samples x (steps * locations) flattening of a field.
struct EofModel {
  PcaModel pca;
  std::size_t steps = 0;
  std::size_t locations = 0;

  std::size_t modes() const { return pca.components(); }
};

Eigen::MatrixXd flatten_field(const data::GriddedField& field);
EofModel eof_fit(const data::GriddedField& field, double variance_target);
Eigen::MatrixXd eof_transform(const EofModel& model, const data::GriddedField& field);

void save_pca(const PcaModel& model, const std::filesystem::path& dir);
PcaModel load_pca(const std::filesystem::path& dir);
void save_eof(const EofModel& model, const std::filesystem::path& dir);
EofModel load_eof(const std::filesystem::path& dir);

}  // namespace sigpca::reduction
