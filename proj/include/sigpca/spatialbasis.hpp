#pragma once

// Multi-resolution Wendland radial basis used as spatial network inputs.

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sigpca/data.hpp"

namespace sigpca::spatialbasis {

/// Ratio of the Wendland support radius to the knot spacing.
inline constexpr double kBandwidthRatio = 2.5;

struct BoundingBox {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;

  static BoundingBox enclosing(std::span<const data::LatLon> coords);
};

struct Resolution {
  std::size_t knots_per_axis = 0;
  double knot_spacing = 0.0;  // degrees
  double bandwidth = 0.0;     // degrees
  std::vector<data::LatLon> knots;
};

struct KrigingBasis {
  BoundingBox bbox;
  std::vector<Resolution> resolutions;

  /// Total number of basis functions.
  std::size_t size() const;
};

/// Resolution r (1-based) carries base * 2^(r-1) knots per axis on a square
/// lattice. The lattice spans the longer bbox axis edge to edge and is
/// centred on the shorter one.
KrigingBasis build_basis(const BoundingBox& bbox, std::size_t base_knots_per_axis = 5,
                         std::size_t n_resolutions = 3);

/// Wendland C4 kernel (1-r)^6 (35r^2 + 18r + 3) / 3, zero for r >= 1.
double wendland(double r);

/// Rows are points, columns are basis functions (resolution-major).
Eigen::MatrixXd basis_matrix(std::span<const data::LatLon> coords, const KrigingBasis& basis);

void save_basis(const KrigingBasis& basis, const std::filesystem::path& dir);
KrigingBasis load_basis(const std::filesystem::path& dir);

}  // namespace sigpca::spatialbasis
