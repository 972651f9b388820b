#include "sigpca/spatialbasis.hpp"

#include <algorithm>
#include <cmath>

#include "sigpca/container.hpp"
#include "sigpca/error.hpp"

namespace sigpca::spatialbasis {

BoundingBox BoundingBox::enclosing(std::span<const data::LatLon> coords) {
  if (coords.empty()) {
    throw DataError("cannot bound an empty coordinate set");
  }
  BoundingBox b{coords[0].lat, coords[0].lat, coords[0].lon, coords[0].lon};
  for (const auto& c : coords) {
    b.lat_min = std::min(b.lat_min, c.lat);
    b.lat_max = std::max(b.lat_max, c.lat);
    b.lon_min = std::min(b.lon_min, c.lon);
    b.lon_max = std::max(b.lon_max, c.lon);
  }
  return b;
}

std::size_t KrigingBasis::size() const {
  std::size_t k = 0;
  for (const auto& r : resolutions) k += r.knots.size();
  return k;
}

KrigingBasis build_basis(const BoundingBox& bbox, std::size_t base_knots_per_axis,
                         std::size_t n_resolutions) {
  const double lat_ext = bbox.lat_max - bbox.lat_min;
  const double lon_ext = bbox.lon_max - bbox.lon_min;
  if (!(lat_ext > 0.0) || !(lon_ext > 0.0)) {
    throw DataError("kriging basis needs a non-degenerate bounding box");
  }
  if (base_knots_per_axis < 2) {
    throw ConfigError("base_knots_per_axis must be >= 2");
  }
  if (n_resolutions < 1) {
    throw ConfigError("n_resolutions must be >= 1");
  }
  KrigingBasis basis;
  basis.bbox = bbox;
  const double extent = std::max(lat_ext, lon_ext);
  const double lat_mid = 0.5 * (bbox.lat_min + bbox.lat_max);
  const double lon_mid = 0.5 * (bbox.lon_min + bbox.lon_max);
  for (std::size_t r = 0; r < n_resolutions; ++r) {
    Resolution res;
    res.knots_per_axis = base_knots_per_axis << r;
    const auto n = res.knots_per_axis;
    res.knot_spacing = extent / static_cast<double>(n - 1);
    res.bandwidth = kBandwidthRatio * res.knot_spacing;
    const double half = 0.5 * static_cast<double>(n - 1);
    auto place = [&](double mid, double ext, double lo, std::size_t i) {
      // The longer axis is laid out exactly between its edges.
      if (ext == extent) return lo + ext * static_cast<double>(i) / static_cast<double>(n - 1);
      return mid + res.knot_spacing * (static_cast<double>(i) - half);
    };
    res.knots.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        res.knots.push_back({place(lat_mid, lat_ext, bbox.lat_min, i),
                             place(lon_mid, lon_ext, bbox.lon_min, j)});
      }
    }
    basis.resolutions.push_back(std::move(res));
  }
  return basis;
}

double wendland(double r) {
  if (r < 0.0 || std::isnan(r)) {
    throw DataError("wendland: negative radius");
  }
  if (r >= 1.0) return 0.0;
  const double a = 1.0 - r;
  const double a2 = a * a;
  return a2 * a2 * a2 * (35.0 * r * r + 18.0 * r + 3.0) / 3.0;
}

Eigen::MatrixXd basis_matrix(std::span<const data::LatLon> coords, const KrigingBasis& basis) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(coords.size()),
                                              static_cast<Eigen::Index>(basis.size()));
  Eigen::Index col0 = 0;
  for (const auto& res : basis.resolutions) {
    for (std::size_t n = 0; n < coords.size(); ++n) {
      for (std::size_t j = 0; j < res.knots.size(); ++j) {
        const double dlat = coords[n].lat - res.knots[j].lat;
        const double dlon = coords[n].lon - res.knots[j].lon;
        const double dist = std::sqrt(dlat * dlat + dlon * dlon);
        if (dist < res.bandwidth) {
          out(static_cast<Eigen::Index>(n), col0 + static_cast<Eigen::Index>(j)) =
              wendland(dist / res.bandwidth);
        }
      }
    }
    col0 += static_cast<Eigen::Index>(res.knots.size());
  }
  return out;
}

void save_basis(const KrigingBasis& basis, const std::filesystem::path& dir) {
  container::Archive a("kriging_basis");
  a.meta()["bbox"] = {basis.bbox.lat_min, basis.bbox.lat_max, basis.bbox.lon_min, basis.bbox.lon_max};
  auto res = nlohmann::json::array();
  for (std::size_t r = 0; r < basis.resolutions.size(); ++r) {
    const auto& rr = basis.resolutions[r];
    res.push_back({{"knots_per_axis", rr.knots_per_axis},
                   {"knot_spacing", rr.knot_spacing},
                   {"bandwidth", rr.bandwidth}});
    Eigen::MatrixXd knots(static_cast<Eigen::Index>(rr.knots.size()), 2);
    for (std::size_t i = 0; i < rr.knots.size(); ++i) {
      knots(static_cast<Eigen::Index>(i), 0) = rr.knots[i].lat;
      knots(static_cast<Eigen::Index>(i), 1) = rr.knots[i].lon;
    }
    a.put("knots_" + std::to_string(r), knots);
  }
  a.meta()["resolutions"] = res;
  a.save(dir);
}

KrigingBasis load_basis(const std::filesystem::path& dir) {
  const auto a = container::Archive::load(dir, "kriging_basis");
  KrigingBasis b;
  const auto& box = a.meta().at("bbox");
  b.bbox = {box.at(0).get<double>(), box.at(1).get<double>(), box.at(2).get<double>(),
            box.at(3).get<double>()};
  const auto& res = a.meta().at("resolutions");
  for (std::size_t r = 0; r < res.size(); ++r) {
    Resolution rr;
    rr.knots_per_axis = res[r].at("knots_per_axis").get<std::size_t>();
    rr.knot_spacing = res[r].at("knot_spacing").get<double>();
    rr.bandwidth = res[r].at("bandwidth").get<double>();
    const auto knots = a.matrix("knots_" + std::to_string(r));
    for (Eigen::Index i = 0; i < knots.rows(); ++i) rr.knots.push_back({knots(i, 0), knots(i, 1)});
    b.resolutions.push_back(std::move(rr));
  }
  return b;
}

}  // namespace sigpca::spatialbasis
