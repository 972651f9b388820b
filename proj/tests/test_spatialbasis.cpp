#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "sigpca/error.hpp"
#include "sigpca/spatialbasis.hpp"
#include "support.hpp"

using namespace sigpca;
using namespace sigpca::spatialbasis;

namespace {

const BoundingBox kBox{41.0, 47.0, -91.0, -83.0};

std::vector<data::LatLon> random_points(std::size_t n, std::uint64_t seed, const BoundingBox& b) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lat(b.lat_min, b.lat_max), lon(b.lon_min, b.lon_max);
  std::vector<data::LatLon> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({lat(rng), lon(rng)});
  return out;
}

}  // namespace

TEST_CASE("Wendland kernel values") {
  CHECK(wendland(0.0) == 1.0);
  CHECK(wendland(1.2) == 0.0);
  CHECK(wendland(1.0) == 0.0);
  CHECK(std::abs(wendland(0.5) - 0.015625 * 20.75 / 3.0) <= 1e-15);
  CHECK_THROWS_AS(wendland(-0.1), DataError);
  double prev = wendland(0.0);
  for (int i = 1; i <= 10000; ++i) {
    const double w = wendland(i / 10000.0);
    CHECK(w <= prev);
    CHECK(w >= 0.0);
    prev = w;
  }
}

TEST_CASE("basis geometry") {
  const auto b = build_basis(kBox, 5, 3);
  REQUIRE(b.resolutions.size() == 3);
  CHECK(b.resolutions[0].knots.size() == 25);
  CHECK(b.resolutions[1].knots.size() == 100);
  CHECK(b.resolutions[2].knots.size() == 400);
  CHECK(b.size() == 525);
  for (const auto& r : b.resolutions) {
    CHECK(r.bandwidth == 2.5 * r.knot_spacing);
    CHECK(std::abs(r.bandwidth / r.knot_spacing - 2.5) <= 2.5 * std::numeric_limits<double>::epsilon());
  }
  for (std::size_t r = 1; r < 3; ++r) CHECK(b.resolutions[r].knots_per_axis == 2 * b.resolutions[r - 1].knots_per_axis);

  const auto small = build_basis(kBox, 2, 1);
  CHECK(small.size() == 4);
  CHECK(small.resolutions[0].knot_spacing == 8.0);

  // Finest-resolution covering radius over a dense probe grid.
  const auto& fine = b.resolutions.back();
  double worst = 0.0;
  for (int i = 0; i <= 200; ++i) {
    for (int j = 0; j <= 200; ++j) {
      const data::LatLon p{kBox.lat_min + 6.0 * i / 200.0, kBox.lon_min + 8.0 * j / 200.0};
      double best = 1e300;
      for (const auto& k : fine.knots) best = std::min(best, std::hypot(p.lat - k.lat, p.lon - k.lon));
      worst = std::max(worst, best);
    }
  }
  CHECK(worst <= fine.knot_spacing * std::sqrt(2.0) / 2.0 + 1e-9);

  CHECK_THROWS_AS(build_basis({41, 41, -91, -83}, 5, 3), DataError);
  CHECK_THROWS_AS(build_basis(kBox, 1, 3), ConfigError);
}

TEST_CASE("basis matrix entries") {
  const auto b = build_basis(kBox, 5, 2);
  const auto knot = b.resolutions[1].knots[37];
  const std::vector<data::LatLon> on{knot};
  const auto m = basis_matrix(on, b);
  CHECK(m(0, 25 + 37) == 1.0);

  const std::vector<data::LatLon> far{{10.0, 10.0}};
  CHECK(basis_matrix(far, b).cwiseAbs().maxCoeff() == 0.0);

  const auto pts = random_points(50, 4, kBox);
  const auto bm = basis_matrix(pts, b);
  for (std::size_t n = 0; n < pts.size(); ++n) {
    double row = 0.0;
    for (const auto& res : b.resolutions) {
      for (const auto& k : res.knots) {
        const double d = std::sqrt((pts[n].lat - k.lat) * (pts[n].lat - k.lat) + (pts[n].lon - k.lon) * (pts[n].lon - k.lon));
        const double r = d / res.bandwidth;
        if (r < 1.0) row += std::pow(1.0 - r, 6) * (35.0 * r * r + 18.0 * r + 3.0) / 3.0;
      }
    }
    CHECK(std::abs(bm.row(static_cast<Eigen::Index>(n)).sum() - row) <= 1e-12);
  }
  CHECK((bm.array() >= 0.0).all());
  CHECK((bm.array() <= 1.0).all());

  std::vector<data::LatLon> rev(pts.rbegin(), pts.rend());
  const auto rm = basis_matrix(rev, b);
  for (std::size_t n = 0; n < pts.size(); ++n) CHECK(rm.row(static_cast<Eigen::Index>(49 - n)) == bm.row(static_cast<Eigen::Index>(n)));
}

TEST_CASE("active knots per resolution stay bounded") {
  const auto b = build_basis(kBox, 5, 3);
  const auto pts = random_points(2000, 9, kBox);
  const auto m = basis_matrix(pts, b);
  Eigen::Index col = 0;
  for (const auto& res : b.resolutions) {
    const auto width = static_cast<Eigen::Index>(res.knots.size());
    for (Eigen::Index n = 0; n < m.rows(); ++n) {
      CHECK((m.row(n).segment(col, width).array() > 0.0).count() <= 36);
    }
    col += width;
  }
}

TEST_CASE("basis persistence and enclosing box") {
  testing::TempDir dir;
  const auto b = build_basis(kBox, 3, 2);
  save_basis(b, dir / "basis");
  const auto back = load_basis(dir / "basis");
  const auto pts = random_points(10, 1, kBox);
  CHECK(basis_matrix(pts, back) == basis_matrix(pts, b));

  const std::vector<data::LatLon> c{{42, -88}, {45, -90}, {41.5, -84}};
  const auto box = BoundingBox::enclosing(c);
  CHECK(box.lat_min == 41.5);
  CHECK(box.lat_max == 45);
  CHECK(box.lon_min == -90);
  CHECK(box.lon_max == -84);
}
