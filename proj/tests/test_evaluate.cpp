#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "sigpca/error.hpp"
#include "sigpca/evaluate.hpp"
#include "support.hpp"

using namespace sigpca;
using namespace sigpca::evaluate;

namespace {

std::vector<double> normal_sample(std::size_t n, std::uint64_t seed, double mean = 0.0, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(mean, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<double> tone(std::size_t n, double period_hours, double amplitude, double phase = 0.0) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / period_hours + phase);
  }
  return v;
}

double power_at(const Spectrum& s, double per_day) {
  for (std::size_t k = 0; k < s.frequency_per_day.size(); ++k) {
    if (std::abs(s.frequency_per_day[k] - per_day) < 1e-9) return s.power[k];
  }
  return -1.0;
}

std::vector<std::string> daily_labels(const std::string& start, std::size_t n) {
  std::vector<std::string> out;
  const auto t0 = data::parse_iso8601(start);
  for (std::size_t i = 0; i < n; ++i) out.push_back(data::format_iso8601(t0 + static_cast<std::int64_t>(i) * 86400));
  return out;
}

}  // namespace

TEST_CASE("percent RMSE") {
  const std::vector<double> ref{10, 10, 10, 10};
  CHECK(pct_rmse(std::vector<double>{11, 11, 11, 11}, ref) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(pct_rmse(ref, ref) == 0.0);
  CHECK(rmse(std::vector<double>{1, 2}, std::vector<double>{1, 4}) == doctest::Approx(std::sqrt(2.0)));

  const auto a = normal_sample(500, 1, 20.0), b = normal_sample(500, 2, 20.0);
  std::vector<std::uint8_t> mask(500, 1);
  for (std::size_t i = 0; i < 500; i += 7) mask[i] = 0;
  double ss = 0.0, sum = 0.0, n = 0.0;
  for (std::size_t i = 0; i < 500; ++i) {
    if (!mask[i]) continue;
    ss += (a[i] - b[i]) * (a[i] - b[i]);
    sum += b[i];
    n += 1.0;
  }
  CHECK(std::abs(pct_rmse(a, b, mask) - 100.0 * std::sqrt(ss / n) / (sum / n)) <= 1e-12);

  // Scaling both series leaves %RMSE unchanged and RMSE proportional.
  std::vector<double> a3(a), b3(b);
  for (auto& v : a3) v *= 3.0;
  for (auto& v : b3) v *= 3.0;
  CHECK(pct_rmse(a3, b3) == doctest::Approx(pct_rmse(a, b)).epsilon(1e-12));
  CHECK(rmse(a3, b3) == doctest::Approx(3.0 * rmse(a, b)).epsilon(1e-12));

  CHECK_THROWS_AS(pct_rmse(std::vector<double>{1, 2}, std::vector<double>{1}), DataError);
  CHECK_THROWS_AS(pct_rmse(std::vector<double>{1}, std::vector<double>{1}, std::vector<std::uint8_t>{0}), DataError);
}

TEST_CASE("percent improvement") {
  CHECK(pct_improvement(2.0, 0.0) == 100.0);
  CHECK(pct_improvement(2.0, 2.0) == 0.0);
  CHECK(pct_improvement(2.0, 4.0) == -100.0);
  CHECK_THROWS_AS(pct_improvement(0.0, 1.0), DataError);
}

TEST_CASE("Wasserstein-1 distance") {
  const auto a = normal_sample(300, 3);
  CHECK(wasserstein1(a, a) == 0.0);
  std::vector<double> shifted(a);
  for (auto& v : shifted) v += 2.5;
  CHECK(std::abs(wasserstein1(a, shifted) - 2.5) <= 1e-12);

  // Unequal sizes against a midpoint quadrature of |F_a^-1 - F_b^-1|.
  const auto b = normal_sample(173, 4, 0.3, 1.4);
  std::vector<double> sa(a), sb(b);
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const std::size_t M = 1000000;
  double q = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(M);
    const auto ia = static_cast<std::size_t>(p * static_cast<double>(sa.size()));
    const auto ib = static_cast<std::size_t>(p * static_cast<double>(sb.size()));
    q += std::abs(sa[ia] - sb[ib]);
  }
  q /= static_cast<double>(M);
  CHECK(std::abs(wasserstein1(a, b) - q) <= 1e-6);
  CHECK(wasserstein1(a, b) == wasserstein1(b, a));

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> size(1, 60);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = normal_sample(size(rng), rng()), y = normal_sample(size(rng), rng(), 1.0),
               z = normal_sample(size(rng), rng(), -0.5, 2.0);
    CHECK(wasserstein1(x, z) <= wasserstein1(x, y) + wasserstein1(y, z) + 1e-9);
  }
  CHECK_THROWS_AS(wasserstein1(std::vector<double>{}, a), DataError);
}

TEST_CASE("Pearson correlation and distance pairs") {
  const auto a = normal_sample(200, 6), b = normal_sample(200, 7);
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / 200.0;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / 200.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  CHECK(std::abs(pearson(a, b) - sab / std::sqrt(saa * sbb)) <= 1e-12);
  CHECK(pearson(a, a) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::isnan(pearson(a, std::vector<double>(200, 1.0))));

  SeriesSet dup;
  dup.name = "dup";
  dup.series = Eigen::MatrixXd(200, 2);
  for (int i = 0; i < 200; ++i) dup.series(i, 0) = dup.series(i, 1) = a[static_cast<std::size_t>(i)];
  dup.coords = {{42.0, -88.0}, {42.0, -88.0}};
  const auto d = correlation_vs_distance(dup, 100, 1);
  REQUIRE(d.points.size() == 1);
  CHECK(d.points[0].distance_km == 0.0);
  CHECK(d.points[0].r == doctest::Approx(1.0).epsilon(1e-14));

  SeriesSet noise;
  noise.name = "noise";
  noise.series = testing::random_matrix(10000, 30, 8);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> lat(41, 47), lon(-91, -83);
  for (int i = 0; i < 30; ++i) noise.coords.push_back({lat(rng), lon(rng)});
  const auto nc = correlation_vs_distance(noise, 10000, 1);
  CHECK(nc.points.size() == 435);
  const auto small = std::count_if(nc.points.begin(), nc.points.end(), [](const auto& p) { return std::abs(p.r) < 0.05; });
  CHECK(static_cast<double>(small) >= 0.99 * 435.0);
  for (const auto& p : nc.points) {
    CHECK(p.distance_km > 0.0);
    CHECK(std::abs(p.r) <= 1.0);
  }

  const auto sub = correlation_vs_distance(noise, 50, 3);
  CHECK(sub.points.size() == 50);
  const auto sub2 = correlation_vs_distance(noise, 50, 3);
  for (std::size_t i = 0; i < 50; ++i) CHECK(sub.points[i].r == sub2.points[i].r);
}

TEST_CASE("power spectrum") {
  const auto daily = tone(240, 24.0, 1.0);
  const auto s = power_spectrum(daily, 1.0);
  CHECK(s.frequency_per_day.size() == 121);
  const double peak = power_at(s, 1.0);
  double other = 0.0;
  for (std::size_t k = 0; k < s.power.size(); ++k) {
    if (std::abs(s.frequency_per_day[k] - 1.0) > 1e-9) other = std::max(other, s.power[k]);
  }
  CHECK(peak >= 100.0 * std::max(other, 1e-300));

  const auto flat = power_spectrum(std::vector<double>(48, 3.0), 1.0);
  for (double p : flat.power) CHECK(std::abs(p) <= 1e-20);

  // Two tones with integer cycles over the record: power ratio = amplitude^2 ratio.
  auto two = tone(216, 24.0, 2.0);
  const auto slow = tone(216, 72.0, 1.0, 0.4);
  for (std::size_t i = 0; i < two.size(); ++i) two[i] += slow[i];
  const auto ts = power_spectrum(two, 1.0);
  CHECK(power_at(ts, 1.0) / power_at(ts, 1.0 / 3.0) == doctest::Approx(4.0).epsilon(0.05));

  const auto r = normal_sample(101, 9, 4.0);
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / 101.0;
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  const auto rs = power_spectrum(r, 1.0);
  CHECK(std::abs(std::accumulate(rs.power.begin(), rs.power.end(), 0.0) - ss) <= 1e-9 * ss);
  const auto even = normal_sample(100, 10);
  const double em = std::accumulate(even.begin(), even.end(), 0.0) / 100.0;
  double es = 0.0;
  for (double v : even) es += (v - em) * (v - em);
  const auto evs = power_spectrum(even, 1.0);
  CHECK(std::abs(std::accumulate(evs.power.begin(), evs.power.end(), 0.0) - es) <= 1e-9 * es);

  // Three-hourly sampling moves the frequency axis.
  const auto coarse = power_spectrum(tone(80, 8.0, 1.0), 3.0);
  CHECK(power_at(coarse, 1.0) > 0.0);

  // A gap is filled by interpolation and the tone still dominates.
  auto gappy = daily;
  std::vector<std::uint8_t> present(240, 1);
  for (std::size_t i = 50; i < 53; ++i) {
    present[i] = 0;
    gappy[i] = std::nan("");
  }
  const auto gs = power_spectrum(gappy, 1.0, present);
  for (double p : gs.power) CHECK(std::isfinite(p));
  CHECK(power_at(gs, 1.0) == *std::max_element(gs.power.begin(), gs.power.end()));

  SpectrumOptions w;
  w.welch = true;
  w.welch_segment = 96;
  const auto ws = power_spectrum(tone(960, 24.0, 1.0), 1.0, {}, w);
  CHECK(ws.frequency_per_day.size() == 49);
  const auto top = std::max_element(ws.power.begin(), ws.power.end()) - ws.power.begin();
  CHECK(ws.frequency_per_day[static_cast<std::size_t>(top)] == doctest::Approx(1.0));

  CHECK_THROWS_AS(power_spectrum(std::vector<double>{1.0}, 1.0), DataError);
  CHECK_THROWS_AS(power_spectrum(std::vector<double>(10, 1.0), 1.0, std::vector<std::uint8_t>(10, 0)), DataError);
}

TEST_CASE("quantile comparison") {
  const auto a = normal_sample(400, 11);
  for (const auto& [x, y] : qq_pairs(a, a, 50)) CHECK(x == y);
  std::vector<double> twice(a);
  for (auto& v : twice) v *= 2.0;
  const auto q = qq_pairs(a, twice, 50);
  CHECK(q.size() == 50);
  for (const auto& [x, y] : q) CHECK(std::abs(y - 2.0 * x) <= 1e-12);

  const std::vector<double> sorted{1, 2, 3, 4, 5};
  CHECK(empirical_quantile(sorted, 0.0) == 1.0);
  CHECK(empirical_quantile(sorted, 1.0) == 5.0);
  CHECK(empirical_quantile(sorted, 0.5) == 3.0);
  CHECK(empirical_quantile(sorted, 0.1) == doctest::Approx(1.4));
  std::vector<double> s(a);
  std::sort(s.begin(), s.end());
  for (double p : {0.013, 0.25, 0.5, 0.77, 0.999}) {
    const double h = (static_cast<double>(s.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double expect = s[lo] + (h - static_cast<double>(lo)) * (s[std::min(lo + 1, s.size() - 1)] - s[lo]);
    CHECK(std::abs(empirical_quantile(s, p) - expect) <= 1e-12);
  }
}

TEST_CASE("seasonal partition") {
  const auto year = daily_labels("2010-01-01", 365);
  const auto p = seasonal_partition(year);
  CHECK(p.groups.at("winter").size() == 59);
  CHECK(p.groups.at("spring").size() == 92);
  CHECK(p.groups.at("summer").size() == 92);
  CHECK(p.groups.at("fall").size() == 91);
  CHECK(p.unassigned.size() == 31);
  CHECK(seasonal_partition(daily_labels("2012-01-01", 366)).groups.at("winter").size() == 60);

  const auto july = seasonal_partition(daily_labels("2010-07-01", 31));
  CHECK(july.groups.at("summer").size() == 31);
  CHECK(july.groups.at("winter").empty());
  CHECK(july.groups.size() == 4);

  CHECK_THROWS_AS(seasonal_partition(std::vector<std::string>{"July 4th"}), DataError);
  CHECK_THROWS_AS(seasonal_partition(std::vector<std::string>{"2010-13-01"}), DataError);
}

TEST_CASE("evaluation report") {
  auto spec = testing::small_synthetic(5);
  spec.samples = 20;
  spec.steps = 24;
  const auto d = data::generate_synthetic(spec);
  const auto nearest = data::nearest_gridpoints(d.stations, d.model);
  auto corrected = d.model;
  for (std::size_t g = 0; g < corrected.locations(); ++g) {
    const double b = data::synthetic_bias(spec, corrected.coords[g]);
    for (std::size_t s = 0; s < corrected.samples(); ++s) {
      for (std::size_t t = 0; t < corrected.steps(); ++t) corrected.values(s, t, g) -= 0.9 * b;
    }
  }
  EvalInputs in;
  in.model = &d.model;
  in.stations = &d.stations;
  in.nearest = &nearest;
  in.reconstruction = &d.model;
  in.corrected = &corrected;
  in.truth = &d.truth;
  EvalOptions opt;
  opt.spectrum_stations = 2;
  const auto r = evaluate::evaluate(in, opt);

  CHECK(r.stations.size() == spec.n_stations);
  for (const auto& m : r.stations) {
    // Stations on the zero line of the bias surface see no change.
    CHECK(m.pct_improvement >= -1e-9);
    CHECK(m.wasserstein_model >= 0.0);
  }
  std::set<std::string> sources;
  for (const auto& c : r.correlations) sources.insert(c.source);
  CHECK(sources == std::set<std::string>{"model", "observations", "corrected", "reconstruction", "truth"});
  std::set<std::string> seasons;
  for (const auto& e : r.spectra) seasons.insert(e.season);
  CHECK(seasons.count("all") == 1);
  CHECK(r.qq.size() == 2);
  CHECK(r.summary.at("n_stations") == spec.n_stations);
  const double vs_obs = r.summary.at("pct_improvement_vs_obs");
  const double vs_truth = r.summary.at("pct_improvement_vs_truth");
  const std::size_t held = r.summary.at("held_out_gridpoints");
  CHECK(vs_obs > 0.0);
  CHECK(vs_truth > 0.0);
  CHECK(held > 0);

  testing::TempDir dir;
  write_report(r, dir.path());
  for (const char* f : {"report.json", "correlation.csv", "spectra.csv", "qq.csv"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  std::ifstream in_json(dir / "report.json");
  const auto j = nlohmann::json::parse(in_json);
  for (const char* key : {"summary", "stations", "correlations", "spectra", "qq", "seasons"}) CHECK(j.contains(key));

  EvalInputs missing = in;
  missing.corrected = nullptr;
  CHECK_THROWS_AS(evaluate::evaluate(missing, opt), DataError);
}
