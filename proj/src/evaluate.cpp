#include "sigpca/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <fftw3.h>

#include "sigpca/error.hpp"

namespace sigpca::evaluate {

using Eigen::Index;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_shapes(std::span<const double> pred, std::span<const double> ref, std::span<const std::uint8_t> mask) {
  if (pred.size() != ref.size()) throw DataError("prediction and reference differ in size");
  if (!mask.empty() && mask.size() != ref.size()) throw DataError("mask size does not match the data");
}

std::vector<double> sorted_copy(std::span<const double> x, const char* what) {
  if (x.empty()) throw DataError(std::string(what) + ": empty sample");
  std::vector<double> v(x.begin(), x.end());
  for (double d : v) {
    if (!std::isfinite(d)) throw DataError(std::string(what) + ": non-finite sample");
  }
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> ref, std::span<const std::uint8_t> mask) {
  check_shapes(pred, ref, mask);
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    ss += (pred[i] - ref[i]) * (pred[i] - ref[i]);
    ++n;
  }
  if (n == 0) throw DataError("rmse over an empty selection");
  return std::sqrt(ss / static_cast<double>(n));
}

double pct_rmse(std::span<const double> pred, std::span<const double> ref, std::span<const std::uint8_t> mask) {
  check_shapes(pred, ref, mask);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    sum += ref[i];
    ++n;
  }
  if (n == 0) throw DataError("%RMSE over an empty selection");
  const double mean = sum / static_cast<double>(n);
  if (mean == 0.0) throw DataError("%RMSE is undefined for a zero reference mean");
  return 100.0 * rmse(pred, ref, mask) / mean;
}

double pct_improvement(double model_rmse, double corrected_rmse) {
  if (!(model_rmse > 0.0)) throw DataError("%-improvement needs a positive model RMSE");
  return 100.0 * (model_rmse - corrected_rmse) / model_rmse;
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  const auto sa = sorted_copy(a, "wasserstein1");
  const auto sb = sorted_copy(b, "wasserstein1");
  const std::size_t n = sa.size(), m = sb.size();
  if (n == m) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::abs(sa[i] - sb[i]);
    return sum / static_cast<double>(n);
  }
  // Both quantile functions are constant between consecutive breakpoints
  // i/n and j/m; walk the merged breakpoints.
  double total = 0.0, u = 0.0;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    const double next_a = static_cast<double>(i + 1) / static_cast<double>(n);
    const double next_b = static_cast<double>(j + 1) / static_cast<double>(m);
    const double next = std::min(next_a, next_b);
    total += (next - u) * std::abs(sa[i] - sb[j]);
    u = next;
    // Compare on integers so shared breakpoints advance both sides.
    const auto lhs = (i + 1) * m, rhs = (j + 1) * n;
    if (lhs <= rhs) ++i;
    if (rhs <= lhs) ++j;
  }
  return total;
}

double empirical_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  p = std::clamp(p, 0.0, 1.0);
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<std::pair<double, double>> qq_pairs(std::span<const double> a, std::span<const double> b,
                                                std::size_t n_quantiles) {
  if (n_quantiles == 0) throw ConfigError("qq_pairs needs at least one quantile");
  const auto sa = sorted_copy(a, "qq_pairs");
  const auto sb = sorted_copy(b, "qq_pairs");
  std::vector<std::pair<double, double>> out;
  out.reserve(n_quantiles);
  for (std::size_t i = 1; i <= n_quantiles; ++i) {
    const double p = (static_cast<double>(i) - 0.5) / static_cast<double>(n_quantiles);
    out.emplace_back(empirical_quantile(sa, p), empirical_quantile(sb, p));
  }
  return out;
}

SeriesSet series_from_field(const std::string& name, const data::GriddedField& field) {
  SeriesSet set;
  set.name = name;
  const std::size_t S = field.samples(), T = field.steps(), D = field.locations();
  set.series.resize(static_cast<Index>(S * T), static_cast<Index>(D));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t g = 0; g < D; ++g) set.series(static_cast<Index>(s * T + t), static_cast<Index>(g)) = field.values(s, t, g);
    }
  }
  set.coords = field.coords;
  return set;
}

SeriesSet series_from_stations(const std::string& name, const data::StationSeries& stations) {
  SeriesSet set;
  set.name = name;
  const std::size_t S = stations.samples(), T = stations.steps(), P = stations.stations();
  set.series.resize(static_cast<Index>(S * T), static_cast<Index>(P));
  set.present.resize(static_cast<Index>(S * T), static_cast<Index>(P));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t p = 0; p < P; ++p) {
        const auto r = static_cast<Index>(s * T + t);
        set.series(r, static_cast<Index>(p)) = stations.values(s, t, p);
        set.present(r, static_cast<Index>(p)) = stations.mask(s, t, p);
      }
    }
  }
  set.coords = stations.coords;
  return set;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("pearson: series differ in length");
  if (a.size() < 3) throw DataError("pearson: fewer than 3 points");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return kNaN;
  return sab / std::sqrt(saa * sbb);
}

CorrelationSet correlation_vs_distance(const SeriesSet& set, std::size_t max_pairs, std::uint64_t seed) {
  const auto L = static_cast<std::size_t>(set.series.cols());
  const auto T = static_cast<std::size_t>(set.series.rows());
  if (L < 2) throw DataError("correlation_vs_distance needs at least 2 locations in '" + set.name + "'");
  if (T < 3) throw DataError("correlation_vs_distance needs at least 3 time points");
  if (set.coords.size() != L) throw DataError("series set '" + set.name + "' has mismatched coordinates");
  const bool masked = set.present.size() != 0;

  const std::size_t total = L * (L - 1) / 2;
  std::vector<std::size_t> chosen;
  if (total <= max_pairs) {
    chosen.resize(total);
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  } else {
    // Selection sampling: each index is kept with probability
    // needed / remaining, which yields a uniform ascending subset.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    chosen.reserve(max_pairs);
    for (std::size_t k = 0; k < total && chosen.size() < max_pairs; ++k) {
      const double needed = static_cast<double>(max_pairs - chosen.size());
      if (unit(rng) * static_cast<double>(total - k) < needed) chosen.push_back(k);
    }
  }

  CorrelationSet out;
  out.source = set.name;
  out.points.reserve(chosen.size());
  // Pair index k enumerates (i, j), i < j, row by row; `chosen` is ascending.
  std::size_t i = 0, row_begin = 0;
  std::vector<double> a, b;
  for (std::size_t k : chosen) {
    while (k >= row_begin + (L - 1 - i)) {
      row_begin += L - 1 - i;
      ++i;
    }
    const std::size_t j = i + 1 + (k - row_begin);
    a.clear();
    b.clear();
    for (std::size_t t = 0; t < T; ++t) {
      const auto r = static_cast<Index>(t);
      if (masked && (!set.present(r, static_cast<Index>(i)) || !set.present(r, static_cast<Index>(j)))) continue;
      a.push_back(set.series(r, static_cast<Index>(i)));
      b.push_back(set.series(r, static_cast<Index>(j)));
    }
    const double r = a.size() >= 3 ? pearson(a, b) : kNaN;
    if (!std::isfinite(r)) {
      ++out.skipped;
      continue;
    }
    out.points.push_back({data::haversine_km(set.coords[i], set.coords[j]), r});
  }
  return out;
}

std::vector<CorrelationSet> correlation_vs_distance(std::span<const SeriesSet> sets, std::size_t max_pairs,
                                                    std::uint64_t seed) {
  std::vector<CorrelationSet> out;
  for (std::size_t k = 0; k < sets.size(); ++k) out.push_back(correlation_vs_distance(sets[k], max_pairs, seed + k));
  return out;
}

namespace {

std::vector<double> fill_missing(std::span<const double> series, std::span<const std::uint8_t> present) {
  std::vector<double> x(series.begin(), series.end());
  if (present.empty()) return x;
  if (present.size() != series.size()) throw DataError("spectrum mask size does not match the series");
  std::vector<std::size_t> known;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (present[i]) known.push_back(i);
  }
  if (known.empty()) throw DataError("power spectrum of an all-missing series");
  for (std::size_t i = 0; i < known.front(); ++i) x[i] = x[known.front()];
  for (std::size_t i = known.back() + 1; i < x.size(); ++i) x[i] = x[known.back()];
  for (std::size_t k = 0; k + 1 < known.size(); ++k) {
    const std::size_t lo = known[k], hi = known[k + 1];
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const double w = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
      x[i] = (1.0 - w) * x[lo] + w * x[hi];
    }
  }
  return x;
}

// |DFT|^2 of x for bins 0..n/2, with interior bins doubled.
std::vector<double> one_sided_power(std::vector<double> x) {
  const int n = static_cast<int>(x.size());
  const int bins = n / 2 + 1;
  auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(bins)));
  fftw_plan plan = fftw_plan_dft_r2c_1d(n, x.data(), out, FFTW_ESTIMATE);
  fftw_execute(plan);
  std::vector<double> power(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    const double mag2 = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
    power[static_cast<std::size_t>(k)] = edge ? mag2 : 2.0 * mag2;
  }
  fftw_destroy_plan(plan);
  fftw_free(out);
  return power;
}

void remove_mean(std::vector<double>& x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  for (double& v : x) v -= mean;
}

}  // namespace

Spectrum power_spectrum(std::span<const double> series, double sample_interval_hours,
                        std::span<const std::uint8_t> present, const SpectrumOptions& opt) {
  if (series.size() < 8) throw DataError("power spectrum needs at least 8 samples");
  if (!(sample_interval_hours > 0.0)) throw ConfigError("sample interval must be positive");
  auto x = fill_missing(series, present);
  remove_mean(x);

  std::size_t n = x.size();
  std::vector<double> power;
  if (!opt.welch) {
    power = one_sided_power(x);
    for (double& p : power) p /= static_cast<double>(n);
  } else {
    const std::size_t seg = opt.welch_segment ? opt.welch_segment : std::max<std::size_t>(8, n / 4);
    if (seg > n || seg < 8) throw ConfigError("Welch segment must lie in [8, series length]");
    std::vector<double> window(seg);
    double energy = 0.0;
    for (std::size_t i = 0; i < seg; ++i) {
      window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(seg));
      energy += window[i] * window[i];
    }
    const std::size_t hop = std::max<std::size_t>(1, seg / 2);
    std::size_t count = 0;
    for (std::size_t start = 0; start + seg <= n; start += hop, ++count) {
      std::vector<double> piece(x.begin() + static_cast<std::ptrdiff_t>(start),
                                x.begin() + static_cast<std::ptrdiff_t>(start + seg));
      remove_mean(piece);
      for (std::size_t i = 0; i < seg; ++i) piece[i] *= window[i];
      auto p = one_sided_power(std::move(piece));
      if (power.empty()) power.assign(p.size(), 0.0);
      for (std::size_t k = 0; k < p.size(); ++k) power[k] += p[k] / energy;
    }
    for (double& p : power) p /= static_cast<double>(count);
    n = seg;
  }

  Spectrum out;
  out.power = std::move(power);
  out.frequency_per_day.resize(out.power.size());
  const double cycles_per_day = 24.0 / (static_cast<double>(n) * sample_interval_hours);
  for (std::size_t k = 0; k < out.power.size(); ++k) out.frequency_per_day[k] = static_cast<double>(k) * cycles_per_day;
  return out;
}

SeasonalPartition seasonal_partition(std::span<const std::string> labels) {
  SeasonalPartition out;
  for (const char* name : {"winter", "spring", "summer", "fall"}) out.groups[name];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    const auto& label = labels[i];
    const bool shaped = label.size() >= 10 && label[4] == '-' && label[7] == '-' &&
                        std::sscanf(label.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) >= 3;
    const std::chrono::year_month_day date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!shaped || !date.ok()) throw DataError("sample label '" + label + "' carries no calendar date");
    if (m <= 2) {
      out.groups["winter"].push_back(i);
    } else if (m <= 5) {
      out.groups["spring"].push_back(i);
    } else if (m <= 8) {
      out.groups["summer"].push_back(i);
    } else if (m <= 11) {
      out.groups["fall"].push_back(i);
    } else {
      out.unassigned.push_back(i);
    }
  }
  return out;
}

namespace {

// Observed values of one station with the matching gridpoint series of a field.
struct Matched {
  std::vector<double> obs, field;
};

Matched match_station(const data::StationSeries& st, const data::GriddedField& field, std::size_t p,
                      std::size_t g) {
  Matched m;
  for (std::size_t s = 0; s < st.samples(); ++s) {
    for (std::size_t t = 0; t < st.steps(); ++t) {
      if (!st.present(s, t, p)) continue;
      m.obs.push_back(st.values(s, t, p));
      m.field.push_back(field.values(s, t, g));
    }
  }
  return m;
}

double safe(auto&& fn) {
  try {
    return fn();
  } catch (const DataError&) {
    return kNaN;
  }
}

std::vector<double> season_series(const data::GriddedField& f, std::size_t g, std::span<const std::size_t> samples) {
  std::vector<double> x;
  for (auto s : samples) {
    for (std::size_t t = 0; t < f.steps(); ++t) x.push_back(f.values(s, t, g));
  }
  return x;
}

double mean_finite(const std::vector<StationMetrics>& rows, double StationMetrics::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.retained && std::isfinite(r.*field)) {
      sum += r.*field;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : kNaN;
}

}  // namespace

EvalReport evaluate(const EvalInputs& in, const EvalOptions& opt) {
  if (!in.model) throw DataError("evaluation needs the model field");
  if (!in.stations) throw DataError("evaluation needs the station series");
  if (!in.nearest) throw DataError("evaluation needs the nearest-gridpoint map");
  if (!in.corrected) throw DataError("evaluation needs the corrected field");
  const auto& model = *in.model;
  const auto& st = *in.stations;
  const auto& corrected = *in.corrected;
  if (st.samples() != model.samples() || st.steps() != model.steps()) {
    throw DataError("stations and model field differ in sample/time layout");
  }
  if (corrected.values.shape() != model.values.shape()) {
    throw DataError("corrected field and model field differ in shape");
  }
  if (in.nearest->pairs.size() != st.stations()) throw DataError("nearest map does not cover every station");

  EvalReport rep;
  const auto retained = st.retained(opt.missing_threshold);
  std::vector<bool> keep(st.stations(), false);
  for (auto p : retained) keep[p] = true;

  std::vector<double> pooled_obs, pooled_model, pooled_corr;
  for (std::size_t p = 0; p < st.stations(); ++p) {
    const auto& pair = in.nearest->pairs[p];
    StationMetrics m;
    m.station_id = p < st.station_ids.size() ? st.station_ids[p] : std::to_string(p);
    m.gridpoint = pair.gridpoint;
    m.distance_km = pair.distance_km;
    m.missing_fraction = p < st.missing_fraction.size() ? st.missing_fraction[p] : kNaN;
    m.retained = keep[p];
    const auto mm = match_station(st, model, p, pair.gridpoint);
    const auto mc = match_station(st, corrected, p, pair.gridpoint);
    m.rmse_model = safe([&] { return rmse(mm.field, mm.obs); });
    m.rmse_corrected = safe([&] { return rmse(mc.field, mc.obs); });
    m.pct_rmse_model = safe([&] { return pct_rmse(mm.field, mm.obs); });
    m.pct_rmse_corrected = safe([&] { return pct_rmse(mc.field, mc.obs); });
    m.pct_improvement = safe([&] { return pct_improvement(m.rmse_model, m.rmse_corrected); });
    m.wasserstein_model = safe([&] { return wasserstein1(mm.obs, mm.field); });
    m.wasserstein_corrected = safe([&] { return wasserstein1(mc.obs, mc.field); });
    if (m.retained) {
      pooled_obs.insert(pooled_obs.end(), mm.obs.begin(), mm.obs.end());
      pooled_model.insert(pooled_model.end(), mm.field.begin(), mm.field.end());
      pooled_corr.insert(pooled_corr.end(), mc.field.begin(), mc.field.end());
    }
    rep.stations.push_back(std::move(m));
  }

  std::vector<SeriesSet> sets;
  sets.push_back(series_from_field("model", model));
  sets.push_back(series_from_stations("observations", st));
  sets.push_back(series_from_field(in.corrected_label, corrected));
  if (in.reconstruction) sets.push_back(series_from_field("reconstruction", *in.reconstruction));
  if (in.truth) sets.push_back(series_from_field("truth", *in.truth));
  for (std::size_t k = 0; k < sets.size(); ++k) {
    try {
      rep.correlations.push_back(correlation_vs_distance(sets[k], opt.max_pairs, opt.seed + k));
    } catch (const DataError&) {
      rep.correlations.push_back({sets[k].name, {}, 0});
    }
  }

  rep.seasons = seasonal_partition(model.sample_labels);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> seasons;
  std::vector<std::size_t> all(model.samples());
  std::iota(all.begin(), all.end(), std::size_t{0});
  seasons.emplace_back("all", all);
  for (const auto& [name, idx] : rep.seasons.groups) {
    if (!idx.empty()) seasons.emplace_back(name, idx);
  }
  const std::size_t n_spec = std::min(opt.spectrum_stations, retained.size());
  for (std::size_t k = 0; k < n_spec; ++k) {
    const auto p = retained[k];
    const auto g = in.nearest->pairs[p].gridpoint;
    for (const auto& [season, idx] : seasons) {
      std::vector<double> obs;
      std::vector<std::uint8_t> present;
      for (auto s : idx) {
        for (std::size_t t = 0; t < st.steps(); ++t) {
          obs.push_back(st.values(s, t, p));
          present.push_back(st.mask(s, t, p));
        }
      }
      auto push = [&](const std::string& source, std::span<const double> x, std::span<const std::uint8_t> m) {
        try {
          rep.spectra.push_back({source, p, season, power_spectrum(x, opt.sample_interval_hours, m, opt.spectrum)});
        } catch (const DataError&) {
          // Short or all-missing seasonal series carry no spectrum.
        }
      };
      push("observations", obs, present);
      push("model", season_series(model, g, idx), {});
      push(in.corrected_label, season_series(corrected, g, idx), {});
    }
  }

  if (!pooled_obs.empty()) {
    rep.qq.push_back({"model", qq_pairs(pooled_obs, pooled_model, opt.n_quantiles)});
    rep.qq.push_back({in.corrected_label, qq_pairs(pooled_obs, pooled_corr, opt.n_quantiles)});
  }

  auto& sum = rep.summary;
  sum["n_stations"] = st.stations();
  sum["n_retained"] = retained.size();
  sum["mean_pct_rmse_model"] = mean_finite(rep.stations, &StationMetrics::pct_rmse_model);
  sum["mean_pct_rmse_corrected"] = mean_finite(rep.stations, &StationMetrics::pct_rmse_corrected);
  sum["mean_pct_improvement"] = mean_finite(rep.stations, &StationMetrics::pct_improvement);
  sum["mean_wasserstein_model"] = mean_finite(rep.stations, &StationMetrics::wasserstein_model);
  sum["mean_wasserstein_corrected"] = mean_finite(rep.stations, &StationMetrics::wasserstein_corrected);
  if (!pooled_obs.empty()) {
    const double rm = rmse(pooled_model, pooled_obs), rc = rmse(pooled_corr, pooled_obs);
    sum["rmse_model_vs_obs"] = rm;
    sum["rmse_corrected_vs_obs"] = rc;
    sum["pct_improvement_vs_obs"] = safe([&] { return pct_improvement(rm, rc); });
  }
  if (in.reconstruction) {
    sum["reconstruction_pct_rmse"] = pct_rmse(in.reconstruction->values.flat(), model.values.flat());
  }
  if (in.truth) {
    if (in.truth->values.shape() != model.values.shape()) throw DataError("truth field and model field differ in shape");
    std::vector<bool> station_cell(model.locations(), false);
    for (const auto& pr : in.nearest->pairs) station_cell[pr.gridpoint] = true;
    std::vector<std::uint8_t> mask(model.values.flat().size(), 0);
    std::size_t held_out = 0;
    for (std::size_t g = 0; g < model.locations(); ++g) {
      if (station_cell[g]) continue;
      ++held_out;
      for (std::size_t s = 0; s < model.samples(); ++s) {
        for (std::size_t t = 0; t < model.steps(); ++t) mask[(s * model.steps() + t) * model.locations() + g] = 1;
      }
    }
    sum["held_out_gridpoints"] = held_out;
    if (held_out > 0) {
      const double rm = rmse(model.values.flat(), in.truth->values.flat(), mask);
      const double rc = rmse(corrected.values.flat(), in.truth->values.flat(), mask);
      sum["rmse_model_vs_truth"] = rm;
      sum["rmse_corrected_vs_truth"] = rc;
      sum["pct_improvement_vs_truth"] = safe([&] { return pct_improvement(rm, rc); });
    }
  }
  return rep;
}

nlohmann::json to_json(const EvalReport& report) {
  using nlohmann::json;
  json j;
  j["summary"] = report.summary;
  auto& stations = j["stations"] = json::array();
  for (const auto& m : report.stations) {
    stations.push_back({{"station_id", m.station_id},
                        {"gridpoint", m.gridpoint},
                        {"distance_km", m.distance_km},
                        {"missing_fraction", m.missing_fraction},
                        {"retained", m.retained},
                        {"rmse_model", m.rmse_model},
                        {"rmse_corrected", m.rmse_corrected},
                        {"pct_rmse_model", m.pct_rmse_model},
                        {"pct_rmse_corrected", m.pct_rmse_corrected},
                        {"pct_improvement", m.pct_improvement},
                        {"wasserstein_model", m.wasserstein_model},
                        {"wasserstein_corrected", m.wasserstein_corrected}});
  }
  auto& corr = j["correlations"] = json::array();
  for (const auto& c : report.correlations) {
    json pts = json::array();
    for (const auto& p : c.points) pts.push_back({p.distance_km, p.r});
    corr.push_back({{"source", c.source}, {"skipped", c.skipped}, {"points", std::move(pts)}});
  }
  auto& spectra = j["spectra"] = json::array();
  for (const auto& s : report.spectra) {
    spectra.push_back({{"source", s.source},
                       {"location", s.location},
                       {"season", s.season},
                       {"frequency_per_day", s.spectrum.frequency_per_day},
                       {"power", s.spectrum.power}});
  }
  auto& qq = j["qq"] = json::array();
  for (const auto& q : report.qq) {
    json pairs = json::array();
    for (const auto& [a, b] : q.pairs) pairs.push_back({a, b});
    qq.push_back({{"name", q.name}, {"pairs", std::move(pairs)}});
  }
  j["seasons"] = {{"groups", report.seasons.groups}, {"unassigned", report.seasons.unassigned}};
  return j;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw DataError("cannot write " + (dir / name).string());
    f.precision(17);
    return f;
  };
  open("report.json") << to_json(report).dump(1) << '\n';
  {
    auto f = open("correlation.csv");
    f << "source,distance_km,r\n";
    for (const auto& c : report.correlations) {
      for (const auto& p : c.points) f << c.source << ',' << p.distance_km << ',' << p.r << '\n';
    }
  }
  {
    auto f = open("spectra.csv");
    f << "source,location,season,frequency_per_day,power\n";
    for (const auto& s : report.spectra) {
      for (std::size_t k = 0; k < s.spectrum.power.size(); ++k) {
        f << s.source << ',' << s.location << ',' << s.season << ',' << s.spectrum.frequency_per_day[k] << ','
          << s.spectrum.power[k] << '\n';
      }
    }
  }
  {
    auto f = open("qq.csv");
    f << "name,q_obs,q_other\n";
    for (const auto& q : report.qq) {
      for (const auto& [a, b] : q.pairs) f << q.name << ',' << a << ',' << b << '\n';
    }
  }
}

}  // namespace sigpca::evaluate
