#include "sigpca/signatures.hpp"

#include <algorithm>
#include <cmath>

#include "sigpca/container.hpp"
#include "sigpca/error.hpp"
#include "sigpca/parallel.hpp"

namespace sigpca::signatures {

void SignatureConfig::validate(std::size_t steps, std::size_t locations) const {
  if (depth != 1 && depth != 2) {
    throw ConfigError("signature depth must be 1 or 2, got " + std::to_string(depth));
  }
  if (window_depth < 1) {
    throw ConfigError("window_depth must be >= 1");
  }
  if (depth == 2) {
    if (depth2_locations.empty() && !depth2_all) {
      throw ConfigError("depth-2 signatures need depth2_locations or depth2_all");
    }
    for (auto g : depth2_locations) {
      if (g >= locations) {
        throw ConfigError("depth2 location " + std::to_string(g) + " out of range");
      }
    }
  }
  (void)dyadic_windows(augmented_steps(steps), window_depth);
}

Eigen::MatrixXd augment_path(const Eigen::MatrixXd& path, bool basepoint, bool time_augment) {
  const Eigen::Index offset = basepoint ? 1 : 0;
  const Eigen::Index channels = path.rows() + (time_augment ? 1 : 0);
  const Eigen::Index steps = path.cols() + offset;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(channels, steps);
  const Eigen::Index first = time_augment ? 1 : 0;
  out.block(first, offset, path.rows(), path.cols()) = path;
  if (time_augment) {
    for (Eigen::Index t = 0; t < steps; ++t) {
      out(0, t) = static_cast<double>(t) / static_cast<double>(steps - 1);
    }
  }
  return out;
}

WindowSet dyadic_windows(std::size_t steps, int window_depth) {
  if (steps < 2) {
    throw ConfigError("paths need at least 2 samples");
  }
  if (window_depth < 1) {
    throw ConfigError("window_depth must be >= 1");
  }
  WindowSet set;
  set.windows.push_back({1, 0, steps - 1});
  std::size_t level_begin = 0;
  for (int level = 2; level <= window_depth; ++level) {
    const std::size_t level_end = set.windows.size();
    for (std::size_t w = level_begin; w < level_end; ++w) {
      const auto parent = set.windows[w];
      const std::size_t mid = (parent.start + parent.end) / 2;
      if (mid == parent.start || mid == parent.end) {
        throw ConfigError("window_depth " + std::to_string(window_depth) + " too deep for " +
                          std::to_string(steps) + " samples");
      }
      set.windows.push_back({level, parent.start, mid});
      set.windows.push_back({level, mid, parent.end});
    }
    level_begin = level_end;
  }
  return set;
}

namespace {

void check_window(const Eigen::MatrixXd& path, std::size_t start, std::size_t end) {
  if (start >= end || end >= static_cast<std::size_t>(path.cols())) {
    throw DataError("signature window [" + std::to_string(start) + ", " + std::to_string(end) +
                    "] is empty or outside the path");
  }
}

}  // namespace

Eigen::VectorXd signature_depth1(const Eigen::MatrixXd& path, std::size_t start, std::size_t end) {
  check_window(path, start, end);
  return path.col(static_cast<Eigen::Index>(end)) - path.col(static_cast<Eigen::Index>(start));
}

Eigen::MatrixXd signature_depth2(const Eigen::MatrixXd& path, std::size_t start, std::size_t end) {
  check_window(path, start, end);
  const Eigen::Index c = path.rows();
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(c, c);
  Eigen::VectorXd accumulated = Eigen::VectorXd::Zero(c);
  for (auto t = static_cast<Eigen::Index>(start) + 1; t <= static_cast<Eigen::Index>(end); ++t) {
    const Eigen::VectorXd step = path.col(t) - path.col(t - 1);
    // Exact iterated integral across one linear segment.
    s2.noalias() += (accumulated + 0.5 * step) * step.transpose();
    accumulated += step;
  }
  return s2;
}

std::size_t depth1_feature_count(std::size_t locations, int window_depth, bool keep_time_features) {
  const std::size_t windows = (std::size_t{1} << window_depth) - 1;
  return windows * (locations + (keep_time_features ? 1 : 0));
}

FeatureMatrix compute_features(const data::GriddedField& field, const SignatureConfig& cfg,
                               std::size_t threads) {
  const std::size_t S = field.samples(), T = field.steps(), D = field.locations();
  cfg.validate(T, D);
  const std::size_t Ta = cfg.augmented_steps(T);
  const auto windows = dyadic_windows(Ta, cfg.window_depth).windows;
  const std::size_t W = windows.size();
  const bool time_cols = cfg.keep_time_features && cfg.time_augment;

  FeatureMatrix out;
  out.windows = windows;
  for (std::size_t w = 0; w < W; ++w) {
    if (time_cols) out.columns.push_back({w, {kTimeChannel}});
    for (std::size_t g = 0; g < D; ++g) out.columns.push_back({w, {static_cast<long>(g)}});
  }

  std::vector<long> pair_channels;
  if (cfg.depth == 2) {
    if (cfg.time_augment) pair_channels.push_back(kTimeChannel);
    if (cfg.depth2_all) {
      for (std::size_t g = 0; g < D; ++g) pair_channels.push_back(static_cast<long>(g));
    } else {
      for (auto g : cfg.depth2_locations) pair_channels.push_back(static_cast<long>(g));
    }
    for (std::size_t w = 0; w < W; ++w) {
      for (auto ci : pair_channels) {
        for (auto cj : pair_channels) out.columns.push_back({w, {ci, cj}});
      }
    }
  }

  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S),
                                     static_cast<Eigen::Index>(out.columns.size()));
  const std::size_t offset = cfg.basepoint ? 1 : 0;

  parallel_for(S, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      auto row = out.values.row(static_cast<Eigen::Index>(s));
      Eigen::Index col = 0;
      for (std::size_t w = 0; w < W; ++w) {
        const auto& win = windows[w];
        if (time_cols) {
          row(col++) = static_cast<double>(win.end - win.start) / static_cast<double>(Ta - 1);
        }
        for (std::size_t g = 0; g < D; ++g) {
          // Basepoint sample is zero, everything else shifts by one.
          const double at_end = win.end < offset ? 0.0 : field.values(s, win.end - offset, g);
          const double at_start = win.start < offset ? 0.0 : field.values(s, win.start - offset, g);
          row(col++) = at_end - at_start;
        }
      }
      if (cfg.depth != 2) continue;

      const std::size_t located = pair_channels.size() - (cfg.time_augment ? 1 : 0);
      Eigen::MatrixXd raw(static_cast<Eigen::Index>(located), static_cast<Eigen::Index>(T));
      for (std::size_t k = 0; k < located; ++k) {
        const auto g = static_cast<std::size_t>(pair_channels[k + (cfg.time_augment ? 1 : 0)]);
        for (std::size_t t = 0; t < T; ++t) {
          raw(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) = field.values(s, t, g);
        }
      }
      const Eigen::MatrixXd path = augment_path(raw, cfg.basepoint, cfg.time_augment);
      for (std::size_t w = 0; w < W; ++w) {
        const Eigen::MatrixXd s2 = signature_depth2(path, windows[w].start, windows[w].end);
        for (Eigen::Index i = 0; i < s2.rows(); ++i) {
          for (Eigen::Index j = 0; j < s2.cols(); ++j) row(col++) = s2(i, j);
        }
      }
    }
  });
  return out;
}

std::vector<Fluctuation> signature_fluctuations(const FeatureMatrix& features) {
  const auto S = features.values.rows();
  if (S < 2) {
    throw DataError("signature fluctuations need at least 2 samples");
  }
  std::vector<Fluctuation> out;
  out.reserve(features.cols());
  for (Eigen::Index c = 0; c < features.values.cols(); ++c) {
    // Welford accumulation.
    double mean = 0.0, m2 = 0.0;
    for (Eigen::Index s = 0; s < S; ++s) {
      const double x = features.values(s, c);
      const double delta = x - mean;
      mean += delta / static_cast<double>(s + 1);
      m2 += delta * (x - mean);
    }
    out.push_back({features.columns[static_cast<std::size_t>(c)],
                   std::sqrt(m2 / static_cast<double>(S - 1))});
  }
  std::stable_sort(out.begin(), out.end(), [](const Fluctuation& a, const Fluctuation& b) {
    if (a.column.channels.front() != b.column.channels.front()) {
      return a.column.channels.front() < b.column.channels.front();
    }
    return a.column.window < b.column.window;
  });
  return out;
}

void save_features(const FeatureMatrix& features, const std::filesystem::path& dir,
                   const nlohmann::json& extra_meta) {
  container::Archive archive("feature_matrix");
  auto& meta = archive.meta();
  meta = extra_meta;
  auto cols = nlohmann::json::array();
  for (const auto& c : features.columns) cols.push_back({{"window", c.window}, {"channels", c.channels}});
  meta["col_desc"] = cols;
  auto wins = nlohmann::json::array();
  for (const auto& w : features.windows) wins.push_back({w.level, w.start, w.end});
  meta["windows"] = wins;
  archive.put("values", features.values);
  archive.save(dir);
}

FeatureMatrix load_features(const std::filesystem::path& dir, nlohmann::json* meta_out) {
  const auto archive = container::Archive::load(dir, "feature_matrix");
  FeatureMatrix f;
  try {
    for (const auto& c : archive.meta().at("col_desc")) {
      f.columns.push_back({c.at("window").get<std::size_t>(), c.at("channels").get<std::vector<long>>()});
    }
    for (const auto& w : archive.meta().at("windows")) {
      f.windows.push_back({w.at(0).get<int>(), w.at(1).get<std::size_t>(), w.at(2).get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed feature manifest in " + dir.string() + ": " + e.what());
  }
  f.values = archive.matrix("values");
  if (f.cols() != f.columns.size()) {
    throw DataError("feature blob has " + std::to_string(f.cols()) + " columns but " +
                    std::to_string(f.columns.size()) + " descriptors");
  }
  if (meta_out) *meta_out = archive.meta();
  return f;
}

}  // namespace sigpca::signatures
