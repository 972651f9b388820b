#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sigpca/data.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sigpca_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                     double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  }
  return m;
}

/// Random field with coords on a jittered box and daily labels from 2010-01-01.
inline sigpca::data::GriddedField random_field(std::size_t S, std::size_t T, std::size_t D, std::uint64_t seed,
                                               double offset = 10.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> lat(40.0, 45.0), lon(-90.0, -84.0);
  sigpca::data::GriddedField f;
  f.values = sigpca::Cube<double>(S, T, D, 0.0);
  for (auto& v : f.values.flat()) v = offset + n(rng);
  for (std::size_t g = 0; g < D; ++g) f.coords.push_back({lat(rng), lon(rng)});
  for (std::size_t s = 0; s < S; ++s) {
    f.sample_labels.push_back(sigpca::data::format_iso8601(1262304000 + static_cast<std::int64_t>(s) * 86400));
  }
  f.variable_name = "t2m";
  f.units = "degC";
  return f;
}

/// Small synthetic dataset sized for fast unit tests.
inline sigpca::data::SyntheticSpec small_synthetic(std::uint64_t seed = 7) {
  sigpca::data::SyntheticSpec s;
  s.seed = seed;
  s.samples = 12;
  s.steps = 8;
  s.grid_rows = 5;
  s.grid_cols = 6;
  s.n_stations = 6;
  return s;
}

inline std::vector<double> read_file_doubles(const std::filesystem::path& file) {
  std::vector<double> out(std::filesystem::file_size(file) / sizeof(double));
  std::FILE* f = std::fopen(file.c_str(), "rb");
  if (f) {
    const auto got = std::fread(out.data(), sizeof(double), out.size(), f);
    out.resize(got);
    std::fclose(f);
  }
  return out;
}

}  // namespace testing
