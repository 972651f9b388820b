#pragma once

// On-disk container shared by every artifact: a directory holding
// `manifest.json` plus one or more raw little-endian float64 blobs.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace sigpca::container {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kBlobName = "data.f64";

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

json read_manifest(const fs::path& dir);
void write_manifest(const fs::path& dir, const json& manifest);

/// Writes `values` as little-endian float64.
void write_blob(const fs::path& file, std::span<const double> values);
/// Reads a little-endian float64 blob; throws DataError unless it holds
/// exactly `expected_count` values.
std::vector<double> read_blob(const fs::path& file, std::size_t expected_count);

void write_bytes(const fs::path& file, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const fs::path& file, std::size_t expected_count);

/// FNV-1a over raw bytes. Used for cache keys and provenance records.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = 14695981039346656037ULL);
std::uint64_t fnv1a(const std::string& text, std::uint64_t seed = 14695981039346656037ULL);
std::uint64_t fnv1a(std::span<const double> values, std::uint64_t seed = 14695981039346656037ULL);
std::string hex64(std::uint64_t value);

/// Named 2-D float64 segments packed into a single blob, with free-form
/// metadata in the manifest. Segments are stored row-major.
class Archive {
public:
  explicit Archive(std::string kind = {}) : kind_(std::move(kind)) {}

  json& meta() { return meta_; }
  const json& meta() const { return meta_; }
  const std::string& kind() const { return kind_; }

  void put(const std::string& name, const Eigen::MatrixXd& m);
  void put(const std::string& name, std::span<const double> v);
  Eigen::MatrixXd matrix(const std::string& name) const;
  std::vector<double> vector(const std::string& name) const;
  bool contains(const std::string& name) const;

  void save(const fs::path& dir) const;
  static Archive load(const fs::path& dir, const std::string& expected_kind);

private:
  struct Segment {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
  };
  const Segment& find(const std::string& name) const;

  std::string kind_;
  json meta_ = json::object();
  std::vector<Segment> segments_;
  std::vector<double> data_;
};

}  // namespace sigpca::container
