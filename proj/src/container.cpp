#include "sigpca/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sigpca/error.hpp"

namespace sigpca::container {

namespace {

static_assert(sizeof(double) == 8);

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = __builtin_bswap64(v);
  }
  return v;
}

}  // namespace

json read_manifest(const fs::path& dir) {
  const auto path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) {
    throw DataError("missing manifest: " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& dir, const json& manifest) {
  fs::create_directories(dir);
  const auto path = dir / kManifestName;
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out << manifest.dump(2) << '\n';
}

void write_blob(const fs::path& file, std::span<const double> values) {
  std::vector<std::uint64_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    words[i] = to_le(std::bit_cast<std::uint64_t>(values[i]));
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write " + file.string());
  }
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint64_t)));
}

std::vector<double> read_blob(const fs::path& file, std::size_t expected_count) {
  std::error_code ec;
  const auto size = fs::file_size(file, ec);
  if (ec) {
    throw DataError("missing blob: " + file.string());
  }
  if (size != expected_count * sizeof(double)) {
    throw DataError("blob size mismatch for " + file.string() + ": expected " +
                    std::to_string(expected_count * sizeof(double)) + " bytes, found " +
                    std::to_string(size));
  }
  std::vector<std::uint64_t> words(expected_count);
  std::ifstream in(file, std::ios::binary);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(size));
  if (!in) {
    throw DataError("short read from " + file.string());
  }
  std::vector<double> values(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    values[i] = std::bit_cast<double>(to_le(words[i]));
  }
  return values;
}

void write_bytes(const fs::path& file, std::span<const std::uint8_t> bytes) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write " + file.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& file, std::size_t expected_count) {
  std::error_code ec;
  const auto size = fs::file_size(file, ec);
  if (ec) {
    throw DataError("missing blob: " + file.string());
  }
  if (size != expected_count) {
    throw DataError("blob size mismatch for " + file.string() + ": expected " +
                    std::to_string(expected_count) + " bytes, found " + std::to_string(size));
  }
  std::vector<std::uint8_t> bytes(expected_count);
  std::ifstream in(file, std::ios::binary);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  return bytes;
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& text, std::uint64_t seed) {
  return fnv1a(std::as_bytes(std::span(text.data(), text.size())), seed);
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t seed) {
  return fnv1a(std::as_bytes(values), seed);
}

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

void Archive::put(const std::string& name, const Eigen::MatrixXd& m) {
  if (contains(name)) {
    throw DataError("duplicate archive segment: " + name);
  }
  Segment seg{name, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
              data_.size()};
  RowMatrix rm = m;
  data_.insert(data_.end(), rm.data(), rm.data() + rm.size());
  segments_.push_back(seg);
}

void Archive::put(const std::string& name, std::span<const double> v) {
  if (contains(name)) {
    throw DataError("duplicate archive segment: " + name);
  }
  segments_.push_back(Segment{name, 1, v.size(), data_.size()});
  data_.insert(data_.end(), v.begin(), v.end());
}

bool Archive::contains(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return true;
  }
  return false;
}

const Archive::Segment& Archive::find(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  throw DataError("archive '" + kind_ + "' has no segment '" + name + "'");
}

Eigen::MatrixXd Archive::matrix(const std::string& name) const {
  const auto& s = find(name);
  Eigen::Map<const RowMatrix> view(data_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                                   static_cast<Eigen::Index>(s.cols));
  return view;
}

std::vector<double> Archive::vector(const std::string& name) const {
  const auto& s = find(name);
  return {data_.begin() + static_cast<std::ptrdiff_t>(s.offset),
          data_.begin() + static_cast<std::ptrdiff_t>(s.offset + s.rows * s.cols)};
}

void Archive::save(const fs::path& dir) const {
  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["kind"] = kind_;
  manifest["byte_order"] = "LE";
  manifest["dtype"] = "f64";
  manifest["meta"] = meta_;
  auto segs = json::array();
  for (const auto& s : segments_) {
    segs.push_back({{"name", s.name}, {"shape", {s.rows, s.cols}}, {"offset", s.offset}});
  }
  manifest["segments"] = segs;
  manifest["count"] = data_.size();
  write_manifest(dir, manifest);
  write_blob(dir / kBlobName, data_);
}

Archive Archive::load(const fs::path& dir, const std::string& expected_kind) {
  const auto manifest = read_manifest(dir);
  try {
    const auto kind = manifest.at("kind").get<std::string>();
    if (!expected_kind.empty() && kind != expected_kind) {
      throw DataError(dir.string() + " holds a '" + kind + "' artifact, expected '" +
                      expected_kind + "'");
    }
    if (manifest.at("byte_order") != "LE" || manifest.at("dtype") != "f64") {
      throw DataError("unsupported blob encoding in " + dir.string());
    }
    Archive a(kind);
    a.meta_ = manifest.at("meta");
    for (const auto& s : manifest.at("segments")) {
      a.segments_.push_back(Segment{s.at("name").get<std::string>(),
                                    s.at("shape").at(0).get<std::size_t>(),
                                    s.at("shape").at(1).get<std::size_t>(),
                                    s.at("offset").get<std::size_t>()});
    }
    a.data_ = read_blob(dir / kBlobName, manifest.at("count").get<std::size_t>());
    return a;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace sigpca::container
