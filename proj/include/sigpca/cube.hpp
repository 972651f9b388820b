#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace sigpca {

/// Dense row-major 3-array indexed as [sample][time step][location].
template <typename T>
class Cube {
public:
  Cube() = default;
  Cube(std::size_t samples, std::size_t steps, std::size_t locations, T fill = T{})
      : dims_{samples, steps, locations}, data_(samples * steps * locations, fill) {}
  Cube(std::size_t samples, std::size_t steps, std::size_t locations, std::vector<T> data)
      : dims_{samples, steps, locations}, data_(std::move(data)) {}

  std::size_t samples() const { return dims_[0]; }
  std::size_t steps() const { return dims_[1]; }
  std::size_t locations() const { return dims_[2]; }
  std::array<std::size_t, 3> shape() const { return dims_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t s, std::size_t t, std::size_t d) { return data_[index(s, t, d)]; }
  const T& operator()(std::size_t s, std::size_t t, std::size_t d) const {
    return data_[index(s, t, d)];
  }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool operator==(const Cube&) const = default;

private:
  std::size_t index(std::size_t s, std::size_t t, std::size_t d) const {
    return (s * dims_[1] + t) * dims_[2] + d;
  }

  std::array<std::size_t, 3> dims_{0, 0, 0};
  std::vector<T> data_;
};

}  // namespace sigpca
