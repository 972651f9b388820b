#pragma once

#include <stdexcept>
#include <string>

namespace sigpca {

/// Base class for every error raised by the library. The category maps onto
/// the process exit code used by the command-line tool.
class Error : public std::runtime_error {
public:
  enum class Category { config = 2, data = 3, numeric = 4 };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

private:
  Category category_;
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error(Category::config, what) {}
};

class DataError : public Error {
public:
  explicit DataError(const std::string& what) : Error(Category::data, what) {}
};

class NumericError : public Error {
public:
  explicit NumericError(const std::string& what) : Error(Category::numeric, what) {}
};

}  // namespace sigpca
