#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace voxelprior {

// File-level failure carrying the offending path.
class IoError : public std::runtime_error {
 public:
  enum class Kind { not_found, read_failed, write_failed, corrupt };

  IoError(Kind kind, std::filesystem::path path, const std::string& cause)
      : std::runtime_error(path.string() + ": " + cause), kind_(kind), path_(std::move(path)) {}

  Kind kind() const noexcept { return kind_; }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  Kind kind_;
  std::filesystem::path path_;
};

// Training or evaluation diverged (NaN loss or gradient).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace voxelprior
