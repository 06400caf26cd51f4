#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include "fiberspec/error.hpp"

namespace testing {

// Code of the fiberspec::Error thrown by `fn`, empty when nothing is thrown.
template <class F>
std::optional<fiberspec::ErrorCode> code_of(F&& fn) {
  try {
    fn();
  } catch (const fiberspec::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& stem) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / (stem + "-" + std::to_string(rd()));
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

}  // namespace testing
