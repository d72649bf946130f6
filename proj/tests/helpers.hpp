#pragma once

#include <doctest.h>

#include <filesystem>
#include <optional>
#include <string>

#include "phenokg/error.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("phenokg_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Kind of the phenokg::Error thrown by `fn`, or nullopt when nothing is thrown.
template <typename Fn>
std::optional<phenokg::ErrorKind> error_kind(Fn&& fn) {
  try {
    fn();
  } catch (const phenokg::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

/// Message of the phenokg::Error thrown by `fn`, empty when nothing is thrown.
template <typename Fn>
std::string error_message(Fn&& fn) {
  try {
    fn();
  } catch (const phenokg::Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace testutil

#define CHECK_KIND(expr, kind) CHECK(testutil::error_kind([&] { (void)(expr); }) == std::optional(kind))
