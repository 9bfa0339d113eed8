#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

namespace cosrec::testing {

// Fixture directory comes from the test environment (set by CMake), with a
// source-relative fallback for manual runs.
inline std::string fixture_path(const std::string& name) {
  if (const char* dir = std::getenv("COSREC_FIXTURES")) {
    return (std::filesystem::path(dir) / name).string();
  }
  return (std::filesystem::path("tests") / "fixtures" / name).string();
}

// Per-test scratch directory under the build tree.
inline std::string temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("cosrec_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace cosrec::testing
