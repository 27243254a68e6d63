#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

namespace testutil {

/// Fresh empty directory under $GAIT_TEST_TMP (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("GAIT_TEST_TMP");
  const auto base = root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "gait_tests";
  const auto dir = base / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
