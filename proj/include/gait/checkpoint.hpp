#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gait {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// One named array; exactly one of f32/f64 is populated.
struct CheckpointTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> f32;
  std::vector<double> f64;
  bool is_f64 = false;
};

/// Binary container: magic "GAITHBS\0", u32 version, string metadata, then named tensors.
/// All integers little-endian.
struct CheckpointFile {
  std::map<std::string, std::string> meta;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
/// Throws DataError("not a checkpoint") on bad magic, and on version mismatch or truncation.
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

}  // namespace gait
