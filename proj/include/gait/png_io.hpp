#pragma once

#include <filesystem>

#include "gait/data.hpp"

namespace gait {

/// Reads any PNG as 8-bit grayscale (alpha dropped, 16-bit stripped).
Mask read_png_gray(const std::filesystem::path& path);

/// Writes an 8-bit single-channel PNG. Values are written as-is.
void write_png_gray(const std::filesystem::path& path, const Mask& image);

}  // namespace gait
