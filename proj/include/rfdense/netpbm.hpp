#pragma once

#include <filesystem>

#include "rfdense/codec.hpp"

namespace rfdense {

/// Writes a binary PGM (1 channel) or PPM (3 channels) with maxval 65535.
/// Values are clamped to [0,1] and rounded to the nearest 16-bit level.
void write_netpbm16(const std::filesystem::path& path, const PixelMap& map);

/// Reads binary P5/P6 files with any maxval up to 65535; values scaled to [0,1].
PixelMap read_netpbm(const std::filesystem::path& path);

}  // namespace rfdense
