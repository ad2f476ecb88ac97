#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfdense/numerics/tensor.hpp"

namespace rfdense {

/// Binary container for named tensors plus a JSON metadata block.
///
///     "RFDARCH\0"  magic (8 bytes)
///     u32          format version
///     u64 + bytes  metadata JSON (UTF-8)
///     u64          tensor count
///     per tensor:  u32 name length, name, u32 rank, rank x u64 dims,
///                  product(dims) x f64 values
///     32 bytes     SHA-256 of everything above
///
/// All integers and doubles are little-endian.
struct Archive {
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    const Tensor& tensor(const std::string& name) const;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

std::string serialize_archive(const Archive& archive);
/// Verifies magic, version and content hash.
Archive parse_archive(std::string_view bytes);

/// Returns the hex content hash of the written file.
std::string save_archive(const std::filesystem::path& path, const Archive& archive);
Archive load_archive(const std::filesystem::path& path);
/// Verified hex content hash stored in an archive file's trailer.
std::string archive_content_hash(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace rfdense
