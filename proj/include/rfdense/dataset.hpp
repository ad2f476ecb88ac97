#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rfdense/scenes.hpp"

namespace rfdense {

/// One scene of a split, in memory. Loaded items carry the 16-bit
/// quantised maps from disk; generated items carry exact values.
struct DatasetItem {
    std::string id;
    SceneSample sample;
};

std::string sample_id(int index);

/// Writes `<dir>/{image.ppm, disparity.pgm16, normal.ppm16, meta.json}`.
void write_scene(const std::filesystem::path& dir, const SceneSample& sample, Split split, int index);
DatasetItem read_scene(const std::filesystem::path& dir);

/// Writes every split of `config` under `<root>/<split>/<id>/`.
void write_dataset(const SceneConfig& config, const std::filesystem::path& root);
std::vector<DatasetItem> load_split(const std::filesystem::path& root, Split split);
std::vector<DatasetItem> generate_split(const SceneConfig& config, Split split, std::optional<int> limit = {});

std::vector<TaskLatents> encode_items(const std::vector<DatasetItem>& items, Task task, const CodecSpec& codec);

std::vector<int> mask_to_runs(const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> runs_to_mask(const std::vector<int>& runs, std::size_t size);

}  // namespace rfdense
