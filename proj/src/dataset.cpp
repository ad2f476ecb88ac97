#include "rfdense/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "rfdense/error.hpp"
#include "rfdense/netpbm.hpp"

namespace rfdense {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string sample_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", index);
    return buf;
}

std::vector<int> mask_to_runs(const std::vector<std::uint8_t>& mask) {
    // Alternating run lengths, starting with a (possibly empty) background run.
    std::vector<int> runs;
    std::uint8_t current = 0;
    int length = 0;
    for (std::uint8_t m : mask) {
        const std::uint8_t bit = m ? 1 : 0;
        if (bit != current) {
            runs.push_back(length);
            current = bit;
            length = 0;
        }
        ++length;
    }
    runs.push_back(length);
    return runs;
}

std::vector<std::uint8_t> runs_to_mask(const std::vector<int>& runs, std::size_t size) {
    std::vector<std::uint8_t> mask;
    mask.reserve(size);
    std::uint8_t bit = 0;
    for (int r : runs) {
        if (r < 0) throw FormatError("negative mask run length");
        mask.insert(mask.end(), static_cast<std::size_t>(r), bit);
        bit ^= 1;
    }
    if (mask.size() != size) throw FormatError("mask runs do not cover the image");
    return mask;
}

namespace {

json primitive_json(const Primitive& p) {
    json j{{"kind", to_string(p.kind)}, {"albedo", p.albedo}, {"depth", p.depth}};
    switch (p.kind) {
        case Primitive::Kind::sphere:
            j["center"] = {p.x, p.y};
            j["radius"] = p.radius;
            break;
        case Primitive::Kind::box:
            j["center"] = {p.x, p.y};
            j["half_size"] = {p.half_width, p.half_height};
            break;
        case Primitive::Kind::plane:
            j["slope"] = {p.slope_x, p.slope_y};
            break;
    }
    return j;
}

Primitive primitive_from_json(const json& j) {
    Primitive p;
    const std::string kind = j.at("kind");
    p.albedo = j.at("albedo").get<Vec3>();
    p.depth = j.at("depth");
    if (kind == "sphere") {
        p.kind = Primitive::Kind::sphere;
        p.x = j.at("center")[0];
        p.y = j.at("center")[1];
        p.radius = j.at("radius");
    } else if (kind == "box") {
        p.kind = Primitive::Kind::box;
        p.x = j.at("center")[0];
        p.y = j.at("center")[1];
        p.half_width = j.at("half_size")[0];
        p.half_height = j.at("half_size")[1];
    } else if (kind == "plane") {
        p.kind = Primitive::Kind::plane;
        p.slope_x = j.at("slope")[0];
        p.slope_y = j.at("slope")[1];
    } else {
        throw FormatError("unknown primitive kind '" + kind + "'");
    }
    return p;
}

}  // namespace

void write_scene(const fs::path& dir, const SceneSample& sample, Split split, int index) {
    fs::create_directories(dir);
    AnnotationRange range;
    const LatentMap normalized = normalize_disparity(sample.disparity, range);
    LatentMap normal01(sample.normal.height, sample.normal.width, 3);
    for (std::size_t i = 0; i < normal01.size(); ++i) normal01.values[i] = (sample.normal.values[i] + 1.0) / 2.0;

    write_netpbm16(dir / "image.ppm", sample.image);
    write_netpbm16(dir / "disparity.pgm16", normalized);
    write_netpbm16(dir / "normal.ppm16", normal01);

    json manifest = json::array();
    for (const auto& p : sample.manifest) manifest.push_back(primitive_json(p));
    json meta{{"id", sample_id(index)},
              {"split", to_string(split)},
              {"seed", sample.seed},
              {"height", sample.height()},
              {"width", sample.width()},
              {"image_range", {0.0, 1.0}},
              {"disparity_range", {{"min", range.min}, {"max", range.max}}},
              {"normal_range", {{"min", -1.0}, {"max", 1.0}}},
              {"mask_runs", mask_to_runs(sample.mask)},
              {"primitives", manifest}};
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << '\n';
    if (!out) throw DataError("failed writing " + (dir / "meta.json").string());
}

DatasetItem read_scene(const fs::path& dir) {
    std::ifstream in(dir / "meta.json");
    if (!in) throw DataError("missing " + (dir / "meta.json").string());
    json meta;
    try {
        meta = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError((dir / "meta.json").string() + ": " + e.what());
    }
    DatasetItem item;
    item.id = meta.at("id");
    SceneSample& s = item.sample;
    s.seed = meta.at("seed");
    s.image = read_netpbm(dir / "image.ppm");
    const AnnotationRange range{meta.at("disparity_range").at("min"), meta.at("disparity_range").at("max")};
    s.disparity = denormalize_disparity(read_netpbm(dir / "disparity.pgm16"), range);
    s.normal = normals_from_pixels(read_netpbm(dir / "normal.ppm16"));
    if (s.image.channels != 3 || s.disparity.channels != 1 || s.normal.channels != 3 ||
        s.image.height != s.disparity.height || s.image.width != s.disparity.width) {
        throw FormatError(dir.string() + ": inconsistent map shapes");
    }
    s.mask = runs_to_mask(meta.at("mask_runs").get<std::vector<int>>(), s.disparity.size());
    s.primitive_id.assign(s.mask.size(), -1);
    for (const auto& p : meta.at("primitives")) s.manifest.push_back(primitive_from_json(p));
    return item;
}

void write_dataset(const SceneConfig& config, const fs::path& root) {
    config.validate();
    for (Split split : {Split::train, Split::val, Split::test}) {
        const int n = split == Split::train ? config.train_size : split == Split::val ? config.val_size : config.test_size;
        for (int i = 0; i < n; ++i) {
            write_scene(root / to_string(split) / sample_id(i), generate(config, sample_seed(config, split, i)), split, i);
        }
    }
}

std::vector<DatasetItem> load_split(const fs::path& root, Split split) {
    const fs::path dir = root / to_string(split);
    if (!fs::is_directory(dir)) throw DataError("dataset split not found: " + dir.string());
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    std::vector<DatasetItem> items;
    for (const auto& p : entries) items.push_back(read_scene(p));
    return items;
}

std::vector<DatasetItem> generate_split(const SceneConfig& config, Split split, std::optional<int> limit) {
    int n = split == Split::train ? config.train_size : split == Split::val ? config.val_size : config.test_size;
    if (limit) n = std::min(n, *limit);
    std::vector<DatasetItem> items;
    for (int i = 0; i < n; ++i) items.push_back({sample_id(i), generate(config, sample_seed(config, split, i))});
    return items;
}

std::vector<TaskLatents> encode_items(const std::vector<DatasetItem>& items, Task task, const CodecSpec& codec) {
    std::vector<TaskLatents> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(to_latents(item.sample, task, codec));
    return out;
}

}  // namespace rfdense
