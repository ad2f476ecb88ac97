#include "rfdense/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rfdense/error.hpp"
#include "rfdense/numerics/random.hpp"

namespace rfdense {

std::string to_string(Primitive::Kind kind) {
    switch (kind) {
        case Primitive::Kind::sphere: return "sphere";
        case Primitive::Kind::box: return "box";
        case Primitive::Kind::plane: return "plane";
    }
    return "unknown";
}

void SceneConfig::validate() const {
    if (resolution <= 0 || resolution % 2 != 0) throw ConfigError("scene resolution must be positive and even");
    if (!(depth_min > 0.0) || !(depth_max > depth_min)) throw ConfigError("depth range must be positive and ordered");
    if (max_spheres == 0 && max_boxes == 0 && !ground_plane) {
        throw ConfigError("degenerate scene configuration: no primitives and no ground plane");
    }
    if (min_spheres < 0 || max_spheres < min_spheres || min_boxes < 0 || max_boxes < min_boxes) {
        throw ConfigError("invalid primitive count ranges");
    }
    if (palette.empty()) throw ConfigError("albedo palette is empty");
    if (train_size < 0 || val_size < 0 || test_size < 0) throw ConfigError("split sizes must be non-negative");
}

std::vector<Primitive> sample_manifest(const SceneConfig& c, std::uint64_t seed) {
    c.validate();
    Rng rng(mix_seed(seed, 0x5ce11e));
    std::vector<Primitive> prims;
    auto albedo = [&] { return c.palette[rng.index(c.palette.size())]; };
    if (c.ground_plane) {
        Primitive p;
        p.kind = Primitive::Kind::plane;
        p.depth = rng.uniform(c.plane_depth_min, c.plane_depth_max);
        p.slope_y = rng.uniform(c.plane_slope_min, c.plane_slope_max);
        p.slope_x = rng.uniform(-c.plane_tilt_max, c.plane_tilt_max);
        p.albedo = albedo();
        prims.push_back(p);
    }
    const int spheres = c.min_spheres + static_cast<int>(rng.index(static_cast<std::uint64_t>(c.max_spheres - c.min_spheres + 1)));
    for (int i = 0; i < spheres; ++i) {
        Primitive p;
        p.kind = Primitive::Kind::sphere;
        p.radius = rng.uniform(c.min_radius, c.max_radius);
        p.x = rng.uniform(-0.8, 0.8);
        p.y = rng.uniform(-0.8, 0.8);
        const double lo = c.depth_min + p.radius;
        p.depth = rng.uniform(lo, std::max(lo, 0.5 * (c.depth_min + c.depth_max)));
        p.albedo = albedo();
        prims.push_back(p);
    }
    const int boxes = c.min_boxes + static_cast<int>(rng.index(static_cast<std::uint64_t>(c.max_boxes - c.min_boxes + 1)));
    for (int i = 0; i < boxes; ++i) {
        Primitive p;
        p.kind = Primitive::Kind::box;
        p.half_width = rng.uniform(c.min_box_half, c.max_box_half);
        p.half_height = rng.uniform(c.min_box_half, c.max_box_half);
        p.x = rng.uniform(-0.7, 0.7);
        p.y = rng.uniform(-0.7, 0.7);
        p.depth = rng.uniform(c.depth_min + 0.1, 0.5 * (c.depth_min + c.depth_max) + 0.5);
        p.albedo = albedo();
        prims.push_back(p);
    }
    return prims;
}

namespace {

struct Hit {
    double depth = std::numeric_limits<double>::infinity();
    Vec3 normal{0.0, 0.0, 1.0};
};

Vec3 normalized(Vec3 v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}

bool intersect(const Primitive& p, double x, double y, const SceneConfig& c, Hit& hit) {
    switch (p.kind) {
        case Primitive::Kind::sphere: {
            const double dx = x - p.x, dy = y - p.y;
            const double h2 = p.radius * p.radius - dx * dx - dy * dy;
            if (h2 < 0.0) return false;
            const double h = std::sqrt(h2);
            hit.depth = p.depth - h;
            hit.normal = {dx / p.radius, dy / p.radius, h / p.radius};
            return true;
        }
        case Primitive::Kind::box: {
            if (std::abs(x - p.x) > p.half_width || std::abs(y - p.y) > p.half_height) return false;
            hit.depth = p.depth;
            hit.normal = {0.0, 0.0, 1.0};
            return true;
        }
        case Primitive::Kind::plane: {
            const double d = p.depth + p.slope_x * x + p.slope_y * y;
            if (d < c.depth_min || d > c.depth_max) return false;
            hit.depth = d;
            hit.normal = normalized({p.slope_x, p.slope_y, 1.0});
            return true;
        }
    }
    return false;
}

}  // namespace

SceneSample render_scene(const SceneConfig& c, const std::vector<Primitive>& primitives, std::uint64_t seed) {
    c.validate();
    const int n = c.resolution;
    SceneSample s;
    s.seed = seed;
    s.manifest = primitives;
    s.image = PixelMap(n, n, 3);
    s.disparity = LatentMap(n, n, 1);
    s.normal = LatentMap(n, n, 3);
    s.mask.assign(static_cast<std::size_t>(n) * n, 0);
    s.primitive_id.assign(static_cast<std::size_t>(n) * n, -1);
    const Vec3 light = normalized(c.light);

    for (int row = 0; row < n; ++row) {
        const double y = 1.0 - (2.0 * row + 1.0) / n;
        for (int col = 0; col < n; ++col) {
            const double x = -1.0 + (2.0 * col + 1.0) / n;
            Hit best;
            best.depth = c.depth_max;
            Vec3 albedo = c.background_albedo;
            int id = -1;
            for (std::size_t k = 0; k < primitives.size(); ++k) {
                Hit h;
                if (intersect(primitives[k], x, y, c, h) && h.depth < best.depth) {
                    best = h;
                    albedo = primitives[k].albedo;
                    id = static_cast<int>(k);
                }
            }
            const std::size_t p = static_cast<std::size_t>(row) * n + col;
            s.primitive_id[p] = id;
            s.mask[p] = id >= 0 ? 1 : 0;
            s.disparity.values[p] = 1.0 / best.depth;
            const double lambert = std::max(0.0, best.normal[0] * light[0] + best.normal[1] * light[1] +
                                                     best.normal[2] * light[2]);
            const double shade = c.ambient + (1.0 - c.ambient) * lambert;
            for (int ch = 0; ch < 3; ++ch) {
                s.normal.values[p * 3 + ch] = best.normal[ch];
                s.image.values[p * 3 + ch] = std::clamp(albedo[ch] * shade, 0.0, 1.0);
            }
        }
    }
    return s;
}

SceneSample generate(const SceneConfig& config, std::uint64_t seed) {
    return render_scene(config, sample_manifest(config, seed), seed);
}

std::string to_string(Task task) { return task == Task::depth ? "depth" : "normal"; }

Task task_from_string(const std::string& name) {
    if (name == "depth") return Task::depth;
    if (name == "normal") return Task::normal;
    throw ConfigError("unknown task '" + name + "'");
}

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "unknown";
}

Split split_from_string(const std::string& name) {
    for (Split s : {Split::train, Split::val, Split::test})
        if (to_string(s) == name) return s;
    throw ConfigError("unknown split '" + name + "'");
}

std::uint64_t sample_seed(const SceneConfig& config, Split split, int index) {
    const std::uint64_t base = split == Split::train ? config.train_seed
                               : split == Split::val ? config.val_seed
                                                     : config.test_seed;
    return mix_seed(mix_seed(base, static_cast<std::uint64_t>(split) + 17), static_cast<std::uint64_t>(index));
}

LatentMap normalize_disparity(const LatentMap& disparity, AnnotationRange& range_out) {
    const auto [lo, hi] = std::minmax_element(disparity.values.begin(), disparity.values.end());
    if (lo == disparity.values.end() || !(*hi > *lo)) {
        throw DataError("constant disparity map cannot be min-max normalised");
    }
    range_out = {*lo, *hi};
    LatentMap out(disparity.height, disparity.width, disparity.channels);
    const double span = *hi - *lo;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = (disparity.values[i] - range_out.min) / span;
    return out;
}

LatentMap denormalize_disparity(const LatentMap& normalized, const AnnotationRange& range) {
    LatentMap out(normalized.height, normalized.width, normalized.channels);
    const double span = range.max - range.min;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = normalized.values[i] * span + range.min;
    return out;
}

TaskLatents to_latents(const SceneSample& sample, Task task, const CodecSpec& codec) {
    TaskLatents out;
    out.image = encode(sample.image, codec);
    if (task == Task::depth) {
        if (std::none_of(sample.mask.begin(), sample.mask.end(), [](std::uint8_t m) { return m != 0; })) {
            throw DataError("all-background sample has no depth to normalise");
        }
        out.annotation = encode(replicate_channels(normalize_disparity(sample.disparity, out.range), 3), codec);
    } else {
        LatentMap unit(sample.normal.height, sample.normal.width, 3);
        for (std::size_t i = 0; i < unit.size(); ++i) unit.values[i] = (sample.normal.values[i] + 1.0) / 2.0;
        out.range = {-1.0, 1.0};
        out.annotation = encode(unit, codec);
    }
    return out;
}

LatentMap disparity_from_pixels(const PixelMap& decoded, const AnnotationRange& range) {
    return denormalize_disparity(channel_mean(decoded), range);
}

LatentMap normals_from_pixels(const PixelMap& decoded) {
    if (decoded.channels != 3) throw ShapeError("normal map needs 3 channels");
    LatentMap out(decoded.height, decoded.width, 3);
    for (std::size_t p = 0; p < out.size() / 3; ++p) {
        Vec3 v{};
        double norm2 = 0.0;
        for (int c = 0; c < 3; ++c) {
            v[c] = 2.0 * decoded.values[p * 3 + c] - 1.0;
            norm2 += v[c] * v[c];
        }
        const double norm = std::sqrt(norm2);
        for (int c = 0; c < 3; ++c) out.values[p * 3 + c] = norm > 0.0 ? v[c] / norm : 0.0;
    }
    return out;
}

std::vector<CoarsePair> make_coarse_pairs(const std::function<LatentMap(std::size_t, const LatentMap&)>& predict,
                                          const std::vector<TaskLatents>& dataset) {
    std::vector<CoarsePair> pairs;
    pairs.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        LatentMap coarse = predict(i, dataset[i].image);
        if (!coarse.same_shape(dataset[i].annotation)) {
            throw ShapeError("coarse prediction shape does not match the annotation latent");
        }
        pairs.push_back({std::move(coarse), dataset[i].annotation});
    }
    return pairs;
}

}  // namespace rfdense
