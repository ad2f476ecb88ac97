#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rfdense/codec.hpp"

namespace rfdense {

using Vec3 = std::array<double, 3>;

/// Scene primitive. Depth is measured along the viewing direction; x and y
/// span [-1, 1] across the image with y pointing up.
struct Primitive {
    enum class Kind { sphere, box, plane };
    Kind kind = Kind::sphere;
    double x = 0.0, y = 0.0;  // sphere / box centre
    double depth = 2.0;       // sphere centre depth, box front-face depth, plane depth at (0,0)
    double radius = 0.0;      // sphere
    double half_width = 0.0, half_height = 0.0;  // box
    double slope_x = 0.0, slope_y = 0.0;         // plane: depth = depth + slope_x x + slope_y y
    Vec3 albedo{0.5, 0.5, 0.5};

    friend bool operator==(const Primitive&, const Primitive&) = default;
};

std::string to_string(Primitive::Kind kind);

struct SceneConfig {
    int resolution = 64;
    int min_spheres = 1, max_spheres = 3;
    double min_radius = 0.15, max_radius = 0.45;
    int min_boxes = 0, max_boxes = 2;
    double min_box_half = 0.1, max_box_half = 0.35;
    bool ground_plane = true;
    double plane_depth_min = 2.6, plane_depth_max = 3.4;
    double plane_slope_min = 0.6, plane_slope_max = 1.4;
    double plane_tilt_max = 0.3;
    Vec3 light{-0.4, 0.5, 0.77};
    double ambient = 0.1;
    std::vector<Vec3> palette{{0.9, 0.3, 0.25}, {0.25, 0.7, 0.3}, {0.3, 0.4, 0.9}, {0.9, 0.85, 0.3},
                              {0.8, 0.4, 0.8},  {0.3, 0.85, 0.85}, {0.95, 0.95, 0.95}, {0.6, 0.45, 0.3}};
    Vec3 background_albedo{0.15, 0.15, 0.2};
    double depth_min = 1.0, depth_max = 4.0;
    int train_size = 2000, val_size = 200, test_size = 200;
    std::uint64_t train_seed = 1, val_seed = 2, test_seed = 3;

    void validate() const;
};

/// Rendered example with exact analytic geometry.
struct SceneSample {
    PixelMap image;          // H x W x 3 in [0,1]
    LatentMap disparity;     // H x W x 1, 1 / depth
    LatentMap normal;        // H x W x 3 unit vectors, z >= 0 toward the viewer
    std::vector<std::uint8_t> mask;   // 1 where a primitive is hit
    std::vector<int> primitive_id;    // index into manifest, -1 for background
    std::uint64_t seed = 0;
    std::vector<Primitive> manifest;

    int height() const { return image.height; }
    int width() const { return image.width; }
};

/// Primitive manifest drawn from `seed`.
std::vector<Primitive> sample_manifest(const SceneConfig& config, std::uint64_t seed);
/// Orthographic ray cast of an explicit primitive list.
SceneSample render_scene(const SceneConfig& config, const std::vector<Primitive>& primitives, std::uint64_t seed = 0);
SceneSample generate(const SceneConfig& config, std::uint64_t seed);

enum class Task { depth, normal };
std::string to_string(Task task);
Task task_from_string(const std::string& name);

enum class Split { train, val, test };
std::string to_string(Split split);
Split split_from_string(const std::string& name);
std::uint64_t sample_seed(const SceneConfig& config, Split split, int index);

struct AnnotationRange {
    double min = 0.0;
    double max = 1.0;
};

/// Encoded (image, annotation) latents plus the normalisation used.
struct TaskLatents {
    LatentMap image;
    LatentMap annotation;
    AnnotationRange range;
};

/// Disparity: per-sample min-max to [0,1], replicated to 3 channels.
/// Normals: components mapped from [-1,1] to [0,1]. Both then encoded.
TaskLatents to_latents(const SceneSample& sample, Task task, const CodecSpec& codec);

LatentMap normalize_disparity(const LatentMap& disparity, AnnotationRange& range_out);
LatentMap denormalize_disparity(const LatentMap& normalized, const AnnotationRange& range);
/// Pixel-space [0,1] annotation map back to geometry: channel-averaged
/// disparity, or per-pixel renormalised normals.
LatentMap disparity_from_pixels(const PixelMap& decoded, const AnnotationRange& range);
LatentMap normals_from_pixels(const PixelMap& decoded);

struct CoarsePair {
    LatentMap coarse;
    LatentMap fine;
};

/// Runs `predict` on every image latent and pairs the result with the
/// ground-truth annotation latent.
std::vector<CoarsePair> make_coarse_pairs(const std::function<LatentMap(std::size_t, const LatentMap&)>& predict,
                                          const std::vector<TaskLatents>& dataset);

}  // namespace rfdense
