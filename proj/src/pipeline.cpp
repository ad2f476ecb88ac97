#include "rfdense/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "rfdense/archive.hpp"
#include "rfdense/error.hpp"
#include "rfdense/netpbm.hpp"

namespace rfdense {

using json = nlohmann::json;

nlohmann::json scene_config_to_json(const SceneConfig& c) {
    return json{{"resolution", c.resolution},
                {"spheres", {c.min_spheres, c.max_spheres}},
                {"sphere_radius", {c.min_radius, c.max_radius}},
                {"boxes", {c.min_boxes, c.max_boxes}},
                {"box_half_size", {c.min_box_half, c.max_box_half}},
                {"ground_plane", c.ground_plane},
                {"plane_depth", {c.plane_depth_min, c.plane_depth_max}},
                {"plane_slope", {c.plane_slope_min, c.plane_slope_max}},
                {"plane_tilt_max", c.plane_tilt_max},
                {"light", c.light},
                {"ambient", c.ambient},
                {"palette", c.palette},
                {"background_albedo", c.background_albedo},
                {"depth_range", {c.depth_min, c.depth_max}},
                {"split_sizes", {{"train", c.train_size}, {"val", c.val_size}, {"test", c.test_size}}},
                {"split_seeds", {{"train", c.train_seed}, {"val", c.val_seed}, {"test", c.test_seed}}}};
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
    SceneConfig c;
    reject_unknown_keys(j,
                        {"resolution", "spheres", "sphere_radius", "boxes", "box_half_size", "ground_plane",
                         "plane_depth", "plane_slope", "plane_tilt_max", "light", "ambient", "palette",
                         "background_albedo", "depth_range", "split_sizes", "split_seeds"},
                        "scene config");
    try {
        auto pair = [&](const char* key, auto& lo, auto& hi) {
            if (!j.contains(key)) return;
            lo = j.at(key).at(0);
            hi = j.at(key).at(1);
        };
        c.resolution = j.value("resolution", c.resolution);
        pair("spheres", c.min_spheres, c.max_spheres);
        pair("sphere_radius", c.min_radius, c.max_radius);
        pair("boxes", c.min_boxes, c.max_boxes);
        pair("box_half_size", c.min_box_half, c.max_box_half);
        c.ground_plane = j.value("ground_plane", c.ground_plane);
        pair("plane_depth", c.plane_depth_min, c.plane_depth_max);
        pair("plane_slope", c.plane_slope_min, c.plane_slope_max);
        c.plane_tilt_max = j.value("plane_tilt_max", c.plane_tilt_max);
        if (j.contains("light")) c.light = j.at("light").get<Vec3>();
        c.ambient = j.value("ambient", c.ambient);
        if (j.contains("palette")) c.palette = j.at("palette").get<std::vector<Vec3>>();
        if (j.contains("background_albedo")) c.background_albedo = j.at("background_albedo").get<Vec3>();
        pair("depth_range", c.depth_min, c.depth_max);
        if (j.contains("split_sizes")) {
            const auto& s = j.at("split_sizes");
            c.train_size = s.value("train", c.train_size);
            c.val_size = s.value("val", c.val_size);
            c.test_size = s.value("test", c.test_size);
        }
        if (j.contains("split_seeds")) {
            const auto& s = j.at("split_seeds");
            c.train_seed = s.value("train", c.train_seed);
            c.val_seed = s.value("val", c.val_seed);
            c.test_seed = s.value("test", c.test_seed);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scene config: ") + e.what());
    }
    c.validate();
    return c;
}

void gen_data(const SceneConfig& config, const fs::path& root) { write_dataset(config, root); }

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

namespace {

std::vector<DatasetItem> training_items(const TrainConfig& config) {
    std::vector<DatasetItem> items = load_split(config.dataset, Split::train);
    if (items.empty()) throw DataError("training split under '" + config.dataset + "' is empty");
    const auto keep = static_cast<std::size_t>(std::ceil(config.data_fraction * static_cast<double>(items.size())));
    items.resize(std::clamp<std::size_t>(keep, 1, items.size()));
    for (const auto& item : items) {
        if (item.sample.height() != config.resolution || item.sample.width() != config.resolution) {
            throw ConfigError("dataset resolution does not match the configured resolution " +
                              std::to_string(config.resolution));
        }
    }
    return items;
}

TrainOutput run_training(const TrainConfig& config, const std::vector<TrainingPair>& pairs, const fs::path& out) {
    fs::create_directories(out);
    std::ostringstream log;
    log << "step,loss\n";
    TrainHooks hooks;
    hooks.on_log = [&](std::int64_t step, double loss) {
        char line[64];
        std::snprintf(line, sizeof line, "%lld,%.17g\n", static_cast<long long>(step), loss);
        log << line;
        std::cerr << "step " << step << " loss " << loss << '\n';
    };
    hooks.on_checkpoint = [&](const Checkpoint& ckpt) {
        char name[64];
        std::snprintf(name, sizeof name, "checkpoint_%06lld.rfd", static_cast<long long>(ckpt.step));
        save_checkpoint(out / name, ckpt);
    };
    TrainOutput result;
    result.checkpoint = train_pairs(config, pairs, hooks);
    result.path = out / "checkpoint.rfd";
    result.hash = save_checkpoint(result.path, result.checkpoint);
    write_text(out / "train_log.csv", log.str());
    return result;
}

}  // namespace

TrainOutput train(const TrainConfig& config, const fs::path& out) {
    config.validate();
    if (config.variant.kind == FlowKind::sharpener) throw ConfigError("use train-sharpener for the sharpener variant");
    const auto items = training_items(config);
    const auto latents = encode_items(items, config.task, CodecSpec{config.codec});
    return run_training(config, make_pairs(latents), out);
}

void save_coarse_pairs(const fs::path& path, const std::vector<CoarsePair>& pairs) {
    Archive a;
    a.metadata = json{{"kind", "coarse_pairs"}, {"count", pairs.size()}};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::string id = sample_id(static_cast<int>(i));
        a.tensors.push_back({"coarse/" + id, pairs[i].coarse.to_tensor()});
        a.tensors.push_back({"fine/" + id, pairs[i].fine.to_tensor()});
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_archive(path, a);
}

std::vector<CoarsePair> load_coarse_pairs(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("coarse pair set missing: " + path.string());
    const Archive a = load_archive(path);
    if (a.metadata.value("kind", std::string()) != "coarse_pairs") throw FormatError("archive is not a coarse pair set");
    const std::size_t n = a.metadata.at("count");
    std::vector<CoarsePair> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string id = sample_id(static_cast<int>(i));
        pairs.push_back({LatentMap::from_tensor(a.tensor("coarse/" + id)), LatentMap::from_tensor(a.tensor("fine/" + id))});
    }
    return pairs;
}

TrainOutput train_sharpener(const fs::path& core_checkpoint, const TrainConfig& config, const fs::path& out,
                            const std::optional<fs::path>& pairs_path) {
    config.validate();
    if (config.variant.kind != FlowKind::sharpener) throw ConfigError("train-sharpener needs the sharpener variant");
    const Checkpoint core = load_checkpoint(core_checkpoint);
    if (core.config.task != config.task || core.config.codec != config.codec ||
        core.config.resolution != config.resolution) {
        throw ConfigError("sharpener task, codec and resolution must match the core checkpoint");
    }
    std::vector<CoarsePair> pairs;
    if (pairs_path) {
        pairs = load_coarse_pairs(*pairs_path);
    } else {
        const auto latents = encode_items(training_items(config), config.task, CodecSpec{config.codec});
        pairs = make_coarse_pairs(core, latents);
        save_coarse_pairs(out / "coarse_pairs.rfd", pairs);
    }
    if (pairs.empty()) throw DataError("coarse pair set is empty");
    return run_training(config, make_pairs(pairs), out);
}

LatentMap refine(const Checkpoint& sharpener, const LatentMap& coarse, int steps) {
    const TimeSchedule schedule = TimeSchedule::make(sharpener.config.variant.steps, steps);
    return euler_sample(sharpener.net, coarse, schedule);
}

Predictor Predictor::load(const InferOptions& options) {
    if (options.sharpener_steps < 0 || options.sharpener_steps > kMaxSharpenerSteps) {
        throw ConfigError("sharpener inference steps must lie in [0, " + std::to_string(kMaxSharpenerSteps) + "]");
    }
    Predictor p;
    p.core = load_checkpoint(options.core);
    p.core_hash = archive_content_hash(options.core);
    if (p.core.config.variant.kind == FlowKind::sharpener) throw ConfigError("core checkpoint holds a sharpener");
    if (options.sharpener && options.sharpener_steps > 0) {
        p.sharpener = load_checkpoint(*options.sharpener);
        p.sharpener_hash = archive_content_hash(*options.sharpener);
        const TrainConfig& s = p.sharpener->config;
        if (s.variant.kind != FlowKind::sharpener) throw ConfigError("sharpener checkpoint holds a core-stage model");
        if (s.codec != p.core.config.codec || s.task != p.core.config.task) {
            throw ConfigError("sharpener codec/task does not match the core checkpoint");
        }
        p.sharpener_steps = options.sharpener_steps;
    }
    return p;
}

LatentMap Predictor::predict_latent(const LatentMap& image_latent) const {
    LatentMap z = predict(core, image_latent);
    if (sharpener) z = refine(*sharpener, z, sharpener_steps);
    return z;
}

namespace {

struct InferInput {
    std::string id;
    PixelMap image;
    AnnotationRange range;
};

std::vector<InferInput> collect_inputs(const fs::path& input) {
    std::vector<InferInput> inputs;
    auto add_scene = [&](const fs::path& dir) {
        std::ifstream in(dir / "meta.json");
        const json meta = json::parse(in);
        InferInput item{meta.at("id"), read_netpbm(dir / "image.ppm"), {}};
        item.range = {meta.at("disparity_range").at("min"), meta.at("disparity_range").at("max")};
        inputs.push_back(std::move(item));
    };
    if (fs::is_regular_file(input)) {
        inputs.push_back({input.stem().string(), read_netpbm(input), {}});
    } else if (fs::is_regular_file(input / "meta.json")) {
        add_scene(input);
    } else if (fs::is_directory(input)) {
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(input))
            if (e.is_directory() && fs::exists(e.path() / "meta.json")) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& d : dirs) add_scene(d);
    } else {
        throw DataError("inference input not found: " + input.string());
    }
    if (inputs.empty()) throw DataError("no inference inputs under " + input.string());
    return inputs;
}

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("directory not found: " + dir.string());
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

void require_same_ids(const std::vector<std::string>& a, const std::vector<std::string>& b, const std::string& what) {
    if (a == b) return;
    std::vector<std::string> only_a, only_b;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(only_a));
    std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(only_b));
    std::string msg = what + ": sample ids differ;";
    auto list = [&](const char* label, const std::vector<std::string>& ids) {
        if (ids.empty()) return;
        msg += std::string(" ") + label + ":";
        for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
        if (ids.size() > 20) msg += " ... (" + std::to_string(ids.size()) + " total)";
        msg += ";";
    };
    list("only in first", only_a);
    list("only in second", only_b);
    throw DataError(msg);
}

}  // namespace

std::vector<std::string> infer(const InferOptions& options, const fs::path& input, const fs::path& out) {
    const Predictor predictor = Predictor::load(options);
    const TrainConfig& cc = predictor.core.config;
    const CodecSpec codec{cc.codec};
    std::vector<std::string> ids;
    for (const InferInput& item : collect_inputs(input)) {
        if (item.image.height != cc.resolution || item.image.width != cc.resolution || item.image.channels != 3) {
            throw ConfigError("input '" + item.id + "' is " + shape_string(item.image.shape()) +
                              ", the model expects " + std::to_string(cc.resolution) + "x" +
                              std::to_string(cc.resolution) + "x3");
        }
        const PixelMap decoded = decode(predictor.predict_latent(encode(item.image, codec)), codec);
        const fs::path dir = out / item.id;
        fs::create_directories(dir);
        fs::path map_path;
        json meta{{"id", item.id},
                  {"task", to_string(cc.task)},
                  {"codec", to_string(cc.codec)},
                  {"core_checkpoint", predictor.core_hash},
                  {"sharpener_checkpoint", predictor.sharpener ? json(predictor.sharpener_hash) : json(nullptr)},
                  {"sharpener_steps", predictor.sharpener_steps}};
        if (cc.task == Task::depth) {
            map_path = dir / "disparity.pgm16";
            write_netpbm16(map_path, channel_mean(decoded));
            meta["disparity_range"] = {{"min", item.range.min}, {"max", item.range.max}};
        } else {
            map_path = dir / "normal.ppm16";
            LatentMap unit = normals_from_pixels(decoded);
            for (double& v : unit.values) v = (v + 1.0) / 2.0;
            write_netpbm16(map_path, unit);
        }
        meta["map_sha256"] = sha256_hex(read_file_bytes(map_path));
        write_text(dir / "meta.json", meta.dump(2) + "\n");
        ids.push_back(item.id);
    }
    return ids;
}

PredictionItem read_prediction(const fs::path& dir, Task task) {
    std::ifstream in(dir / "meta.json");
    if (!in) throw DataError("missing " + (dir / "meta.json").string());
    const json meta = json::parse(in);
    PredictionItem p;
    p.id = meta.at("id");
    if (task == Task::depth) {
        const AnnotationRange range{meta.at("disparity_range").at("min"), meta.at("disparity_range").at("max")};
        p.map = disparity_from_pixels(read_netpbm(dir / "disparity.pgm16"), range);
    } else {
        p.map = normals_from_pixels(read_netpbm(dir / "normal.ppm16"));
    }
    return p;
}

SampleMetrics score_depth(const std::string& id, const LatentMap& pred, const SceneSample& gt) {
    SampleMetrics m;
    m.id = id;
    if (!pred.same_shape(gt.disparity)) throw ShapeError("prediction '" + id + "' does not match ground-truth shape");
    try {
        const AlignedDepth aligned = align(pred.values, gt.disparity.values, gt.mask);
        m.absrel = absrel(aligned.values, gt.disparity.values, gt.mask);
        m.delta1 = delta1(aligned.values, gt.disparity.values, gt.mask);
    } catch (const Error& e) {
        m.ok = false;
        m.status = e.kind();
    }
    return m;
}

SampleMetrics score_normal(const std::string& id, const LatentMap& pred, const SceneSample& gt) {
    SampleMetrics m;
    m.id = id;
    if (!pred.same_shape(gt.normal)) throw ShapeError("prediction '" + id + "' does not match ground-truth shape");
    try {
        const AngularStats s = angular_error(pred.values, gt.normal.values, gt.mask);
        m.mean_angle = s.mean_degrees;
        m.below_11_25 = s.fraction_below_11_25;
    } catch (const Error& e) {
        m.ok = false;
        m.status = e.kind();
    }
    return m;
}

MetricsReport evaluate(const fs::path& pred_dir, const fs::path& gt_dir, Task task, const std::optional<fs::path>& out,
                       const std::string& method) {
    const auto ids = sorted_subdirs(pred_dir);
    require_same_ids(ids, sorted_subdirs(gt_dir), "evaluate");
    MetricsReport report;
    report.method = method;
    report.dataset = gt_dir.lexically_normal().string();
    report.task = to_string(task);
    for (const auto& id : ids) {
        const PredictionItem pred = read_prediction(pred_dir / id, task);
        const DatasetItem gt = read_scene(gt_dir / id);
        report.samples.push_back(task == Task::depth ? score_depth(id, pred.map, gt.sample)
                                                     : score_normal(id, pred.map, gt.sample));
    }
    report.finalize();
    if (out) {
        write_text(*out / "metrics.csv", report.to_csv());
        write_text(*out / "metrics.json", report.to_json());
    }
    return report;
}

std::vector<double> mean_log_spectrum(const std::vector<LatentMap>& maps) {
    if (maps.empty()) throw DataError("spectrum needs at least one map");
    std::vector<double> mean;
    for (const auto& m : maps) {
        const auto bins = radial_power_spectrum(m.channels == 1 ? m : channel_mean(m));
        if (mean.empty()) mean.assign(bins.size(), 0.0);
        if (bins.size() != mean.size()) throw ShapeError("spectrum maps differ in size");
        for (std::size_t b = 0; b < bins.size(); ++b) mean[b] += bins[b].log_power;
    }
    for (double& v : mean) v /= static_cast<double>(maps.size());
    return mean;
}

std::vector<SpectrumRow> spectrum_rows(const std::vector<LatentMap>& core, const std::vector<LatentMap>& sharpened,
                                       const std::vector<LatentMap>& gt) {
    const auto c = mean_log_spectrum(core);
    const auto s = mean_log_spectrum(sharpened);
    const auto g = mean_log_spectrum(gt);
    if (c.size() != s.size() || c.size() != g.size()) throw ShapeError("spectrum inputs differ in size");
    std::vector<SpectrumRow> rows;
    for (std::size_t b = 0; b < c.size(); ++b) rows.push_back({static_cast<int>(b), c[b], s[b], g[b]});
    return rows;
}

std::string spectrum_csv(const std::vector<SpectrumRow>& rows) {
    std::ostringstream os;
    os << "bin,core,sharpened,gt\n";
    char line[128];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", r.bin, r.core, r.sharpened, r.gt);
        os << line;
    }
    return os.str();
}

std::vector<SpectrumRow> spectrum_report(const fs::path& core_dir, const fs::path& sharpened_dir,
                                         const fs::path& gt_dir, Task task, const std::optional<fs::path>& out) {
    const auto ids = sorted_subdirs(core_dir);
    require_same_ids(ids, sorted_subdirs(sharpened_dir), "spectrum (core vs sharpened)");
    require_same_ids(ids, sorted_subdirs(gt_dir), "spectrum (core vs ground truth)");
    std::vector<LatentMap> core, sharp, gt;
    for (const auto& id : ids) {
        core.push_back(read_prediction(core_dir / id, task).map);
        sharp.push_back(read_prediction(sharpened_dir / id, task).map);
        const DatasetItem item = read_scene(gt_dir / id);
        gt.push_back(task == Task::depth ? item.sample.disparity : item.sample.normal);
    }
    auto rows = spectrum_rows(core, sharp, gt);
    if (out) write_text(*out, spectrum_csv(rows));
    return rows;
}

double top_quartile_mean(const std::vector<double>& log_power) {
    if (log_power.empty()) throw DataError("empty spectrum");
    const std::size_t start = (3 * log_power.size()) / 4;
    double sum = 0.0;
    for (std::size_t b = start; b < log_power.size(); ++b) sum += log_power[b];
    return sum / static_cast<double>(log_power.size() - start);
}

}  // namespace rfdense
