#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfdense/dataset.hpp"
#include "rfdense/metrics.hpp"
#include "rfdense/train.hpp"

namespace rfdense {

namespace fs = std::filesystem;

nlohmann::json scene_config_to_json(const SceneConfig& config);
/// Missing keys keep their defaults.
SceneConfig scene_config_from_json(const nlohmann::json& j);

/// Writes the full dataset tree `<root>/{train,val,test}/<id>/`.
void gen_data(const SceneConfig& config, const fs::path& root);

struct TrainOutput {
    Checkpoint checkpoint;
    fs::path path;
    std::string hash;
};

/// Trains on `<config.dataset>/train` (the first data_fraction of it) and
/// writes `<out>/checkpoint.rfd` plus `<out>/train_log.csv`; periodic
/// checkpoints go to `<out>/checkpoint_<step>.rfd`.
TrainOutput train(const TrainConfig& config, const fs::path& out);

/// Coarse/fine pair set stored in the archive container.
void save_coarse_pairs(const fs::path& path, const std::vector<CoarsePair>& pairs);
std::vector<CoarsePair> load_coarse_pairs(const fs::path& path);

/// Trains the sharpener on coarse pairs. With `pairs_path` set the file must
/// exist; otherwise pairs are generated from the core checkpoint over the
/// training split and written to `<out>/coarse_pairs.rfd` first.
TrainOutput train_sharpener(const fs::path& core_checkpoint, const TrainConfig& config, const fs::path& out,
                            const std::optional<fs::path>& pairs_path = {});

/// Largest accepted sharpener step count at inference.
inline constexpr int kMaxSharpenerSteps = 10;

struct InferOptions {
    fs::path core;
    std::optional<fs::path> sharpener;
    /// 0 skips refinement; values above kMaxSharpenerSteps are rejected.
    int sharpener_steps = kMaxSharpenerSteps;
};

struct Predictor {
    Checkpoint core;
    std::optional<Checkpoint> sharpener;
    int sharpener_steps = 0;
    std::string core_hash;
    std::string sharpener_hash;

    static Predictor load(const InferOptions& options);
    /// Annotation latent for one image latent (core, then optional refinement).
    LatentMap predict_latent(const LatentMap& image_latent) const;
};

/// Sharpener refinement of a coarse latent with `steps` Euler steps.
LatentMap refine(const Checkpoint& sharpener, const LatentMap& coarse, int steps);

/// Runs the two-stage pipeline on a scene directory, a directory of scene
/// directories, or a single .ppm image. Writes `<out>/<id>/{disparity.pgm16
/// | normal.ppm16, meta.json}` and returns the ids written.
std::vector<std::string> infer(const InferOptions& options, const fs::path& input, const fs::path& out);

/// Prediction written by `infer`, read back in geometric units.
struct PredictionItem {
    std::string id;
    LatentMap map;  // disparity (1 channel) or unit normals (3 channels)
};
PredictionItem read_prediction(const fs::path& dir, Task task);

/// Scores one prediction against ground truth. Singular alignments are
/// returned as flagged rows rather than thrown.
SampleMetrics score_depth(const std::string& id, const LatentMap& pred_disparity, const SceneSample& gt);
SampleMetrics score_normal(const std::string& id, const LatentMap& pred_normals, const SceneSample& gt);

/// Compares `<pred_dir>/<id>` with `<gt_dir>/<id>`; mismatched id sets
/// raise DataError listing the differences. Writes metrics.csv and
/// metrics.json to `out` when given.
MetricsReport evaluate(const fs::path& pred_dir, const fs::path& gt_dir, Task task,
                       const std::optional<fs::path>& out = {}, const std::string& method = "prediction");

struct SpectrumRow {
    int bin = 0;
    double core = 0.0;
    double sharpened = 0.0;
    double gt = 0.0;
};

/// Mean radial log-power spectrum per bin, averaged over the maps.
std::vector<double> mean_log_spectrum(const std::vector<LatentMap>& maps);
std::vector<SpectrumRow> spectrum_rows(const std::vector<LatentMap>& core, const std::vector<LatentMap>& sharpened,
                                       const std::vector<LatentMap>& gt);
std::string spectrum_csv(const std::vector<SpectrumRow>& rows);

/// Spectrum CSV over the shared ids of three prediction/ground-truth trees.
std::vector<SpectrumRow> spectrum_report(const fs::path& core_dir, const fs::path& sharpened_dir,
                                         const fs::path& gt_dir, Task task, const std::optional<fs::path>& out = {});

/// Mean of the top quarter of bins (by radius).
double top_quartile_mean(const std::vector<double>& log_power);

void write_text(const fs::path& path, const std::string& text);

}  // namespace rfdense
