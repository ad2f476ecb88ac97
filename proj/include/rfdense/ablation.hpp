#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfdense/dataset.hpp"
#include "rfdense/train.hpp"

namespace rfdense {

enum class Arm {
    stochastic_da,
    deterministic_da,
    single_step,
    clean_data,
    lcm,
    without_pack_unpack,
    detail_sharpener,
};

/// Row label used in the ablation table.
std::string arm_label(Arm arm);
Arm arm_from_string(const std::string& name);
std::vector<Arm> all_arms();

struct AblationConfig {
    SceneConfig scenes;
    /// Network, optimiser, batch size, step count and base seeds shared by
    /// every arm. Its variant field is ignored.
    TrainConfig base;
    std::vector<Arm> arms = all_arms();
    int replicates = 3;
    /// Training steps for the multi-step arms (Stochastic-DA, Deterministic-DA).
    int multi_step_T = 50;
    /// Sharpener optimisation steps and learning rate (taken from `base` when unset).
    std::optional<int> sharpener_train_steps;
    std::optional<double> sharpener_learning_rate;
    int sharpener_inference_steps = 10;
    int noise_seeds = 8;
    /// Validation inputs used for the noise-seed variance statistic.
    int variance_inputs = 8;
    bool sweep = true;
    std::vector<int> sweep_steps{1, 10, 50, 100};
    std::vector<double> sweep_scales{0.25, 0.5, 1.0};
    /// Optional caps on the in-memory splits (defaults use the full sizes).
    std::optional<int> train_limit;
    std::optional<int> val_limit;

    void validate() const;
    nlohmann::json to_json() const;
    static AblationConfig from_json(const nlohmann::json& j);
};

/// Validation results of one trained model.
struct Evaluation {
    double absrel = 0.0;
    double delta1 = 0.0;
    /// Samples whose alignment was singular; they are scored with the
    /// shift-only fit (the best constant predictor) instead.
    int flagged = 0;
    double boundary = 0.0;
    /// Mean per-pixel std across noise seeds on fixed inputs.
    double seed_variance = 0.0;
};

struct ArmRun {
    Arm arm = Arm::clean_data;
    int replicate = 0;
    bool ok = true;
    std::string error;
    double final_loss = 0.0;
    /// Wall-clock training and evaluation time; reported through the progress
    /// callback only, so the written CSVs stay byte-reproducible.
    double seconds = 0.0;
    Evaluation eval;
    /// Sharpener arm only: the core predictor it refines, and mean
    /// top-quartile radial log-power of each prediction set.
    std::optional<Evaluation> core_eval;
    double core_top_quartile = 0.0;
    double sharpened_top_quartile = 0.0;
    double gt_top_quartile = 0.0;
    std::vector<double> core_spectrum, sharpened_spectrum, gt_spectrum;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& values);

struct ArmSummary {
    Arm arm = Arm::clean_data;
    int completed = 0;
    int failed = 0;
    MeanStd absrel, delta1, boundary, seed_variance;
};

struct SweepRun {
    int steps = 1;
    double scale = 1.0;
    int replicate = 0;
    bool ok = true;
    std::string error;
    Evaluation eval;
};

struct AblationReport {
    std::vector<ArmRun> runs;
    std::vector<ArmSummary> summaries;
    std::vector<SweepRun> sweep;

    const ArmRun* find(Arm arm, int replicate) const;
    const SweepRun* find_sweep(int steps, double scale, int replicate) const;
    std::string table_csv() const;
    std::string runs_csv() const;
    std::string time_csv() const;
    /// Bins x {core, sharpened, gt} averaged over the sharpener replicates.
    std::string spectrum_csv() const;
};

/// Validation data shared by every arm.
struct AblationData {
    std::vector<TaskLatents> train;
    std::vector<DatasetItem> val_items;
    std::vector<TaskLatents> val;
};
AblationData make_ablation_data(const AblationConfig& config);

/// Scores annotation latents against the validation set (depth task).
Evaluation evaluate_latents(const std::vector<LatentMap>& predictions, const AblationData& data, const CodecSpec& codec);

/// Decoded disparity maps in the ground-truth range of each sample.
std::vector<LatentMap> decode_disparities(const std::vector<LatentMap>& predictions, const AblationData& data,
                                          const CodecSpec& codec);

/// Mean per-pixel population std across `seeds` noise draws per input.
using NoisyPredictor = std::function<LatentMap(const LatentMap& input, Rng& noise)>;
double seed_variance(const NoisyPredictor& sample, const std::vector<LatentMap>& inputs, int seeds,
                     std::uint64_t base_seed);
double seed_variance(const Checkpoint& ckpt, const std::vector<LatentMap>& inputs, int seeds, std::uint64_t base_seed);

using Progress = std::function<void(const std::string&)>;

/// Trains and evaluates every arm for every replicate plus the time sweep.
/// Arms share the data split and data-order seed within a replicate; an arm
/// that fails to train is recorded as failed and the rest continue.
AblationReport run_ablation(const AblationConfig& config, const Progress& progress = {});
AblationReport run_ablation(const AblationConfig& config, const AblationData& data, const Progress& progress = {});

/// Writes table.csv, runs.csv, time.csv, spectrum.csv and config.json.
void write_ablation(const AblationReport& report, const AblationConfig& config, const std::filesystem::path& out);

}  // namespace rfdense
