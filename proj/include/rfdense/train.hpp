#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfdense/archive.hpp"
#include "rfdense/backbone.hpp"
#include "rfdense/codec.hpp"
#include "rfdense/flows.hpp"
#include "rfdense/scenes.hpp"

namespace rfdense {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct Seeds {
    std::uint64_t params = 0;
    std::uint64_t data = 0;
    std::uint64_t noise = 0;
};

struct NetworkShape {
    int blocks = 4;
    int hidden = 32;
    int time_dim = 8;
    bool lcm = false;
    bool pack_unpack = true;
};

/// Throws ConfigError naming the first key of object `j` outside `known`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                         const std::string& where);

struct TrainConfig {
    FlowVariant variant = FlowVariant::core_predictor();
    int inference_steps = 1;
    Task task = Task::depth;
    CodecKind codec = CodecKind::avgpool2;
    /// Pixel resolution of the training images; inference rejects others.
    int resolution = 64;
    NetworkShape network;
    AdamConfig adam;
    int batch_size = 8;
    int steps = 1000;
    Seeds seeds;
    std::string dataset = "scenes";
    double data_fraction = 1.0;
    int log_every = 100;
    int checkpoint_every = 0;

    BackboneConfig backbone() const;
    TimeSchedule schedule() const { return TimeSchedule::make(variant.steps, inference_steps); }
    void validate() const;
    nlohmann::json to_json() const;
    /// Seeds must be given explicitly; missing optional keys take defaults.
    static TrainConfig from_json(const nlohmann::json& j);
};

struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam update over every parameter tensor of `net` using its
/// accumulated gradients.
void adam_update(VelocityNet& net, AdamState& state, const AdamConfig& adam);

struct Checkpoint {
    TrainConfig config;
    VelocityNet net;
    AdamState optimizer;
    std::int64_t step = 0;
    double last_loss = 0.0;
};

Archive to_archive(const Checkpoint& ckpt);
Checkpoint checkpoint_from_archive(const Archive& archive);
/// Returns the content hash.
std::string save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Source/target latents of one training example (image/annotation for
/// the core variants, coarse/fine for the sharpener).
struct TrainingPair {
    LatentMap source;
    LatentMap target;
};

std::vector<TrainingPair> make_pairs(const std::vector<TaskLatents>& latents);
std::vector<TrainingPair> make_pairs(const std::vector<CoarsePair>& pairs);

struct TrainHooks {
    std::function<void(std::int64_t step, double loss)> on_log;
    std::function<void(const Checkpoint&)> on_checkpoint;
    /// Stop as soon as the batch loss falls below this value.
    std::optional<double> stop_below;
};

/// Fresh checkpoint at step 0 (initialised parameters, empty optimizer).
Checkpoint initial_checkpoint(const TrainConfig& config);

/// Runs `config.steps` optimisation steps, resuming from `start` when given.
/// Every random draw is derived from (seed, step, batch slot), so a resumed
/// run replays an uninterrupted one bit-exactly. Throws NumericError on a
/// non-finite loss.
Checkpoint train_pairs(const TrainConfig& config, const std::vector<TrainingPair>& data, const TrainHooks& hooks = {},
                       std::optional<Checkpoint> start = {});

/// Core-stage prediction of the annotation latent for one image latent.
LatentMap predict(const Checkpoint& ckpt, const LatentMap& image_latent, Rng* noise = nullptr);

/// Coarse/fine pairs from a trained core predictor; untrained checkpoints
/// (step 0) are rejected.
std::vector<CoarsePair> make_coarse_pairs(const Checkpoint& core, const std::vector<TaskLatents>& dataset);

}  // namespace rfdense
