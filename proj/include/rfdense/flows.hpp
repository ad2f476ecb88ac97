#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rfdense/backbone.hpp"
#include "rfdense/codec.hpp"
#include "rfdense/numerics/graph.hpp"
#include "rfdense/numerics/random.hpp"

namespace rfdense {

/// Discrete time grid {i/T : i = 1..T} for training and a uniform descending
/// grid of `inference_steps` points for Euler integration from t=1 to t=0.
struct TimeSchedule {
    int steps = 1;
    int inference_steps = 1;

    /// Throws ConfigError unless steps >= 1 and 1 <= inference_steps <= steps.
    static TimeSchedule make(int steps, int inference_steps);
    /// Uses T_inf = T for T <= 50 and T_inf = 50 otherwise.
    static TimeSchedule with_default_inference(int steps);

    double grid_value(int i) const { return static_cast<double>(i) / steps; }
    std::vector<double> grid() const;
    /// Descending start times t_k = (T_inf - k) / T_inf, k = 0..T_inf-1.
    std::vector<double> inference_times() const;
    /// Step sizes between consecutive inference times, the last step ending at 0.
    std::vector<double> step_sizes() const;
};

enum class FlowKind { stochastic_da, deterministic_da, core_predictor, sharpener };
enum class Parameterization { velocity, clean_data };
enum class SourceEndpoint { gaussian_noise, image_latent, coarse_prediction };
enum class TargetEndpoint { annotation_latent, fine_annotation };

std::string to_string(FlowKind kind);
FlowKind flow_kind_from_string(const std::string& name);
std::string to_string(Parameterization p);

/// One of the four transport formulations. Endpoints, parameterization and
/// conditioning are fixed by `kind`; only deterministic_da and stochastic_da
/// take a free step count (deterministic_da with steps=1 is the single-step
/// residual formulation).
struct FlowVariant {
    FlowKind kind = FlowKind::core_predictor;
    int steps = 1;

    static FlowVariant stochastic(int steps) { return {FlowKind::stochastic_da, steps}; }
    static FlowVariant deterministic(int steps) { return {FlowKind::deterministic_da, steps}; }
    static FlowVariant core_predictor() { return {FlowKind::core_predictor, 1}; }
    static FlowVariant sharpener() { return {FlowKind::sharpener, 10}; }

    Parameterization parameterization() const {
        return kind == FlowKind::core_predictor ? Parameterization::clean_data : Parameterization::velocity;
    }
    SourceEndpoint source() const;
    TargetEndpoint target() const;
    bool conditioned() const { return kind == FlowKind::stochastic_da; }
    bool deterministic_inference() const { return kind != FlowKind::stochastic_da; }
    void validate() const;

    friend bool operator==(const FlowVariant&, const FlowVariant&) = default;
};

struct FlowSample {
    LatentMap z0;  // target endpoint
    LatentMap z1;  // source endpoint
    double t = 1.0;
    LatentMap z_t;
    LatentMap target;  // z1 - z0 for velocity, z0 for clean data
    std::optional<LatentMap> conditioning;
};

/// t * z1 + (1 - t) * z0; returns z0 / z1 bit-exactly at t = 0 / 1.
LatentMap interpolate(const LatentMap& z0, const LatentMap& z1, double t);

/// Draws t uniformly from the training grid (and, for stochastic_da, the
/// noise endpoint) from `rng`. `source` is the image latent, or the coarse
/// prediction for the sharpener; `annotation` is the target latent.
FlowSample make_training_sample(const FlowVariant& variant, const TimeSchedule& schedule, const LatentMap& source,
                                const LatentMap& annotation, Rng& rng);

/// Graph-level objective: mse(net output, sample.target).
Var flow_loss(Graph& g, const FlowVariant& variant, Var output, const FlowSample& sample);
double flow_loss(const FlowVariant& variant, const LatentMap& output, const FlowSample& sample);

using VelocityField = std::function<LatentMap(const LatentMap& z, double t)>;

/// Euler integration z <- z - eta * f(z, t) along the schedule's inference grid.
LatentMap euler_sample(const VelocityField& field, const LatentMap& z_start, const TimeSchedule& schedule);
LatentMap euler_sample(const VelocityNet& net, const LatentMap& z_start, const TimeSchedule& schedule,
                       const LatentMap* conditioning = nullptr);

/// Single network evaluation at t=1: clean-data nets return f(z^x, 1), the
/// single-step residual formulation returns z^x - f(z^x, 1).
LatentMap predict_clean(const VelocityNet& net, const FlowVariant& variant, const LatentMap& image_latent);

/// Full inference for any variant: single-step prediction, multi-step Euler
/// from the image latent, or Euler from Gaussian noise (stochastic_da, drawn
/// from `noise`) with the image latent as conditioning.
LatentMap infer_annotation(const VelocityNet& net, const FlowVariant& variant, const TimeSchedule& schedule,
                           const LatentMap& source, Rng* noise = nullptr);

}  // namespace rfdense
