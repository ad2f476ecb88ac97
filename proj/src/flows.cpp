#include "rfdense/flows.hpp"

#include "rfdense/error.hpp"

namespace rfdense {

TimeSchedule TimeSchedule::make(int steps, int inference_steps) {
    if (steps < 1) throw ConfigError("time schedule needs at least one training step");
    if (inference_steps < 1 || inference_steps > steps) {
        throw ConfigError("inference steps must lie in [1, " + std::to_string(steps) + "], got " +
                          std::to_string(inference_steps));
    }
    return TimeSchedule{steps, inference_steps};
}

TimeSchedule TimeSchedule::with_default_inference(int steps) { return make(steps, steps > 50 ? 50 : steps); }

std::vector<double> TimeSchedule::grid() const {
    std::vector<double> g;
    for (int i = 1; i <= steps; ++i) g.push_back(grid_value(i));
    return g;
}

std::vector<double> TimeSchedule::inference_times() const {
    std::vector<double> times;
    for (int k = 0; k < inference_steps; ++k) {
        times.push_back(static_cast<double>(inference_steps - k) / inference_steps);
    }
    return times;
}

std::vector<double> TimeSchedule::step_sizes() const {
    const auto times = inference_times();
    std::vector<double> eta;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double next = k + 1 < times.size() ? times[k + 1] : 0.0;
        eta.push_back(times[k] - next);
    }
    return eta;
}

std::string to_string(FlowKind kind) {
    switch (kind) {
        case FlowKind::stochastic_da: return "stochastic_da";
        case FlowKind::deterministic_da: return "deterministic_da";
        case FlowKind::core_predictor: return "core_predictor";
        case FlowKind::sharpener: return "sharpener";
    }
    return "unknown";
}

FlowKind flow_kind_from_string(const std::string& name) {
    for (FlowKind k : {FlowKind::stochastic_da, FlowKind::deterministic_da, FlowKind::core_predictor,
                       FlowKind::sharpener}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown flow variant '" + name + "'");
}

std::string to_string(Parameterization p) { return p == Parameterization::velocity ? "velocity" : "clean_data"; }

SourceEndpoint FlowVariant::source() const {
    switch (kind) {
        case FlowKind::stochastic_da: return SourceEndpoint::gaussian_noise;
        case FlowKind::sharpener: return SourceEndpoint::coarse_prediction;
        default: return SourceEndpoint::image_latent;
    }
}

TargetEndpoint FlowVariant::target() const {
    return kind == FlowKind::sharpener ? TargetEndpoint::fine_annotation : TargetEndpoint::annotation_latent;
}

void FlowVariant::validate() const {
    if (steps < 1) throw ConfigError("flow variant needs at least one time step");
    if (kind == FlowKind::core_predictor && steps != 1) {
        throw ConfigError("core_predictor is a single-step formulation (T=1)");
    }
    if (kind == FlowKind::sharpener && steps != 10) {
        throw ConfigError("sharpener is trained with T'=10 time steps");
    }
}

LatentMap interpolate(const LatentMap& z0, const LatentMap& z1, double t) {
    if (!z0.same_shape(z1)) {
        throw ShapeError("interpolate: endpoint shapes differ " + shape_string(z0.shape()) + " vs " +
                         shape_string(z1.shape()));
    }
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("interpolate: t must lie in [0,1]");
    if (t == 0.0) return z0;
    if (t == 1.0) return z1;
    LatentMap out(z0.height, z0.width, z0.channels);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = t * z1.values[i] + (1.0 - t) * z0.values[i];
    return out;
}

namespace {

LatentMap difference(const LatentMap& a, const LatentMap& b) {
    LatentMap out(a.height, a.width, a.channels);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a.values[i] - b.values[i];
    return out;
}

}  // namespace

FlowSample make_training_sample(const FlowVariant& variant, const TimeSchedule& schedule, const LatentMap& source,
                                const LatentMap& annotation, Rng& rng) {
    variant.validate();
    if (schedule.steps != variant.steps) {
        throw ConfigError("schedule has T=" + std::to_string(schedule.steps) + " but variant " +
                          to_string(variant.kind) + " uses T=" + std::to_string(variant.steps));
    }
    if (!source.same_shape(annotation)) {
        throw ShapeError("training pair shapes differ " + shape_string(source.shape()) + " vs " +
                         shape_string(annotation.shape()));
    }
    FlowSample s;
    s.t = schedule.grid_value(static_cast<int>(rng.index(static_cast<std::uint64_t>(schedule.steps))) + 1);
    s.z0 = annotation;
    if (variant.kind == FlowKind::stochastic_da) {
        s.z1 = LatentMap(annotation.height, annotation.width, annotation.channels);
        for (double& v : s.z1.values) v = rng.normal();
        s.conditioning = source;
    } else {
        s.z1 = source;
    }
    s.z_t = interpolate(s.z0, s.z1, s.t);
    s.target = variant.parameterization() == Parameterization::clean_data ? s.z0 : difference(s.z1, s.z0);
    return s;
}

Var flow_loss(Graph& g, const FlowVariant& variant, Var output, const FlowSample& sample) {
    (void)variant;  // the parameterization is already folded into sample.target
    return mse(g, output, g.constant(sample.target.to_tensor()));
}

double flow_loss(const FlowVariant& variant, const LatentMap& output, const FlowSample& sample) {
    Graph g;
    return g.value(flow_loss(g, variant, g.constant(output.to_tensor()), sample)).data[0];
}

LatentMap euler_sample(const VelocityField& field, const LatentMap& z_start, const TimeSchedule& schedule) {
    const auto times = schedule.inference_times();
    const auto eta = schedule.step_sizes();
    LatentMap z = z_start;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const LatentMap v = field(z, times[k]);
        if (!v.same_shape(z)) throw ShapeError("euler_sample: velocity shape does not match state");
        for (std::size_t i = 0; i < z.size(); ++i) z.values[i] -= eta[k] * v.values[i];
    }
    return z;
}

LatentMap euler_sample(const VelocityNet& net, const LatentMap& z_start, const TimeSchedule& schedule,
                       const LatentMap* conditioning) {
    // The conditioning map is constant along the trajectory and reused as-is.
    return euler_sample([&](const LatentMap& z, double t) { return forward(net, z, conditioning, t); }, z_start,
                        schedule);
}

LatentMap predict_clean(const VelocityNet& net, const FlowVariant& variant, const LatentMap& image_latent) {
    const bool residual = variant.kind == FlowKind::deterministic_da && variant.steps == 1;
    if (variant.kind != FlowKind::core_predictor && !residual) {
        throw ConfigError("predict_clean needs a single-step variant, got " + to_string(variant.kind) + " with T=" +
                          std::to_string(variant.steps));
    }
    LatentMap out = forward(net, image_latent, nullptr, 1.0);
    if (residual) return difference(image_latent, out);
    return out;
}

LatentMap infer_annotation(const VelocityNet& net, const FlowVariant& variant, const TimeSchedule& schedule,
                           const LatentMap& source, Rng* noise) {
    variant.validate();
    if (variant.steps == 1 && variant.kind != FlowKind::stochastic_da) return predict_clean(net, variant, source);
    if (variant.kind == FlowKind::stochastic_da) {
        if (!noise) throw ConfigError("stochastic_da inference needs a noise generator");
        LatentMap eps(source.height, source.width, source.channels);
        for (double& v : eps.values) v = noise->normal();
        return euler_sample(net, eps, schedule, &source);
    }
    return euler_sample(net, source, schedule);
}

}  // namespace rfdense
