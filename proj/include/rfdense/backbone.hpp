#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rfdense/codec.hpp"
#include "rfdense/numerics/graph.hpp"

namespace rfdense {

struct BackboneConfig {
    int latent_channels = 3;
    /// Extra channel-concatenated conditioning map (2C network input).
    bool conditioned = false;
    int blocks = 4;
    int hidden = 32;
    int time_dim = 8;
    /// Local continuity head after unpack.
    bool lcm = false;
    /// false: trunk runs at full latent resolution with per-pixel linear
    /// adapters in place of pack/unpack.
    bool pack_unpack = true;

    int input_channels() const { return conditioned ? 2 * latent_channels : latent_channels; }
    void validate() const;
    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Trainable velocity / clean-data network.
///
/// Layout with pack/unpack (the default):
///
///     pack(z [, cond]) ++ time channels -> in conv -> B x (h + gelu(conv h))
///       -> out conv (4C channels) -> unpack -> [LCM] -> C channels
///
/// Parameter tensors are kept in a fixed order; each one is initialised from
/// its own seed stream derived from (seed, name), so two configurations that
/// share a parameter name and shape start from identical values.
class VelocityNet {
public:
    BackboneConfig config;
    std::uint64_t seed = 0;
    std::vector<NamedTensor> params;

    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    bool has_param(const std::string& name) const;
    std::size_t parameter_count() const;
    void zero_grad();
};

/// Kaiming-uniform kernels (bound sqrt(6 / fan_in)), zero biases.
VelocityNet init_params(std::uint64_t seed, const BackboneConfig& config);

/// Sinusoidal features sin(pi 2^k t), cos(pi 2^k t), k = 0..dim/2-1.
std::vector<double> time_embedding(double t, int dim);

/// Graph-level forward. When `trainable` is true the parameters are bound as
/// gradient-receiving leaves, otherwise as read-only views.
Var forward(Graph& g, VelocityNet& net, Var z, std::optional<Var> conditioning, double t, bool trainable = true);
Var forward(Graph& g, const VelocityNet& net, Var z, std::optional<Var> conditioning, double t);

/// Inference convenience wrapper.
LatentMap forward(const VelocityNet& net, const LatentMap& z, const LatentMap* conditioning, double t);

/// Lambda(h) = k2 * gelu(k1 * h + b1) + b2 with 3x3 replication-padded convs.
Var apply_lcm(Graph& g, Var h, Var kernel1, Var bias1, Var kernel2, Var bias2);
LatentMap apply_lcm(const LatentMap& h, const VelocityNet& net);

/// Output head applied to the packed trunk output: unpack then optional LCM.
/// Exposed for locality analysis of the head in isolation.
LatentMap apply_head(const VelocityNet& net, const LatentMap& packed_output);

}  // namespace rfdense
