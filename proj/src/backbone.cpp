#include "rfdense/backbone.hpp"

#include <cmath>
#include <functional>
#include <numbers>

#include "rfdense/error.hpp"
#include "rfdense/numerics/random.hpp"

namespace rfdense {

void BackboneConfig::validate() const {
    if (latent_channels <= 0 || blocks < 0 || hidden <= 0 || time_dim < 0 || time_dim % 2 != 0) {
        throw ConfigError("invalid backbone configuration (channels, blocks, hidden, even time_dim)");
    }
}

Tensor& VelocityNet::param(const std::string& name) {
    for (auto& p : params)
        if (p.name == name) return p.tensor;
    throw ConfigError("network has no parameter '" + name + "'");
}

const Tensor& VelocityNet::param(const std::string& name) const {
    return const_cast<VelocityNet*>(this)->param(name);
}

bool VelocityNet::has_param(const std::string& name) const {
    for (const auto& p : params)
        if (p.name == name) return true;
    return false;
}

std::size_t VelocityNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.tensor.size();
    return n;
}

void VelocityNet::zero_grad() {
    for (auto& p : params) p.tensor.zero_grad();
}

namespace {

std::vector<std::pair<std::string, Shape>> parameter_layout(const BackboneConfig& c) {
    const int cin = c.input_channels();
    const int packed_in = 4 * cin + c.time_dim;
    const int packed_out = 4 * c.latent_channels;
    std::vector<std::pair<std::string, Shape>> layout;
    if (!c.pack_unpack) {
        layout.push_back({"lift.weight", {cin, 4 * cin}});
        layout.push_back({"lift.bias", {4 * cin}});
    }
    layout.push_back({"in.kernel", {3, 3, packed_in, c.hidden}});
    layout.push_back({"in.bias", {c.hidden}});
    for (int b = 0; b < c.blocks; ++b) {
        layout.push_back({"block" + std::to_string(b) + ".kernel", {3, 3, c.hidden, c.hidden}});
        layout.push_back({"block" + std::to_string(b) + ".bias", {c.hidden}});
    }
    layout.push_back({"out.kernel", {3, 3, c.hidden, packed_out}});
    layout.push_back({"out.bias", {packed_out}});
    if (!c.pack_unpack) {
        layout.push_back({"proj.weight", {packed_out, c.latent_channels}});
        layout.push_back({"proj.bias", {c.latent_channels}});
    }
    if (c.lcm) {
        layout.push_back({"lcm1.kernel", {3, 3, c.latent_channels, c.latent_channels}});
        layout.push_back({"lcm1.bias", {c.latent_channels}});
        layout.push_back({"lcm2.kernel", {3, 3, c.latent_channels, c.latent_channels}});
        layout.push_back({"lcm2.bias", {c.latent_channels}});
    }
    return layout;
}

int fan_in(const Shape& shape) {
    if (shape.size() == 4) return shape[0] * shape[1] * shape[2];
    return shape[0];
}

}  // namespace

VelocityNet init_params(std::uint64_t seed, const BackboneConfig& config) {
    config.validate();
    VelocityNet net;
    net.config = config;
    net.seed = seed;
    for (auto& [name, shape] : parameter_layout(config)) {
        Tensor t = Tensor::zeros(shape, true);
        if (shape.size() > 1) {
            Rng rng(mix_seed(seed, hash_name(name)));
            const double bound = std::sqrt(6.0 / fan_in(shape));
            for (double& v : t.data) v = rng.uniform(-bound, bound);
        }
        net.params.push_back({name, std::move(t)});
    }
    return net;
}

std::vector<double> time_embedding(double t, int dim) {
    std::vector<double> e(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim / 2; ++k) {
        const double freq = std::numbers::pi * std::ldexp(1.0, k);
        e[2 * k] = std::sin(freq * t);
        e[2 * k + 1] = std::cos(freq * t);
    }
    return e;
}

Var apply_lcm(Graph& g, Var h, Var kernel1, Var bias1, Var kernel2, Var bias2) {
    return conv2d(g, gelu(g, conv2d(g, h, kernel1, bias1)), kernel2, bias2);
}

namespace {

using Binder = std::function<Var(const std::string&)>;

Var per_pixel_linear(Graph& g, Var x, Var weight, Var bias) {
    const Shape s = g.shape(x);
    const int out = g.shape(weight).at(1);
    Var flat = reshape(g, x, {s[0] * s[1], s[2]});
    return reshape(g, linear(g, flat, weight, bias), {s[0], s[1], out});
}

Var forward_impl(Graph& g, const BackboneConfig& c, const Binder& bind, Var z, std::optional<Var> conditioning,
                 double t) {
    const Shape zs = g.shape(z);
    if (zs.size() != 3 || zs[2] != c.latent_channels) {
        throw ShapeError("forward: expected a [H,W," + std::to_string(c.latent_channels) + "] latent, got " +
                         shape_string(zs));
    }
    if (c.conditioned != conditioning.has_value()) {
        throw ShapeError(c.conditioned ? "forward: network expects a conditioning map"
                                       : "forward: network takes no conditioning map");
    }
    if (conditioning && g.shape(*conditioning) != zs) {
        throw ShapeError("forward: conditioning shape " + shape_string(g.shape(*conditioning)) +
                         " does not match latent " + shape_string(zs));
    }
    if (c.pack_unpack && (zs[0] % 2 != 0 || zs[1] % 2 != 0)) {
        throw ShapeError("forward: latent spatial dims must be even");
    }

    Var h;
    if (c.pack_unpack) {
        h = pack(g, z);
        if (conditioning) h = concat_channels(g, h, pack(g, *conditioning));
    } else {
        h = conditioning ? concat_channels(g, z, *conditioning) : z;
        h = per_pixel_linear(g, h, bind("lift.weight"), bind("lift.bias"));
    }
    if (c.time_dim > 0) {
        const Shape hs = g.shape(h);
        const auto emb = time_embedding(t, c.time_dim);
        Tensor tmap = Tensor::zeros({hs[0], hs[1], c.time_dim});
        for (std::size_t p = 0; p < static_cast<std::size_t>(hs[0]) * hs[1]; ++p)
            std::copy(emb.begin(), emb.end(), tmap.data.begin() + p * c.time_dim);
        h = concat_channels(g, h, g.constant(std::move(tmap)));
    }
    h = conv2d(g, h, bind("in.kernel"), bind("in.bias"));
    for (int b = 0; b < c.blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b);
        h = add(g, h, gelu(g, conv2d(g, h, bind(prefix + ".kernel"), bind(prefix + ".bias"))));
    }
    h = conv2d(g, h, bind("out.kernel"), bind("out.bias"));
    h = c.pack_unpack ? unpack(g, h) : per_pixel_linear(g, h, bind("proj.weight"), bind("proj.bias"));
    if (c.lcm) {
        h = apply_lcm(g, h, bind("lcm1.kernel"), bind("lcm1.bias"), bind("lcm2.kernel"), bind("lcm2.bias"));
    }
    return h;
}

}  // namespace

Var forward(Graph& g, VelocityNet& net, Var z, std::optional<Var> conditioning, double t, bool trainable) {
    if (!trainable) return forward(g, static_cast<const VelocityNet&>(net), z, conditioning, t);
    Binder bind = [&](const std::string& name) { return g.parameter(net.param(name)); };
    return forward_impl(g, net.config, bind, z, conditioning, t);
}

Var forward(Graph& g, const VelocityNet& net, Var z, std::optional<Var> conditioning, double t) {
    Binder bind = [&](const std::string& name) { return g.constant_view(net.param(name)); };
    return forward_impl(g, net.config, bind, z, conditioning, t);
}

LatentMap forward(const VelocityNet& net, const LatentMap& z, const LatentMap* conditioning, double t) {
    Graph g;
    Var zin = g.constant(z.to_tensor());
    std::optional<Var> cond;
    if (conditioning) cond = g.constant(conditioning->to_tensor());
    return LatentMap::from_tensor(g.value(forward(g, net, zin, cond, t)));
}

LatentMap apply_lcm(const LatentMap& h, const VelocityNet& net) {
    Graph g;
    Var out = apply_lcm(g, g.constant(h.to_tensor()), g.constant_view(net.param("lcm1.kernel")),
                        g.constant_view(net.param("lcm1.bias")), g.constant_view(net.param("lcm2.kernel")),
                        g.constant_view(net.param("lcm2.bias")));
    return LatentMap::from_tensor(g.value(out));
}

LatentMap apply_head(const VelocityNet& net, const LatentMap& packed_output) {
    LatentMap h = unpack(packed_output);
    return net.config.lcm ? apply_lcm(h, net) : h;
}

}  // namespace rfdense
