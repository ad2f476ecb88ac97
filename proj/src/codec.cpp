#include "rfdense/codec.hpp"

#include <algorithm>

#include "rfdense/error.hpp"
#include "rfdense/numerics/graph.hpp"

namespace rfdense {

LatentMap::LatentMap(int h, int w, int c, double fill)
    : height(h), width(w), channels(c), values(shape_size({h, w, c}), fill) {}

LatentMap::LatentMap(int h, int w, int c, std::vector<double> v)
    : height(h), width(w), channels(c), values(std::move(v)) {
    if (shape_size({h, w, c}) != values.size()) {
        throw ShapeError("latent map " + shape_string({h, w, c}) + " does not match " +
                         std::to_string(values.size()) + " values");
    }
}

Tensor LatentMap::to_tensor(bool requires_grad) const { return Tensor(shape(), values, requires_grad); }

LatentMap LatentMap::from_tensor(const Tensor& t) {
    if (t.rank() != 3) throw ShapeError("latent map needs a rank-3 tensor, got " + shape_string(t.shape));
    return LatentMap(t.dim(0), t.dim(1), t.dim(2), t.data);
}

std::string to_string(CodecKind kind) { return kind == CodecKind::identity ? "identity" : "avgpool2"; }

CodecKind codec_kind_from_string(const std::string& name) {
    if (name == "identity") return CodecKind::identity;
    if (name == "avgpool2") return CodecKind::avgpool2;
    throw ConfigError("unknown codec kind '" + name + "'");
}

LatentMap encode(const PixelMap& x, const CodecSpec& spec) {
    if (x.height % 2 != 0 || x.width % 2 != 0) {
        throw ShapeError("encode: odd spatial size " + std::to_string(x.height) + "x" + std::to_string(x.width));
    }
    if (spec.kind == CodecKind::identity) {
        LatentMap z(x.height, x.width, x.channels);
        for (std::size_t i = 0; i < x.size(); ++i) z.values[i] = 2.0 * x.values[i] - 1.0;
        return z;
    }
    LatentMap z(x.height / 2, x.width / 2, x.channels);
    for (int y = 0; y < z.height; ++y) {
        for (int xx = 0; xx < z.width; ++xx) {
            for (int c = 0; c < x.channels; ++c) {
                const double mean = (x.at(2 * y, 2 * xx, c) + x.at(2 * y, 2 * xx + 1, c) +
                                     x.at(2 * y + 1, 2 * xx, c) + x.at(2 * y + 1, 2 * xx + 1, c)) /
                                    4.0;
                z.at(y, xx, c) = 2.0 * mean - 1.0;
            }
        }
    }
    return z;
}

PixelMap decode(const LatentMap& z, const CodecSpec& spec) {
    const int factor = spec.kind == CodecKind::avgpool2 ? 2 : 1;
    PixelMap x(z.height * factor, z.width * factor, z.channels);
    for (int y = 0; y < x.height; ++y) {
        for (int xx = 0; xx < x.width; ++xx) {
            for (int c = 0; c < x.channels; ++c) {
                const double v = (z.at(y / factor, xx / factor, c) + 1.0) / 2.0;
                x.at(y, xx, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return x;
}

LatentMap pack(const LatentMap& z) {
    return LatentMap(z.height / 2, z.width / 2, 4 * z.channels, pack_values(z.values, z.height, z.width, z.channels));
}

LatentMap unpack(const LatentMap& z) {
    auto values = unpack_values(z.values, z.height, z.width, z.channels);
    return LatentMap(z.height * 2, z.width * 2, z.channels / 4, std::move(values));
}

LatentMap replicate_channels(const LatentMap& single, int channels) {
    if (single.channels != 1) throw ShapeError("replicate_channels expects a single-channel map");
    LatentMap out(single.height, single.width, channels);
    for (std::size_t p = 0; p < single.size(); ++p)
        for (int c = 0; c < channels; ++c) out.values[p * channels + c] = single.values[p];
    return out;
}

LatentMap channel_mean(const LatentMap& map) {
    LatentMap out(map.height, map.width, 1);
    for (std::size_t p = 0; p < out.size(); ++p) {
        double sum = 0.0;
        for (int c = 0; c < map.channels; ++c) sum += map.values[p * map.channels + c];
        out.values[p] = sum / map.channels;
    }
    return out;
}

}  // namespace rfdense
