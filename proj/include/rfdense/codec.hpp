#pragma once

#include <span>
#include <string>
#include <vector>

#include "rfdense/numerics/tensor.hpp"

namespace rfdense {

/// H x W x C array of reals, row-major with channels innermost. Carries
/// images, annotations, latents and velocities alike.
struct LatentMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> values;

    LatentMap() = default;
    LatentMap(int h, int w, int c, double fill = 0.0);
    LatentMap(int h, int w, int c, std::vector<double> v);

    double& at(int y, int x, int c) { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const {
        return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t size() const { return values.size(); }
    Shape shape() const { return {height, width, channels}; }
    bool same_shape(const LatentMap& other) const {
        return height == other.height && width == other.width && channels == other.channels;
    }

    Tensor to_tensor(bool requires_grad = false) const;
    static LatentMap from_tensor(const Tensor& t);

    friend bool operator==(const LatentMap&, const LatentMap&) = default;
};

using PixelMap = LatentMap;

enum class CodecKind { identity, avgpool2 };

std::string to_string(CodecKind kind);
CodecKind codec_kind_from_string(const std::string& name);

/// Fixed stand-in for a learned autoencoder. Pixel values in [0,1] map to
/// latents in [-1,1]; avgpool2 additionally halves the resolution.
struct CodecSpec {
    CodecKind kind = CodecKind::avgpool2;

    int latent_height(int pixel_height) const { return kind == CodecKind::avgpool2 ? pixel_height / 2 : pixel_height; }
    int latent_width(int pixel_width) const { return kind == CodecKind::avgpool2 ? pixel_width / 2 : pixel_width; }
};

LatentMap encode(const PixelMap& x, const CodecSpec& spec);
/// Inverse affine map, nearest-neighbour upsampling for avgpool2, clamp to [0,1].
PixelMap decode(const LatentMap& z, const CodecSpec& spec);

/// [H,W,C] -> [H/2,W/2,4C]; patch-position-major channel order (see pack_values).
LatentMap pack(const LatentMap& z);
LatentMap unpack(const LatentMap& z);

/// Replicates a single-channel map to `channels` channels.
LatentMap replicate_channels(const LatentMap& single, int channels);
/// Per-pixel channel average, returns a single-channel map.
LatentMap channel_mean(const LatentMap& map);

}  // namespace rfdense
