#include "rfdense/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "rfdense/error.hpp"

namespace rfdense {

void write_netpbm16(const std::filesystem::path& path, const PixelMap& map) {
    if (map.channels != 1 && map.channels != 3) {
        throw ShapeError("netpbm output needs 1 or 3 channels, got " + std::to_string(map.channels));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << (map.channels == 1 ? "P5" : "P6") << '\n' << map.width << ' ' << map.height << "\n65535\n";
    std::string bytes(map.size() * 2, '\0');
    for (std::size_t i = 0; i < map.size(); ++i) {
        const auto level = static_cast<unsigned>(std::lround(std::clamp(map.values[i], 0.0, 1.0) * 65535.0));
        bytes[2 * i] = static_cast<char>((level >> 8) & 0xff);  // big-endian per the netpbm format
        bytes[2 * i + 1] = static_cast<char>(level & 0xff);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + path.string());
}

namespace {

int read_header_int(std::istream& in) {
    int c = in.peek();
    while (c != EOF) {
        if (std::isspace(c)) {
            in.get();
        } else if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else {
            break;
        }
        c = in.peek();
    }
    int value = -1;
    if (!(in >> value)) throw FormatError("malformed netpbm header");
    return value;
}

}  // namespace

PixelMap read_netpbm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P5" && magic != "P6") throw FormatError(path.string() + ": not a binary PGM/PPM file");
    const int channels = magic == "P5" ? 1 : 3;
    const int width = read_header_int(in);
    const int height = read_header_int(in);
    const int maxval = read_header_int(in);
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
        throw FormatError(path.string() + ": unsupported netpbm dimensions or maxval");
    }
    in.get();  // single whitespace before the raster
    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    const int bytes_per = maxval > 255 ? 2 : 1;
    std::string raw(count * bytes_per, '\0');
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw FormatError(path.string() + ": truncated raster");
    PixelMap map(height, width, channels);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned level = static_cast<unsigned char>(raw[i * bytes_per]);
        if (bytes_per == 2) level = (level << 8) | static_cast<unsigned char>(raw[i * 2 + 1]);
        map.values[i] = static_cast<double>(level) / maxval;
    }
    return map;
}

}  // namespace rfdense
