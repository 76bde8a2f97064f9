#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "dreamdpo/representation.hpp"
#include "dreamdpo/vec.hpp"

namespace dreamdpo {

// 8-bit image export: PGM (P5) for 1 channel, PPM (P6) for 3. Values are
// mapped linearly from [lo, hi] to 0..255; a degenerate range maps to 0.

struct NormBounds {
    double lo = 0.0, hi = 0.0;
};

inline NormBounds value_bounds(const Vec& image) {
    NormBounds b;
    if (image.empty()) return b;
    b.lo = b.hi = image[0];
    for (double v : image) {
        b.lo = std::min(b.lo, v);
        b.hi = std::max(b.hi, v);
    }
    return b;
}

inline std::string encode_image(const Vec& image, int width, int height, int channels,
                                NormBounds bounds) {
    if (channels != 1 && channels != 3) throw ParameterError("image export supports 1 or 3 channels");
    if (image.size() != static_cast<std::size_t>(width) * height * channels) {
        throw ShapeError("encode_image: size does not match width*height*channels");
    }
    const double span = bounds.hi - bounds.lo;
    std::string out = (channels == 1 ? "P5\n" : "P6\n");
    out += std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.reserve(out.size() + image.size());
    for (double v : image) {
        double u = span > 0.0 ? (v - bounds.lo) / span : 0.0;
        u = std::clamp(u, 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(u * 255.0))));
    }
    return out;
}

// Encodes a render; non-grid vectors (DirectVector) export as a 1-row image.
inline std::string encode_render(const Vec& image, const Representation& rep, NormBounds bounds) {
    if (const auto* s = std::get_if<SplatField2D>(&rep)) {
        return encode_image(image, s->grid.width, s->grid.height, s->grid.channels, bounds);
    }
    return encode_image(image, static_cast<int>(image.size()), 1, 1, bounds);
}

inline void write_binary_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace dreamdpo
