#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dreamdpo/errors.hpp"

namespace dreamdpo {

// Image and parameter vectors are plain dense double vectors. Everything at
// desk scale fits comfortably; no linear-algebra package needed.
using Vec = std::vector<double>;

inline void require_same_size(const Vec& a, const Vec& b, const char* what) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(what) + ": size mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
    }
}

inline double dot(const Vec& a, const Vec& b) {
    require_same_size(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(const Vec& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(squared_norm(a)); }

inline double squared_distance(const Vec& a, const Vec& b) {
    require_same_size(a, b, "squared_distance");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline bool all_finite(const Vec& a) {
    for (double v : a) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace dreamdpo
