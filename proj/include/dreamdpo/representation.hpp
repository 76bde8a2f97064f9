#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "dreamdpo/vec.hpp"

namespace dreamdpo {

// Parametric generators with differentiable rendering. Two kinds:
//   DirectVector  - parameters ARE the image (identity render/Jacobian)
//   SplatField2D  - additive isotropic Gaussian splats rasterized on a grid,
//                   with the exact adjoint Jacobian product implemented by hand.

struct ViewSpec {
    enum class Kind { identity, affine };
    Kind kind = Kind::identity;
    double angle = 0.0;  // radians, rotation about the grid center
    double tx = 0.0;     // translation, grid units
    double ty = 0.0;

    static ViewSpec identity() { return {}; }
    static ViewSpec affine(double angle, double tx, double ty) {
        ViewSpec v;
        v.kind = Kind::affine;
        v.angle = angle;
        v.tx = tx;
        v.ty = ty;
        return v;
    }
};

struct DirectVector {
    Vec params;
};

struct Splat {
    double cx = 0.0, cy = 0.0;  // center, grid units
    double log_scale = 0.0;     // scale = exp(log_scale) > 0 by construction
    std::vector<double> amplitude;  // one entry per channel
};

struct GridSpec {
    int width = 0, height = 0, channels = 1;
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    std::size_t image_dim() const { return pixel_count() * static_cast<std::size_t>(channels); }
};

struct SplatField2D {
    std::vector<Splat> splats;
    GridSpec grid;
};

using Representation = std::variant<DirectVector, SplatField2D>;

namespace detail {

// Sample position for output pixel (px, py): rotate about the grid center,
// then translate.
struct AffineMap {
    double c, s, cx0, cy0, tx, ty;
    explicit AffineMap(const ViewSpec& v, const GridSpec& g)
        : c(std::cos(v.angle)),
          s(std::sin(v.angle)),
          cx0(0.5 * (g.width - 1)),
          cy0(0.5 * (g.height - 1)),
          tx(v.tx),
          ty(v.ty) {
        if (v.kind == ViewSpec::Kind::identity) {
            this->c = 1.0;
            this->s = 0.0;
            tx = ty = 0.0;
        }
    }
    void apply(double px, double py, double& qx, double& qy) const {
        const double dx = px - cx0, dy = py - cy0;
        qx = c * dx - s * dy + cx0 + tx;
        qy = s * dx + c * dy + cy0 + ty;
    }
};

}  // namespace detail

// ---- render ----------------------------------------------------------------

inline Vec render(const DirectVector& rep, const ViewSpec& view) {
    if (view.kind != ViewSpec::Kind::identity) {
        throw ViewError("DirectVector supports identity views only");
    }
    return rep.params;
}

inline Vec render(const SplatField2D& rep, const ViewSpec& view) {
    const GridSpec& g = rep.grid;
    const int ch = g.channels;
    for (const auto& sp : rep.splats) {
        if (static_cast<int>(sp.amplitude.size()) != ch) {
            throw ShapeError("splat amplitude count does not match grid channels");
        }
    }
    const detail::AffineMap map(view, g);
    Vec out(g.image_dim(), 0.0);
    for (int py = 0; py < g.height; ++py) {
        for (int px = 0; px < g.width; ++px) {
            double qx, qy;
            map.apply(px, py, qx, qy);
            const std::size_t base = (static_cast<std::size_t>(py) * g.width + px) * ch;
            for (const auto& sp : rep.splats) {
                const double scale = std::exp(sp.log_scale);
                const double ux = qx - sp.cx, uy = qy - sp.cy;
                const double k = std::exp(-(ux * ux + uy * uy) / (2.0 * scale * scale));
                for (int c = 0; c < ch; ++c) out[base + c] += sp.amplitude[c] * k;
            }
        }
    }
    return out;
}

inline Vec render(const Representation& rep, const ViewSpec& view) {
    return std::visit([&](const auto& r) { return render(r, view); }, rep);
}

// ---- pullback (adjoint Jacobian product) ------------------------------------

inline Vec pullback(const DirectVector& rep, const ViewSpec& view, const Vec& image_grad) {
    if (view.kind != ViewSpec::Kind::identity) {
        throw ViewError("DirectVector supports identity views only");
    }
    if (image_grad.size() != rep.params.size()) {
        throw ShapeError("pullback: image gradient size does not match render size");
    }
    return image_grad;
}

// Parameter layout per splat: cx, cy, log_scale, amplitude[0..channels-1].
inline Vec pullback(const SplatField2D& rep, const ViewSpec& view, const Vec& image_grad) {
    const GridSpec& g = rep.grid;
    const int ch = g.channels;
    if (image_grad.size() != g.image_dim()) {
        throw ShapeError("pullback: image gradient size does not match render size");
    }
    const detail::AffineMap map(view, g);
    const std::size_t per_splat = 3 + static_cast<std::size_t>(ch);
    Vec grad(rep.splats.size() * per_splat, 0.0);

    for (int py = 0; py < g.height; ++py) {
        for (int px = 0; px < g.width; ++px) {
            double qx, qy;
            map.apply(px, py, qx, qy);
            const std::size_t base = (static_cast<std::size_t>(py) * g.width + px) * ch;
            for (std::size_t j = 0; j < rep.splats.size(); ++j) {
                const auto& sp = rep.splats[j];
                const double scale = std::exp(sp.log_scale);
                const double inv_s2 = 1.0 / (scale * scale);
                const double ux = qx - sp.cx, uy = qy - sp.cy;
                const double d2 = ux * ux + uy * uy;
                const double k = std::exp(-0.5 * d2 * inv_s2);
                double amp_dot = 0.0;  // sum_c grad[p,c] * amplitude[c]
                double* gj = grad.data() + j * per_splat;
                for (int c = 0; c < ch; ++c) {
                    const double gpc = image_grad[base + c];
                    amp_dot += gpc * sp.amplitude[c];
                    gj[3 + c] += gpc * k;  // d render / d amplitude
                }
                // d k / d center = k * u / s^2 ; d k / d log_scale = k * d2 / s^2
                gj[0] += amp_dot * k * ux * inv_s2;
                gj[1] += amp_dot * k * uy * inv_s2;
                gj[2] += amp_dot * k * d2 * inv_s2;
            }
        }
    }
    return grad;
}

inline Vec pullback(const Representation& rep, const ViewSpec& view, const Vec& image_grad) {
    return std::visit([&](const auto& r) { return pullback(r, view, image_grad); }, rep);
}

// ---- parameter flattening ----------------------------------------------------

inline std::size_t render_dim(const Representation& rep) {
    if (const auto* d = std::get_if<DirectVector>(&rep)) return d->params.size();
    return std::get<SplatField2D>(rep).grid.image_dim();
}

inline std::size_t param_count(const Representation& rep) {
    if (const auto* d = std::get_if<DirectVector>(&rep)) return d->params.size();
    const auto& s = std::get<SplatField2D>(rep);
    return s.splats.size() * (3 + static_cast<std::size_t>(s.grid.channels));
}

inline Vec get_params(const Representation& rep) {
    if (const auto* d = std::get_if<DirectVector>(&rep)) return d->params;
    const auto& s = std::get<SplatField2D>(rep);
    Vec p;
    p.reserve(param_count(rep));
    for (const auto& sp : s.splats) {
        p.push_back(sp.cx);
        p.push_back(sp.cy);
        p.push_back(sp.log_scale);
        p.insert(p.end(), sp.amplitude.begin(), sp.amplitude.end());
    }
    return p;
}

inline void set_params(Representation& rep, const Vec& p) {
    if (p.size() != param_count(rep)) throw ShapeError("set_params: wrong parameter count");
    if (auto* d = std::get_if<DirectVector>(&rep)) {
        d->params = p;
        return;
    }
    auto& s = std::get<SplatField2D>(rep);
    std::size_t i = 0;
    for (auto& sp : s.splats) {
        sp.cx = p[i++];
        sp.cy = p[i++];
        sp.log_scale = p[i++];
        for (auto& a : sp.amplitude) a = p[i++];
    }
}

}  // namespace dreamdpo
