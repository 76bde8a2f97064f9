#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "dreamdpo/representation.hpp"
#include "dreamdpo/rng.hpp"

using namespace dreamdpo;

namespace {

SplatField2D random_field(Rng& rng, int w, int h, int channels, int n_splats) {
    SplatField2D f;
    f.grid = {w, h, channels};
    for (int k = 0; k < n_splats; ++k) {
        Splat s;
        s.cx = 2.0 + (w - 4.0) * rng.uniform();
        s.cy = 2.0 + (h - 4.0) * rng.uniform();
        s.log_scale = -0.3 + 1.5 * rng.uniform();
        s.amplitude.resize(static_cast<std::size_t>(channels));
        for (auto& a : s.amplitude) a = 2.5 * rng.uniform() - 1.0;
        f.splats.push_back(std::move(s));
    }
    return f;
}

ViewSpec random_view(Rng& rng) {
    if (rng.uniform() < 0.4) return ViewSpec::identity();
    return ViewSpec::affine(rng.uniform() - 0.5, 4.0 * rng.uniform() - 2.0,
                            4.0 * rng.uniform() - 2.0);
}

// J^T v by central finite differences over every parameter.
Vec fd_pullback(const Representation& rep, const ViewSpec& view, const Vec& v) {
    const Vec theta = get_params(rep);
    Vec out(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
        Representation rp = rep, rm = rep;
        Vec tp = theta, tm = theta;
        tp[j] += h;
        tm[j] -= h;
        set_params(rp, tp);
        set_params(rm, tm);
        const Vec ip = render(rp, view);
        const Vec im = render(rm, view);
        double acc = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * (ip[i] - im[i]) / (2.0 * h);
        out[j] = acc;
    }
    return out;
}

// J u by a central directional difference.
Vec fd_jvp(const Representation& rep, const ViewSpec& view, const Vec& u) {
    const Vec theta = get_params(rep);
    const double h = 1e-6;
    Representation rp = rep, rm = rep;
    Vec tp = theta, tm = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        tp[j] += h * u[j];
        tm[j] -= h * u[j];
    }
    set_params(rp, tp);
    set_params(rm, tm);
    const Vec ip = render(rp, view);
    const Vec im = render(rm, view);
    Vec out(ip.size());
    for (std::size_t i = 0; i < ip.size(); ++i) out[i] = (ip[i] - im[i]) / (2.0 * h);
    return out;
}

}  // namespace

TEST_CASE("direct vector renders verbatim, identity view only") {
    const DirectVector dv{{1.0, -2.0, 3.0}};
    REQUIRE(render(dv, ViewSpec::identity()) == dv.params);
    REQUIRE_THROWS_AS(render(dv, ViewSpec::affine(0.1, 0, 0)), ViewError);

    const Vec g{0.5, 0.5, -1.0};
    REQUIRE(pullback(dv, ViewSpec::identity(), g) == g);
    REQUIRE_THROWS_AS(pullback(dv, ViewSpec::identity(), Vec{1.0}), ShapeError);
}

TEST_CASE("splat field trivial renders") {
    SplatField2D empty;
    empty.grid = {4, 3, 1};
    REQUIRE(render(empty, ViewSpec::identity()) == Vec(12, 0.0));

    // single splat centered exactly on a grid point
    SplatField2D one;
    one.grid = {5, 5, 1};
    one.splats.push_back({2.0, 3.0, 0.0, {1.75}});
    const Vec img = render(one, ViewSpec::identity());
    REQUIRE_THAT(img[3 * 5 + 2], Catch::Matchers::WithinRel(1.75, 1e-14));

    // neighbor one grid unit away at scale 1: a * exp(-1/2)
    REQUIRE_THAT(img[3 * 5 + 3], Catch::Matchers::WithinRel(1.75 * std::exp(-0.5), 1e-14));
}

TEST_CASE("render is deterministic bit for bit") {
    Rng rng(41);
    const auto f = random_field(rng, 9, 7, 3, 4);
    const auto v = ViewSpec::affine(0.3, 1.0, -0.5);
    const Vec a = render(f, v);
    const Vec b = render(f, v);
    REQUIRE(a == b);
}

TEST_CASE("identity view equals affine(0,0,0)") {
    Rng rng(43);
    const auto f = random_field(rng, 8, 8, 1, 3);
    const Vec a = render(f, ViewSpec::identity());
    const Vec b = render(f, ViewSpec::affine(0.0, 0.0, 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE_THAT(a[i], Catch::Matchers::WithinAbs(b[i], 1e-15));
    }
}

TEST_CASE("pullback matches finite differences on random splat fields") {
    Rng rng(47);
    for (int rep_i = 0; rep_i < 12; ++rep_i) {
        const Representation rep =
            random_field(rng, 8, 6, rng.uniform() < 0.5 ? 1 : 3, rng.uniform_int(1, 4));
        const ViewSpec view = random_view(rng);
        const Vec v = rng.normal_vec(render_dim(rep));
        const Vec analytic = pullback(rep, view, v);
        const Vec fd = fd_pullback(rep, view, v);
        const double scale = std::max(norm(fd), 1e-6);
        double err2 = 0.0;
        for (std::size_t j = 0; j < analytic.size(); ++j) {
            const double d = analytic[j] - fd[j];
            err2 += d * d;
        }
        REQUIRE(std::sqrt(err2) <= 1e-4 * scale);
    }
}

TEST_CASE("adjoint identity <v, Ju> == <JTv, u>") {
    Rng rng(53);
    for (int rep_i = 0; rep_i < 10; ++rep_i) {
        const Representation rep = random_field(rng, 7, 7, 1, rng.uniform_int(1, 4));
        const ViewSpec view = random_view(rng);
        const Vec u = rng.normal_vec(param_count(rep));
        const Vec v = rng.normal_vec(render_dim(rep));
        const double lhs = dot(v, fd_jvp(rep, view, u));
        const double rhs = dot(pullback(rep, view, v), u);
        REQUIRE_THAT(lhs, Catch::Matchers::WithinRel(rhs, 1e-8));
    }
}

TEST_CASE("pullback is linear in the image gradient") {
    Rng rng(59);
    const Representation rep = random_field(rng, 6, 6, 1, 3);
    const ViewSpec view = ViewSpec::identity();
    const Vec a = rng.normal_vec(render_dim(rep));
    const Vec b = rng.normal_vec(render_dim(rep));
    Vec sum(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) sum[i] = 2.0 * a[i] - 3.0 * b[i];
    const Vec pa = pullback(rep, view, a);
    const Vec pb = pullback(rep, view, b);
    const Vec ps = pullback(rep, view, sum);
    for (std::size_t j = 0; j < ps.size(); ++j) {
        REQUIRE_THAT(ps[j], Catch::Matchers::WithinAbs(2.0 * pa[j] - 3.0 * pb[j], 1e-10));
    }

    // zero image gradient -> zero parameter gradient
    REQUIRE(pullback(rep, view, Vec(render_dim(rep), 0.0)) == Vec(param_count(rep), 0.0));
}

TEST_CASE("parameter flattening round-trips") {
    Rng rng(61);
    Representation rep = random_field(rng, 5, 5, 3, 2);
    REQUIRE(param_count(rep) == 2 * (3 + 3));
    const Vec p = get_params(rep);
    Vec q = p;
    for (auto& v : q) v += 0.25;
    set_params(rep, q);
    REQUIRE(get_params(rep) == q);
    REQUIRE_THROWS_AS(set_params(rep, Vec{1.0}), ShapeError);

    Representation dv = DirectVector{{1.0, 2.0}};
    REQUIRE(render_dim(dv) == 2);
    REQUIRE(param_count(dv) == 2);
}
