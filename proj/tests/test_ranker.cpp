#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "dreamdpo/ranker.hpp"
#include "dreamdpo/rng.hpp"

using namespace dreamdpo;

TEST_CASE("proximity reward peaks at the reference") {
    const Vec ref{1.0, -2.0};
    const Ranker r(RewardSpec::proximity(ref));
    REQUIRE(r.reward(ref) == 0.0);
    REQUIRE(r.reward(Vec{1.0, 0.0}) == -4.0);
    REQUIRE_THROWS_AS(r.reward(Vec{1.0}), ShapeError);
}

TEST_CASE("linear reward hand value") {
    const Ranker r(RewardSpec::linear(Vec{1.0, -1.0}));
    REQUIRE_THAT(r.reward(Vec{2.0, 0.5}), Catch::Matchers::WithinRel(1.5, 1e-15));
}

TEST_CASE("mixture likelihood reward hand value") {
    const auto sched = make_linear_schedule(10, 0.01, 0.02);
    const auto gmm = make_mixture({{1.0, {0.0, 0.0, 0.0}, 1.0, 0}});
    const Ranker r(RewardSpec::mixture_likelihood(0), &gmm, &sched);
    const double expect = -1.5 * std::log(2.0 * M_PI);  // -(D/2) log(2 pi), D = 3
    REQUIRE_THAT(r.reward(Vec{0.0, 0.0, 0.0}), Catch::Matchers::WithinRel(expect, 1e-14));

    // unlabeled variant scores under the full mixture
    const auto gmm2 = make_mixture({{0.5, {4.0}, 1.0, 0}, {0.5, {-4.0}, 1.0, 1}});
    const Ranker r2(RewardSpec::mixture_likelihood(), &gmm2, &sched);
    REQUIRE_THAT(r2.reward(Vec{4.0}), Catch::Matchers::WithinAbs(r2.reward(Vec{-4.0}), 1e-12));
}

TEST_CASE("compare assigns win/lose with ties to the first") {
    const Ranker r(RewardSpec::linear(Vec{1.0}));

    const auto tie = r.compare(Vec{2.0}, Vec{2.0});
    REQUIRE(tie.win_index == 1);
    REQUIRE(tie.lose_index == 2);
    REQUIRE(tie.s_gap == 0.0);

    const auto v = r.compare(Vec{0.5}, Vec{0.2});
    REQUIRE(v.win_index == 1);
    REQUIRE_THAT(v.s_gap, Catch::Matchers::WithinRel(0.3, 1e-12));
    REQUIRE(v.reward_win == 0.5);
    REQUIRE(v.reward_lose == 0.2);

    const Vec ref{3.0, 3.0};
    const Ranker prox(RewardSpec::proximity(ref));
    REQUIRE(prox.compare(ref, Vec{0.0, 0.0}).win_index == 1);
    REQUIRE(prox.compare(Vec{0.0, 0.0}, ref).win_index == 2);
}

TEST_CASE("compare is antisymmetric under argument swap") {
    Rng rng(31);
    const Ranker r(RewardSpec::linear(rng.normal_vec(3)));
    for (int i = 0; i < 50; ++i) {
        const Vec a = rng.normal_vec(3);
        const Vec b = rng.normal_vec(3);
        const auto ab = r.compare(a, b);
        const auto ba = r.compare(b, a);
        REQUIRE(ab.s_gap == ba.s_gap);
        REQUIRE(ab.reward_win == ba.reward_win);
        REQUIRE(ab.reward_lose == ba.reward_lose);
        if (ab.s_gap > 0.0) {
            REQUIRE(ab.win_index == ba.lose_index);
            REQUIRE(ab.lose_index == ba.win_index);
        }
    }
}

TEST_CASE("positive affine reward transforms keep the verdict") {
    // An affine map a*r + b with a > 0 shifts both candidates' scores; the
    // argmax is invariant and s_gap scales by a (intercepts cancel).
    Rng rng(37);
    const Vec g = rng.normal_vec(4);
    for (int i = 0; i < 30; ++i) {
        const double a = 0.1 + 5.0 * rng.uniform();
        Vec ag = g;
        for (auto& v : ag) v *= a;
        const Ranker base(RewardSpec::linear(g));
        const Ranker scaled(RewardSpec::linear(ag));
        const Vec xa = rng.normal_vec(4);
        const Vec xb = rng.normal_vec(4);
        const auto v0 = base.compare(xa, xb);
        const auto v1 = scaled.compare(xa, xb);
        REQUIRE(v0.win_index == v1.win_index);
        REQUIRE_THAT(v1.s_gap, Catch::Matchers::WithinRel(a * v0.s_gap, 1e-10));
    }
}

TEST_CASE("lmm reward flows through transport and parser") {
    auto yes4 = ScriptedTransport::uniform_answer("Yes", 4);
    const Ranker r(RewardSpec::lmm({"q1", "q2", "q3", "q4"}), nullptr, nullptr, &yes4);
    REQUIRE(r.reward(Vec{0.0}) == 4.0);

    auto no2 = ScriptedTransport::uniform_answer("No", 2);
    const Ranker r2(RewardSpec::lmm({"q1", "q2"}), nullptr, nullptr, &no2);
    const auto v = r2.compare(Vec{0.0}, Vec{1.0});
    REQUIRE(v.s_gap == 0.0);
    REQUIRE(v.win_index == 1);
}

TEST_CASE("lmm failures surface as annotation errors") {
    ScriptedTransport broken([](const std::string&, const std::string&) -> std::string {
        throw AnnotationError("endpoint unreachable");
    });
    const Ranker r(RewardSpec::lmm({"q"}), nullptr, nullptr, &broken);
    REQUIRE_THROWS_AS(r.reward(Vec{0.0}), AnnotationError);

    // malformed reply becomes an annotation error as well
    ScriptedTransport garbage(
        [](const std::string&, const std::string&) { return std::string("A1: maybe so"); });
    const Ranker r2(RewardSpec::lmm({"q"}), nullptr, nullptr, &garbage);
    REQUIRE_THROWS_AS(r2.reward(Vec{0.0}), AnnotationError);

    const Ranker r3(RewardSpec::lmm({"q"}));
    REQUIRE_THROWS_AS(r3.reward(Vec{0.0}), AnnotationError);
}

TEST_CASE("reward spec construction guards") {
    REQUIRE_THROWS_AS(RewardSpec::lmm({}), ParameterError);
}
