#include <cmath>
#include <vector>

#include "doctest.h"
#include "msfm/aga.hpp"
#include "msfm/rng.hpp"

using msfm::AgaConfig;
using msfm::CombineBranch;
using msfm::GradientAllocator;
using msfm::GradVector;

namespace {

GradVector grad(std::vector<double> v) { return GradVector(std::move(v)); }

// Build a gradient pair in the plane with prescribed norms and cosine.
std::pair<GradVector, GradVector> pair_with(double norm_fm, double norm_mc, double cosine) {
    GradVector g1 = grad({norm_fm, 0.0});
    GradVector g2 =
        grad({norm_mc * cosine, norm_mc * std::sqrt(std::max(0.0, 1.0 - cosine * cosine))});
    return {g1, g2};
}

double project(const GradVector& v, const GradVector& unit_dir) {
    return dot(v, unit_dir) / l2_norm(unit_dir);
}

}  // namespace

TEST_CASE("closed-form weights on the pinned examples") {
    auto symmetric = msfm::closed_form_weights(1.0, 1.0, 0.0, 1.0);
    REQUIRE(symmetric.has_value());
    CHECK(symmetric->first == 0.5);  // exact

    auto lopsided = msfm::closed_form_weights(2.0, 1.0, 0.0, 1.0);
    REQUIRE(lopsided.has_value());
    CHECK(lopsided->first == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

    auto tilted = msfm::closed_form_weights(1.0, 2.0, 0.5, 0.8);
    REQUIRE(tilted.has_value());
    CHECK(tilted->first == doctest::Approx(0.8).epsilon(1e-12));

    // degenerate denominator
    CHECK_FALSE(msfm::closed_form_weights(0.0, 0.0, 0.0, 1.0).has_value());
}

TEST_CASE("closed-form composite satisfies the projection equality") {
    msfm::Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const double a = 0.1 + 3.0 * rng.uniform();
        const double b = 0.1 + 3.0 * rng.uniform();
        const double cosine = -0.99 + 1.98 * rng.uniform();
        const double c = 0.01 + 0.99 * rng.uniform();
        if (!msfm::scale_factor_valid(a, b, cosine, c)) continue;
        auto weights = msfm::closed_form_weights(a, b, cosine, c);
        REQUIRE(weights.has_value());
        auto [g1, g2] = pair_with(a, b, cosine);
        GradVector composite(2);
        for (int j = 0; j < 2; ++j) {
            composite[static_cast<std::size_t>(j)] =
                weights->first * g1[static_cast<std::size_t>(j)] +
                weights->second * g2[static_cast<std::size_t>(j)];
        }
        const double onto_fm = project(composite, g1);
        const double onto_mc = project(composite, g2);
        CHECK(std::fabs(c * onto_fm - onto_mc) <= 1e-9 * (l2_norm(composite) + 1.0));
    }
}

TEST_CASE("admissible region on the pinned examples") {
    // non-positive cosine: every positive c is admissible
    for (double c : {1e-6, 0.3, 1.0, 5.0}) {
        CHECK(msfm::scale_factor_valid(1.0, 2.0, -0.5, c));
        CHECK(msfm::scale_factor_valid(3.0, 0.5, 0.0, c));
    }
    CHECK_FALSE(msfm::scale_factor_valid(1.0, 1.0, -0.5, 0.0));

    // cosine 0.9, A=1, B=2 (A < B delta): interval (0.9, 1.375)
    CHECK(msfm::scale_factor_valid(1.0, 2.0, 0.9, 1.0));
    CHECK_FALSE(msfm::scale_factor_valid(1.0, 2.0, 0.9, 0.5));
    CHECK_FALSE(msfm::scale_factor_valid(1.0, 2.0, 0.9, 1.5));

    // A = B delta edge: c > max(delta, A/B)
    CHECK(msfm::scale_factor_valid(1.0, 2.0, 0.5, 0.6));
    CHECK_FALSE(msfm::scale_factor_valid(1.0, 2.0, 0.5, 0.4));
}

TEST_CASE("admissibility is equivalent to alpha1 in (0,1) on the operating domain") {
    // c stays in (0,1] in the algorithm (EMA clamp); on that domain the
    // admissible region must agree with alpha1 in (0,1) tuple by tuple.
    msfm::Rng rng(29);
    int admitted = 0;
    for (int trial = 0; trial < 100000; ++trial) {
        const double a = 1e-3 + 4.0 * rng.uniform();
        const double b = 1e-3 + 4.0 * rng.uniform();
        const double cosine = -1.0 + 2.0 * rng.uniform();
        const double c = 1e-6 + (1.0 - 1e-6) * rng.uniform();
        const bool valid = msfm::scale_factor_valid(a, b, cosine, c);
        auto weights = msfm::closed_form_weights(a, b, cosine, c);
        const bool open_unit =
            weights.has_value() && weights->first > 0.0 && weights->first < 1.0;
        CHECK(valid == open_unit);
        admitted += valid ? 1 : 0;
    }
    CHECK(admitted > 1000);  // the domain is not degenerate
}

TEST_CASE("descent-rate update of the scale factor") {
    // equal rates leave c unchanged, exactly
    GradientAllocator aga({0.7, 0.9, 0.1, 0, 1});
    CHECK(aga.update_scale_factor(2.0, 1.0) == 0.7);  // first call: registers only
    CHECK(aga.update_scale_factor(1.0, 0.5) == 0.7);  // both halved: v2/v1 = 1

    // gamma 0.1, v2/v1 = 2, ema 0 -> c * e^0.1
    GradientAllocator sharp({0.5, 0.0, 0.1, 0, 1});
    sharp.update_scale_factor(1.0, 1.0);
    const double c_new = sharp.update_scale_factor(1.0, 2.0);
    CHECK(c_new == doctest::Approx(0.5 * std::exp(0.1)).epsilon(1e-14));

    // lagging consistency keeps strengthening its projection, monotonically
    GradientAllocator up({0.2, 0.0, 0.25, 0, 1});
    up.update_scale_factor(1.0, 1.0);
    double prev = up.scale_factor();
    for (int i = 0; i < 3; ++i) {
        const double next = up.update_scale_factor(1.0, 1.0 * std::pow(1.5, i + 1));
        CHECK(next > prev);
        prev = next;
    }

    // clamp to (0, 1] and survive zero losses via the register floor
    GradientAllocator clamped({1.0, 0.0, 2.0, 0, 1});
    clamped.update_scale_factor(1.0, 0.0);
    const double c = clamped.update_scale_factor(1e-3, 0.0);
    CHECK(c > 0.0);
    CHECK(c <= 1.0);
}

TEST_CASE("pcgrad projection on the pinned examples") {
    // no conflict: both unchanged
    auto [a1, a2] = msfm::pcgrad_project(grad({1.0, 0.0}), grad({1.0, 1.0}));
    CHECK(a1[0] == 1.0);
    CHECK(a1[1] == 0.0);
    CHECK(a2[0] == 1.0);
    CHECK(a2[1] == 1.0);

    // g1 = (1,0), g2 = (-1,1) -> g1' = (0.5, 0.5)
    auto [b1, b2] = msfm::pcgrad_project(grad({1.0, 0.0}), grad({-1.0, 1.0}));
    CHECK(b1[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(b1[1] == doctest::Approx(0.5).epsilon(1e-15));
    // symmetric projection against the original g1
    CHECK(b2[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(b2[1] == doctest::Approx(1.0).epsilon(1e-15));

    // full conflict: the projection removes everything
    auto [c1, c2] = msfm::pcgrad_project(grad({2.0, -1.0}), grad({-2.0, 1.0}));
    CHECK(c1[0] == 0.0);
    CHECK(c1[1] == 0.0);
    CHECK(c2[0] == 0.0);
    CHECK(c2[1] == 0.0);

    // zero-norm gradient passes the other through
    auto [d1, d2] = msfm::pcgrad_project(grad({0.0, 0.0}), grad({3.0, 4.0}));
    CHECK(d2[0] == 3.0);
    CHECK(d2[1] == 4.0);
}

TEST_CASE("pcgrad output pairs are never conflicting") {
    msfm::Rng rng(31);
    for (int trial = 0; trial < 10000; ++trial) {
        const int dim = 2 + rng.uniform_int(6);
        GradVector g1(static_cast<std::size_t>(dim));
        GradVector g2(static_cast<std::size_t>(dim));
        for (int j = 0; j < dim; ++j) {
            g1[static_cast<std::size_t>(j)] = rng.normal();
            g2[static_cast<std::size_t>(j)] = rng.normal();
        }
        auto [p1, p2] = msfm::pcgrad_project(g1, g2);
        CHECK(dot(p1, g2) >= -1e-12 * l2_norm(p1) * l2_norm(g2));
        CHECK(dot(p2, g1) >= -1e-12 * l2_norm(p2) * l2_norm(g1));
        if (dot(g1, g2) >= 0.0) {
            for (int j = 0; j < dim; ++j) {
                CHECK(p1[static_cast<std::size_t>(j)] == g1[static_cast<std::size_t>(j)]);
                CHECK(p2[static_cast<std::size_t>(j)] == g2[static_cast<std::size_t>(j)]);
            }
        }
    }
}

TEST_CASE("combine during the warm start uses equal-weight pcgrad") {
    GradientAllocator aga({1.0, 0.9, 0.1, 100, 1});
    GradVector g1 = grad({2.0, 0.0});
    GradVector g2 = grad({0.0, 1.0});
    auto res = aga.combine(g1, g2, 1.0, 0.1);
    CHECK(res.branch == CombineBranch::WarmStart);
    CHECK(res.direction[0] == 1.0);  // 0.5 * 2
    CHECK(res.direction[1] == 0.5);
    CHECK(res.alpha1 == 0.5);
}

TEST_CASE("combine after the warm start uses the closed form") {
    // A=2, B=1, delta=0, c=1: alpha1 = 1/3, composite projections both 2/3
    GradientAllocator aga({1.0, 0.9, 0.1, 0, 1000});
    GradVector g1 = grad({2.0, 0.0});
    GradVector g2 = grad({0.0, 1.0});
    auto res = aga.combine(g1, g2, 1.0, 1.0);
    CHECK(res.branch == CombineBranch::ClosedForm);
    CHECK(res.alpha1 == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(res.direction[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(res.direction[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("combine falls back to equal weights when c is inadmissible") {
    GradientAllocator aga({0.5, 0.9, 0.1, 0, 1000});
    auto [g1, g2] = pair_with(1.0, 2.0, 0.9);  // requires c > 0.9
    auto res = aga.combine(g1, g2, 1.0, 1.0);
    CHECK(res.branch == CombineBranch::Fallback);
    CHECK(res.alpha1 == 0.5);
    for (int j = 0; j < 2; ++j) {
        CHECK(res.direction[static_cast<std::size_t>(j)] ==
              0.5 * g1[static_cast<std::size_t>(j)] + 0.5 * g2[static_cast<std::size_t>(j)]);
    }
}

TEST_CASE("combine handles vanished gradients and rejects non-finite input") {
    GradientAllocator aga({1.0, 0.9, 0.1, 0, 1000});
    GradVector zero(2);
    GradVector g = grad({3.0, -1.0});
    auto res = aga.combine(g, zero, 1.0, 0.0);
    CHECK(res.branch == CombineBranch::ZeroGrad);
    CHECK(res.direction[0] == 3.0);
    CHECK(res.direction[1] == -1.0);

    GradVector bad = grad({std::nan(""), 0.0});
    CHECK_THROWS_AS(aga.combine(bad, g, 1.0, 1.0), msfm::NumericError);
}

TEST_CASE("scaling both gradients scales the direction and not the weights") {
    msfm::Rng rng(37);
    for (double s : {0.5, 2.0, 1024.0}) {  // powers of two: exact
        auto [g1, g2] = pair_with(1.0 + rng.uniform(), 1.0 + rng.uniform(),
                                  -0.4 + 0.8 * rng.uniform());
        GradVector h1 = g1, h2 = g2;
        for (auto& v : h1.values) v *= s;
        for (auto& v : h2.values) v *= s;

        GradientAllocator base({0.8, 0.9, 0.1, 0, 1000});
        GradientAllocator scaled({0.8, 0.9, 0.1, 0, 1000});
        auto res1 = base.combine(g1, g2, 1.0, 1.0);
        auto res2 = scaled.combine(h1, h2, 1.0, 1.0);
        CHECK(res1.alpha1 == res2.alpha1);
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(res2.direction[j] == s * res1.direction[j]);
        }
    }
}

TEST_CASE("projection equality holds on the closed-form branch of combine") {
    msfm::Rng rng(41);
    int closed_form_hits = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const double a = 0.2 + 2.0 * rng.uniform();
        const double b = 0.2 + 2.0 * rng.uniform();
        const double cosine = -0.95 + 1.9 * rng.uniform();
        auto [g1, g2] = pair_with(a, b, cosine);
        GradientAllocator aga({0.05 + 0.95 * rng.uniform(), 0.9, 0.1, 0, 1000});
        auto res = aga.combine(g1, g2, 1.0, 1.0);
        if (res.branch != CombineBranch::ClosedForm) continue;
        ++closed_form_hits;
        const double onto_fm = project(res.direction, g1);
        const double onto_mc = project(res.direction, g2);
        CHECK(std::fabs(res.c * onto_fm - onto_mc) <=
              1e-9 * (l2_norm(res.direction) + 1.0));
        CHECK(res.alpha1 > 0.0);
        CHECK(res.alpha1 < 1.0);
    }
    CHECK(closed_form_hits > 100);
}
