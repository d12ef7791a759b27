#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <reclab/hitstats.hpp>
#include <reclab/measures.hpp>
#include <reclab/radii.hpp>
#include <reclab/rng.hpp>
#include <reclab/systems.hpp>

using namespace reclab;

namespace {

RadiusSchedule constant_explicit(double r) { return explicit_pow_schedule(0.0, r); }

}  // namespace

TEST_CASE("recurrence series basics") {
    const MapSystem s = make_doubling();
    const DensityMeasure m = lebesgue_circle();

    SECTION("fixed point hits every step") {
        const auto hs = recurrence_series(s, m, implicit_pow_schedule(0.5), make_point(0.0), 50);
        REQUIRE(hs.size() == 50);
        CHECK(hs.hits_cum.back() == 50.0);
        CHECK(hs.normalization == "mass-schedule");
    }

    SECTION("period-two point with constant radius hits on even steps") {
        const auto hs =
            recurrence_series(s, m, constant_explicit(0.1), make_point(1.0 / 3.0), 20);
        CHECK(hs.hits_cum.back() == 10.0);
        for (std::size_t k = 1; k <= 20; ++k) CHECK(hs.hits[k - 1] == (k % 2 == 0 ? 1 : 0));
        CHECK(hs.normalization == "ball-at-center");
    }

    SECTION("n = 0 gives empty series") {
        const auto hs = recurrence_series(s, m, implicit_pow_schedule(0.5), make_point(0.3), 0);
        CHECK(hs.size() == 0);
        CHECK(hs.hits_cum.empty());
    }

    SECTION("implicit mode records the mass schedule, not the realized ball mass") {
        const auto sched = implicit_pow_schedule(0.5);
        const auto hs = recurrence_series(s, m, sched, make_point(0.3), 10);
        for (std::uint64_t k = 1; k <= 10; ++k)
            CHECK(hs.masses[k - 1] == sched.value(k));
    }

    SECTION("explicit mode records the ball mass at the center") {
        const DensityMeasure skew = two_slope_invariant();
        const MapSystem ts = make_two_slope();
        const Point x = make_point(0.25);
        const auto hs = recurrence_series(ts, skew, constant_explicit(0.07), x, 5);
        for (std::size_t k = 0; k < 5; ++k)
            CHECK_THAT(hs.masses[k],
                       Catch::Matchers::WithinAbs(ball_measure(skew, ts, x, 0.07), 1e-15));
    }

    SECTION("zero radii never hit") {
        const auto hs = recurrence_series(s, m, constant_explicit(0.0), make_point(0.37), 30);
        CHECK(hs.hits_cum.back() == 0.0);
        CHECK(hs.mass_cum.back() == 0.0);
    }
}

TEST_CASE("target series basics") {
    const MapSystem s = make_doubling();
    const DensityMeasure m = lebesgue_circle();

    SECTION("target at the initial fixed point replicates recurrence") {
        const Point x = make_point(0.0);
        const auto tgt = target_series(s, m, constant_explicit(0.1), x, x, 25);
        const auto rec = recurrence_series(s, m, constant_explicit(0.1), x, 25);
        CHECK(tgt.hits == rec.hits);
        CHECK(tgt.normalization == "ball-at-target");
    }

    SECTION("masses are ball masses at the target") {
        const Point y = make_point(0.2);
        const auto tgt = target_series(s, m, constant_explicit(0.05), y, make_point(0.7), 8);
        for (std::size_t k = 0; k < 8; ++k)
            CHECK_THAT(tgt.masses[k], Catch::Matchers::WithinAbs(0.1, 1e-15));
    }

    SECTION("implicit schedules must be resolved at the target first") {
        CHECK_THROWS_AS(
            target_series(s, m, implicit_pow_schedule(0.5), make_point(0.2), make_point(0.7), 5),
            validation_error);
        // The precomputed-radii overload accepts them.
        const auto sched = implicit_pow_schedule(0.5);
        const Point y = make_point(0.2);
        const auto radii = radii_at(m, s, sched, y, 5);
        CHECK_NOTHROW(target_series(s, m, sched, y, make_point(0.7), 5, radii));
    }

    SECTION("orbit average of a fixed-ball indicator approaches the ball mass") {
        // Ergodic average along a single long orbit; the ball [0.25 +- 0.25)
        // has mass 1/2.
        Rng rng(5);
        double total = 0.0;
        const std::uint64_t n = 20'000;
        const int orbits = 3;
        for (int i = 0; i < orbits; ++i) {
            const Point x = sample_orbit_points(s, m, rng, 1)[0];
            const auto tgt = target_series(s, m, constant_explicit(0.25), make_point(0.25), x, n);
            total += tgt.hits_cum.back() / static_cast<double>(n);
        }
        CHECK_THAT(total / orbits, Catch::Matchers::WithinAbs(0.5, 0.03));
    }
}

TEST_CASE("strong Borel-Cantelli ratios") {
    const MapSystem s = make_doubling();
    const DensityMeasure m = lebesgue_circle();

    SECTION("all-zero reference leaves the ratio undefined") {
        const auto hs = recurrence_series(s, m, constant_explicit(0.0), make_point(0.3), 10);
        std::vector<double> ref(10, 0.0);
        const auto sbc = sbc_ratio(hs, ref);
        CHECK(sbc.all_undefined);
        CHECK(std::isnan(sbc.final_ratio));
    }

    SECTION("uniform measure: hit sums track the cumulative ball volume") {
        Rng rng(17);
        const auto sched = explicit_pow_schedule(0.5, 0.25);
        const Point x = sample_orbit_points(s, m, rng, 1)[0];
        const std::uint64_t n = 200'000;
        const auto radii = radii_at(m, s, sched, x, n);
        const auto hs = recurrence_series(s, m, sched, x, n, radii);
        const auto ref = lebesgue_cumulative(s, x, radii);
        const auto sbc = sbc_ratio(hs, ref);
        CHECK_THAT(sbc.final_ratio, Catch::Matchers::WithinAbs(1.0, 0.15));
    }

    SECTION("non-uniform measure: the local density appears as the limit") {
        // Two-slope map started in the high-density piece: hits accumulate at
        // rate h(x) = 9/8 relative to the Lebesgue reference volume.
        Rng rng(23);
        const MapSystem ts = make_two_slope();
        const DensityMeasure skew = two_slope_invariant();
        const auto sched = explicit_pow_schedule(0.5, 0.25);
        const Point x = make_point(0.25);
        const std::uint64_t n = 300'000;
        const auto radii = radii_at(skew, ts, sched, x, n);
        const auto hs = recurrence_series(ts, skew, sched, x, n, radii);
        const auto sbc = sbc_ratio(hs, lebesgue_cumulative(ts, x, radii));
        CHECK_THAT(sbc.final_ratio, Catch::Matchers::WithinAbs(1.125, 0.15));
    }

    SECTION("reference shorter than the series is an error") {
        const auto hs = recurrence_series(s, m, constant_explicit(0.1), make_point(0.3), 10);
        std::vector<double> ref(5, 1.0);
        CHECK_THROWS_AS(sbc_ratio(hs, ref), stream_length_error);
    }
}

TEST_CASE("per-step recurrence mass agrees with the implicit schedule") {
    const MapSystem s = make_doubling();
    const DensityMeasure m = lebesgue_circle();
    const auto sched = implicit_pow_schedule(0.5);
    Rng rng(29);
    const std::uint64_t k = 8;
    const auto est = recurrence_mass_mc(s, m, sched, k, 20'000, rng);
    CHECK_THAT(est.value, Catch::Matchers::WithinAbs(sched.value(k), 4.0 * est.se));
    CHECK(est.se > 0.0);
    CHECK_THROWS_AS(recurrence_mass_mc(s, m, sched, 0, 100, rng), domain_error);
}

TEST_CASE("short returns") {
    const MapSystem s = make_doubling();
    const DensityMeasure m = lebesgue_circle();

    SECTION("doubling: close-return probability 4r and overlap 4r^2") {
        Rng rng(41);
        for (std::uint64_t l : {1ull, 2ull, 5ull}) {
            const auto sr = short_returns(s, m, 0.05, l, 20'000, rng);
            CHECK(sr.inner_exact);
            CHECK_THAT(sr.p_close.value,
                       Catch::Matchers::WithinAbs(0.2, 4.0 * sr.p_close.se + 1e-12));
            CHECK_THAT(sr.overlap.value,
                       Catch::Matchers::WithinAbs(0.01, 4.0 * sr.overlap.se + 1e-12));
        }
    }

    SECTION("r = 0 is degenerate but well-defined") {
        Rng rng(43);
        const auto sr = short_returns(s, m, 0.0, 3, 100, rng);
        CHECK(sr.p_close.value == 0.0);
        CHECK(sr.overlap.value == 0.0);
    }

    SECTION("fast dyadic inner evaluation matches branch enumeration") {
        Rng rng(47);
        for (int i = 0; i < 50; ++i) {
            const double c = rng.next_double();
            const double r = 0.001 + 0.05 * rng.next_double();
            for (std::uint64_t l : {1ull, 2ull, 3ull}) {
                const auto ball = detail::ball_intervals(Space::circle, c, r);
                const auto pre = detail::preimage(s, ball, l);
                const double general = detail::intersection_measure(m, ball, pre);
                const double fast = detail::dyadic_overlap(m, 1, l, c, r);
                CHECK_THAT(fast, Catch::Matchers::WithinAbs(general, 1e-12));
            }
        }
    }

    SECTION("non-dyadic piecewise-affine maps use exact preimage enumeration") {
        Rng rng(53);
        const MapSystem ts = make_two_slope();
        const DensityMeasure skew = two_slope_invariant();
        const auto sr = short_returns(ts, skew, 0.04, 3, 4'000, rng);
        CHECK(sr.inner_exact);
        CHECK(sr.overlap.value >= 0.0);
        CHECK(sr.p_close.value >= 0.0);
        CHECK(sr.p_close.value <= 1.0);
    }

    SECTION("lag too deep for exact enumeration is refused") {
        Rng rng(59);
        CHECK_THROWS_AS(short_returns(make_two_slope(), two_slope_invariant(), 0.01, 30, 10, rng),
                        validation_error);
    }

    SECTION("l = 0 is rejected") {
        Rng rng(61);
        CHECK_THROWS_AS(short_returns(s, m, 0.1, 0, 10, rng), validation_error);
    }

    SECTION("torus falls back to nested Monte Carlo") {
        Rng rng(67);
        const auto sr = short_returns(make_cat_map(), lebesgue_torus(), 0.1, 1, 400, rng, 256);
        CHECK_FALSE(sr.inner_exact);
        CHECK(sr.overlap.value >= 0.0);
    }
}
