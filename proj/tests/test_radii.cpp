#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <reclab/measures.hpp>
#include <reclab/radii.hpp>
#include <reclab/rng.hpp>
#include <reclab/systems.hpp>

using namespace reclab;

TEST_CASE("schedule generators") {
    SECTION("power law") {
        GeneratorSpec g;
        g.form = GeneratorSpec::Form::pow;
        g.gamma = 0.5;
        g.scale = 0.25;
        CHECK_THAT(g.value(4), Catch::Matchers::WithinAbs(0.125, 1e-15));
        CHECK_THROWS_AS(g.value(0), domain_error);
    }
    SECTION("tabulated, 1-based") {
        GeneratorSpec g;
        g.form = GeneratorSpec::Form::table;
        g.values = {0.3, 0.2, 0.1};
        CHECK(g.value(1) == 0.3);
        CHECK(g.value(3) == 0.1);
        CHECK_THROWS_AS(g.value(4), stream_length_error);
    }
    SECTION("implicit schedules demand strictly positive masses") {
        GeneratorSpec g;
        g.form = GeneratorSpec::Form::table;
        g.values = {0.1, 0.0};
        CHECK_THROWS_AS(make_schedule(RadiusSchedule::Mode::implicit_mass, g),
                        validation_error);
        CHECK_NOTHROW(make_schedule(RadiusSchedule::Mode::explicit_radius, g));
    }
    SECTION("identically zero explicit schedule is legal") {
        CHECK_NOTHROW(explicit_pow_schedule(0.5, 0.0));
    }
}

TEST_CASE("decay condition check") {
    SECTION("power law passes") {
        const auto rep = check_condition_S(implicit_pow_schedule(0.5), 0.5, 1.0, 1000);
        CHECK(rep.ok);
        CHECK(rep.monotone_ok);
        CHECK(rep.first_violation == 0);
        CHECK(rep.c_lower > 0.0);
        CHECK(std::isfinite(rep.c_upper));
    }
    SECTION("log power passes with a slack power envelope") {
        GeneratorSpec g;
        g.form = GeneratorSpec::Form::logpow;
        g.upsilon = 1.0;
        g.scale = 0.5;
        const auto sched = make_schedule(RadiusSchedule::Mode::implicit_mass, g);
        const auto rep = check_condition_S(sched, 0.9, 1.0, 1000);
        CHECK(rep.ok);
        CHECK(rep.monotone_ok);
    }
    SECTION("alternating table violates monotonicity at n = 2") {
        GeneratorSpec g;
        g.form = GeneratorSpec::Form::table;
        g.values = {0.1, 0.2, 0.1, 0.2};
        const auto sched = make_schedule(RadiusSchedule::Mode::implicit_mass, g);
        const auto rep = check_condition_S(sched, 0.5, 1.0, 4);
        CHECK_FALSE(rep.ok);
        CHECK_FALSE(rep.monotone_ok);
        CHECK(rep.first_violation == 2);
    }
}

TEST_CASE("implicit radius solves the defining equation") {
    const MapSystem circle = make_doubling();
    const MapSystem interval = make_two_slope();
    const DensityMeasure uniform = lebesgue_circle();
    const DensityMeasure skew = two_slope_invariant();

    SECTION("uniform circle: r = M/2") {
        CHECK_THAT(implicit_radius(uniform, circle, make_point(0.3), 0.2),
                   Catch::Matchers::WithinAbs(0.1, 1e-9));
    }
    SECTION("high-density piece: r = M / (2 * 9/8)") {
        CHECK_THAT(implicit_radius(skew, interval, make_point(0.25), 0.2),
                   Catch::Matchers::WithinAbs(0.2 / 2.25, 1e-9));
    }
    SECTION("centered at the density knot: r = M / (h_left + h_right)") {
        CHECK_THAT(implicit_radius(skew, interval, make_point(2.0 / 3.0), 0.15),
                   Catch::Matchers::WithinAbs(0.08, 1e-9));
    }
    SECTION("defining equation holds to the solver tolerance") {
        Rng rng(11);
        for (int i = 0; i < 200; ++i) {
            const Point x = sample(skew, rng, 1)[0];
            const double M = 0.01 + 0.8 * rng.next_double();
            const double r = implicit_radius(skew, interval, x, M);
            CHECK(std::abs(ball_measure(skew, interval, x, r) - M) <= 1e-12);
        }
    }
    SECTION("monotone in the target mass") {
        const Point x = make_point(0.41);
        double prev = 0.0;
        for (double M : {0.05, 0.1, 0.2, 0.4, 0.8}) {
            const double r = implicit_radius(skew, interval, x, M);
            CHECK(r > prev);
            prev = r;
        }
    }
    SECTION("saturating mass returns the largest admissible radius") {
        // The whole circle has mass 1, reached at the injectivity radius.
        CHECK(implicit_radius(uniform, circle, make_point(0.3), 1.0) == 0.5);
    }
    SECTION("error taxonomy") {
        CHECK_THROWS_AS(implicit_radius(uniform, circle, make_point(0.3), 0.0), domain_error);
        CHECK_THROWS_AS(implicit_radius(uniform, circle, make_point(0.3), -0.1), domain_error);
        CHECK_THROWS_AS(implicit_radius(uniform, circle, make_point(0.3), 1.2),
                        infeasible_error);
    }
}

TEST_CASE("radius fields over sampled centers") {
    const MapSystem circle = make_doubling();
    const MapSystem interval = make_two_slope();

    SECTION("uniform measure: constant field, zero Lipschitz ratio") {
        std::vector<Point> pts = {make_point(0.1), make_point(0.4), make_point(0.9)};
        const auto field = radius_field(lebesgue_circle(), circle, 0.3, pts);
        REQUIRE(field.r.size() == 3);
        for (double r : field.r) CHECK_THAT(r, Catch::Matchers::WithinAbs(0.15, 1e-9));
        CHECK(field.lipschitz_ratio <= 1e-6);
    }
    SECTION("piecewise density: field is Lipschitz in the center") {
        std::vector<Point> pts;
        for (int i = 0; i < 60; ++i) pts.push_back(make_point(i / 60.0));
        const auto field = radius_field(two_slope_invariant(), interval, 0.15, pts);
        // Radius gradient is bounded by the density contrast (9/8 vs 3/4),
        // so the difference quotient never exceeds 1.
        CHECK(field.lipschitz_ratio <= 1.0 + 1e-6);
        CHECK(field.lipschitz_ratio > 0.0);
    }
    SECTION("single point: no pairs, ratio 0") {
        std::vector<Point> pts = {make_point(0.5)};
        CHECK(radius_field(lebesgue_circle(), circle, 0.2, pts).lipschitz_ratio == 0.0);
    }
    SECTION("infeasible mass names the offending center") {
        std::vector<Point> pts = {make_point2(0.5, 0.5)};
        CHECK_THROWS_AS(radius_field(lebesgue_torus(), make_cat_map(), 0.9, pts),
                        infeasible_error);
    }
}

TEST_CASE("schedules round-trip through JSON") {
    const RadiusSchedule a = implicit_pow_schedule(0.5, 1.0);
    const json ja = to_json(a);
    CHECK(ja.at("mode") == "implicit");
    CHECK(ja.contains("M"));
    const RadiusSchedule backa = schedule_from_json(ja);
    CHECK(backa.mode == RadiusSchedule::Mode::implicit_mass);
    CHECK(backa.value(9) == a.value(9));

    const RadiusSchedule b = explicit_pow_schedule(0.5, 0.25);
    const json jb = to_json(b);
    CHECK(jb.at("mode") == "explicit");
    CHECK(jb.contains("r"));
    const RadiusSchedule backb = schedule_from_json(jb);
    CHECK(backb.mode == RadiusSchedule::Mode::explicit_radius);
    CHECK(backb.value(4) == 0.125);

    CHECK_THROWS_AS(schedule_from_json(json{{"mode", "sideways"}}), validation_error);
}
