#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include <reclab/measures.hpp>
#include <reclab/rng.hpp>
#include <reclab/systems.hpp>

using namespace reclab;

namespace {

// Kolmogorov distance between sorted samples and a cdf given as a callable.
template <typename Cdf>
double ks_against(std::vector<double> v, Cdf&& cdf) {
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double f = cdf(v[i]);
        worst = std::max(worst, std::abs(f - static_cast<double>(i + 1) / n));
        worst = std::max(worst, std::abs(f - static_cast<double>(i) / n));
    }
    return worst;
}

}  // namespace

TEST_CASE("doubling map iterates points on the circle") {
    const MapSystem s = make_doubling();
    Point p = make_point(0.3);
    p = iterate(s, p, 1);
    CHECK_THAT(p.x, Catch::Matchers::WithinAbs(0.6, 1e-12));
    p = iterate(s, p, 1);
    CHECK_THAT(p.x, Catch::Matchers::WithinAbs(0.2, 1e-12));

    SECTION("multi-step equals repeated single steps") {
        Point a = iterate(s, make_point(0.3), 5);
        Point b = make_point(0.3);
        for (int k = 0; k < 5; ++k) b = iterate(s, b, 1);
        CHECK(a.x == b.x);
    }
}

TEST_CASE("two-slope map follows its branch formulas") {
    const MapSystem s = make_two_slope();
    // First branch: slope 3/2 from the origin.
    CHECK_THAT(iterate(s, make_point(0.4), 1).x, Catch::Matchers::WithinAbs(0.6, 1e-12));
    // Second branch: slope 2, sends [2/3,1) onto [0,2/3).
    CHECK_THAT(iterate(s, make_point(0.75), 1).x,
               Catch::Matchers::WithinAbs(2.0 * 0.75 - 4.0 / 3.0, 1e-12));
    CHECK_THAT(iterate(s, make_point(2.0 / 3.0), 1).x, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("cat map acts linearly mod 1") {
    const MapSystem s = make_cat_map();
    const Point p = iterate(s, make_point2(0.5, 0.5), 1);
    CHECK_THAT(p.x, Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(p.y, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("distances respect the space geometry") {
    CHECK_THAT(distance(make_doubling(), make_point(0.1), make_point(0.9)),
               Catch::Matchers::WithinAbs(0.2, 1e-15));
    CHECK_THAT(distance(make_two_slope(), make_point(0.1), make_point(0.9)),
               Catch::Matchers::WithinAbs(0.8, 1e-15));
    CHECK_THAT(distance(make_cat_map(), make_point2(0.0, 0.0), make_point2(0.5, 0.5)),
               Catch::Matchers::WithinAbs(std::sqrt(0.5), 1e-15));
}

TEST_CASE("bitstream points iterate by exact shifts") {
    const MapSystem s = make_doubling();
    const Point p = make_bitstream_point(42);

    SECTION("composition is exact") {
        const Point a = iterate(s, iterate(s, p, 3), 4);
        const Point b = iterate(s, p, 7);
        CHECK(a.seed == b.seed);
        CHECK(a.pos == b.pos);
        CHECK(a.coord() == b.coord());
    }

    SECTION("coordinates stay in [0,1) far beyond double mantissa depth") {
        Point q = iterate(s, p, 1'000'000);
        const double c = q.coord();
        CHECK(c >= 0.0);
        CHECK(c < 1.0);
        // A float start would have collapsed onto the fixed point long ago.
        CHECK(distance(s, q, iterate(s, q, 1)) > 0.0);
    }

    SECTION("bitstream points reject non-dyadic maps") {
        CHECK_THROWS_AS(iterate(make_two_slope(), p, 1), domain_error);
    }
}

TEST_CASE("point constructors validate their domain") {
    CHECK_THROWS_AS(make_point(1.0), domain_error);
    CHECK_THROWS_AS(make_point(-0.1), domain_error);
    CHECK_THROWS_AS(make_point2(0.5, 1.0), domain_error);
    CHECK_NOTHROW(make_point(0.0));
}

TEST_CASE("system validation rejects malformed maps") {
    SECTION("slope of modulus <= 1") {
        CHECK_THROWS_AS(make_system(MapKind::circle_pw_affine, {{0.0, 1.0, 1.0, 0.0}}),
                        validation_error);
    }
    SECTION("branch domains must partition [0,1)") {
        CHECK_THROWS_AS(
            make_system(MapKind::circle_pw_affine,
                        {{0.0, 0.4, 2.0, 0.0}, {0.5, 1.0, 2.0, -1.0}}),
            validation_error);
    }
    SECTION("non-hyperbolic torus matrix") {
        MapSystem s;
        s.kind = MapKind::torus_linear;
        s.matrix = {{{1, 1}, {0, 1}}};
        CHECK_THROWS_AS(validate(s), validation_error);
    }
    SECTION("declared Markov structure is checked against branch images") {
        CHECK_THROWS_AS(
            make_system(MapKind::interval_pw_affine,
                        {{0.0, 0.25, 2.0, 0.0}, {0.25, 1.0, 4.0 / 3.0, -1.0 / 3.0}},
                        /*markov=*/true),
            validation_error);
        CHECK_NOTHROW(
            make_system(MapKind::interval_pw_affine,
                        {{0.0, 0.25, 2.0, 0.0}, {0.25, 1.0, 4.0 / 3.0, -1.0 / 3.0}}));
    }
}

TEST_CASE("orbit hit indicators") {
    const MapSystem s = make_doubling();

    SECTION("fixed point with positive radii hits every step") {
        const Point x = make_point(0.0);
        std::vector<TargetBall> stream(12, TargetBall{x, 0.05});
        const auto hits = orbit_hits(s, x, stream, 12);
        REQUIRE(hits.size() == 12);
        CHECK(std::count(hits.begin(), hits.end(), 1) == 12);
    }

    SECTION("period-two point hits exactly on even steps") {
        const Point x = make_point(1.0 / 3.0);
        std::vector<TargetBall> stream(10, TargetBall{x, 0.1});
        const auto hits = orbit_hits(s, x, stream, 10);
        for (std::size_t k = 1; k <= 10; ++k) CHECK(hits[k - 1] == (k % 2 == 0 ? 1 : 0));
    }

    SECTION("n = 0 yields an empty record") {
        CHECK(orbit_hits(s, make_point(0.3), {}, 0).empty());
    }

    SECTION("too short a ball stream is an error") {
        std::vector<TargetBall> stream(3, TargetBall{make_point(0.1), 0.1});
        CHECK_THROWS_AS(orbit_hits(s, make_point(0.3), stream, 5), stream_length_error);
    }
}

TEST_CASE("one map step preserves the declared invariant measure") {
    Rng rng(2024);

    SECTION("doubling map, uniform measure") {
        const MapSystem s = make_doubling();
        std::vector<double> pushed;
        pushed.reserve(100'000);
        for (int i = 0; i < 100'000; ++i)
            pushed.push_back(iterate(s, make_point(rng.next_double()), 1).x);
        CHECK(ks_against(std::move(pushed), [](double t) { return t; }) <= 0.01);
    }

    SECTION("two-slope map, its piecewise invariant density") {
        const MapSystem s = make_two_slope();
        const DensityMeasure m = two_slope_invariant();
        Rng sampler(99);
        auto pts = sample(m, sampler, 100'000);
        std::vector<double> pushed;
        pushed.reserve(pts.size());
        for (const Point& p : pts) pushed.push_back(iterate(s, p, 1).x);
        CHECK(ks_against(std::move(pushed), [&](double t) { return m.cdf(t); }) <= 0.01);
    }
}

TEST_CASE("systems round-trip through JSON") {
    for (const MapSystem& s : {make_doubling(), make_two_slope(), make_cat_map()}) {
        const MapSystem back = system_from_json(to_json(s));
        CHECK(back.kind == s.kind);
        REQUIRE(back.branches.size() == s.branches.size());
        for (std::size_t i = 0; i < s.branches.size(); ++i) {
            CHECK(back.branches[i].a == s.branches[i].a);
            CHECK(back.branches[i].b == s.branches[i].b);
            CHECK(back.branches[i].slope == s.branches[i].slope);
            CHECK(back.branches[i].intercept == s.branches[i].intercept);
        }
        CHECK(back.matrix == s.matrix);
        CHECK(back.declared_markov == s.declared_markov);
    }
}

TEST_CASE("dyadic shift detection") {
    CHECK(make_doubling().dyadic_shift() == 1);
    CHECK_FALSE(make_two_slope().dyadic_shift());
    const MapSystem quad = make_system(
        MapKind::circle_pw_affine,
        {{0.0, 0.25, 4.0, 0.0}, {0.25, 0.5, 4.0, -1.0}, {0.5, 0.75, 4.0, -2.0},
         {0.75, 1.0, 4.0, -3.0}},
        true);
    CHECK(quad.dyadic_shift() == 2);
}
