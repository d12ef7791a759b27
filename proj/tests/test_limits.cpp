#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <reclab/limits.hpp>
#include <reclab/measures.hpp>
#include <reclab/rng.hpp>

using namespace reclab;

TEST_CASE("averaged Gaussian characteristic function") {
    SECTION("uniform density collapses to the standard normal CF") {
        for (double t : {0.0, 0.5, 1.0, 2.0, 4.0})
            CHECK_THAT(averaged_gaussian_charfn(lebesgue_circle(), t),
                       Catch::Matchers::WithinAbs(std::exp(-0.5 * t * t), 1e-15));
    }
    SECTION("t = 0 gives 1 for any density") {
        CHECK_THAT(averaged_gaussian_charfn(two_slope_invariant(), 0.0),
                   Catch::Matchers::WithinAbs(1.0, 1e-15));
    }
    SECTION("two-slope density at t = 1: closed-form mixture") {
        // Weights are the mu-masses (3/4, 1/4); normalized variances are
        // h_i / mu(h) with mu(h) = 33/32, i.e. 12/11 and 8/11.
        const double expected =
            0.75 * std::exp(-6.0 / 11.0) + 0.25 * std::exp(-4.0 / 11.0);
        CHECK_THAT(averaged_gaussian_charfn(two_slope_invariant(), 1.0),
                   Catch::Matchers::WithinAbs(expected, 1e-15));
        CHECK_THAT(expected, Catch::Matchers::WithinAbs(0.609, 1.5e-3));
    }
}

TEST_CASE("averaged Gaussian density") {
    SECTION("uniform density gives the standard normal pdf") {
        for (double t : {-2.0, 0.0, 0.7})
            CHECK_THAT(averaged_gaussian_density(lebesgue_circle(), t),
                       Catch::Matchers::WithinAbs(normal_pdf(t), 1e-15));
    }
    SECTION("two-slope mixture value at the origin") {
        const double v1 = (9.0 / 8.0) / (33.0 / 32.0);
        const double v2 = (3.0 / 4.0) / (33.0 / 32.0);
        const double expected =
            (0.75 / std::sqrt(v1) + 0.25 / std::sqrt(v2)) / std::sqrt(2.0 * std::numbers::pi);
        CHECK_THAT(averaged_gaussian_density(two_slope_invariant(), 0.0),
                   Catch::Matchers::WithinAbs(expected, 1e-15));
    }
    SECTION("integrates to 1") {
        // Simpson on [-10, 10]; the mixture density is smooth and tiny at the
        // endpoints, so the quadrature error is far below the tolerance.
        const DensityMeasure h = two_slope_invariant();
        const int steps = 4000;
        const double a = -10.0, b = 10.0;
        const double dx = (b - a) / steps;
        double acc = 0.0;
        for (int i = 0; i <= steps; ++i) {
            const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            acc += w * averaged_gaussian_density(h, a + i * dx);
        }
        acc *= dx / 3.0;
        CHECK_THAT(acc, Catch::Matchers::WithinAbs(1.0, 1e-6));
    }
    SECTION("matches Fourier inversion of the characteristic function") {
        // f(x) = (1/pi) Integral_0^T cf(t) cos(t x) dt for an even real CF.
        const DensityMeasure h = two_slope_invariant();
        const double T = 40.0;
        const int steps = 8000;
        const double dt = T / steps;
        for (double x : {-5.0, -2.0, 0.0, 1.0, 3.0, 5.0}) {
            double acc = 0.0;
            for (int i = 0; i <= steps; ++i) {
                const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
                const double t = i * dt;
                acc += w * averaged_gaussian_charfn(h, t) * std::cos(t * x);
            }
            acc *= dt / 3.0 / std::numbers::pi;
            CHECK_THAT(averaged_gaussian_density(h, x), Catch::Matchers::WithinAbs(acc, 1e-4));
        }
    }
    SECTION("literal variance profile differs from the normalized one") {
        const DensityMeasure h = two_slope_invariant();
        CHECK(averaged_gaussian_density(h, 0.3, true) != averaged_gaussian_density(h, 0.3));
    }
}

TEST_CASE("averaged Poisson pmf") {
    SECTION("uniform density gives plain Poisson") {
        const double tau = 1.3;
        for (std::uint64_t k : {0ull, 1ull, 2ull, 5ull}) {
            const double plain = std::exp(-tau + k * std::log(tau) - std::lgamma(k + 1.0));
            CHECK_THAT(averaged_poisson_pmf(lebesgue_circle(), tau, k),
                       Catch::Matchers::WithinAbs(plain, 1e-14));
        }
    }
    SECTION("two-slope density at k = 0, tau = 1") {
        const double expected = (2.0 / 3.0) * (9.0 / 8.0) * std::exp(-9.0 / 8.0) +
                                (1.0 / 3.0) * (3.0 / 4.0) * std::exp(-3.0 / 4.0);
        CHECK_THAT(averaged_poisson_pmf(two_slope_invariant(), 1.0, 0),
                   Catch::Matchers::WithinAbs(expected, 1e-15));
    }
    SECTION("sums to 1") {
        kahan_sum acc;
        for (std::uint64_t k = 0; k <= 60; ++k)
            acc.add(averaged_poisson_pmf(two_slope_invariant(), 1.3, k));
        CHECK_THAT(acc.value(), Catch::Matchers::WithinAbs(1.0, 1e-10));
    }
    SECTION("tau must be positive") {
        CHECK_THROWS_AS(averaged_poisson_pmf(lebesgue_circle(), 0.0, 1), domain_error);
        CHECK_THROWS_AS(make_averaged_poisson(lebesgue_circle(), -1.0), domain_error);
    }
}

TEST_CASE("limit-law objects") {
    SECTION("cdf is monotone from 0 to 1") {
        for (const LimitLaw& law :
             {make_standard_normal(), make_averaged_gaussian(two_slope_invariant())}) {
            double prev = 0.0;
            for (double t = -8.0; t <= 8.0; t += 0.25) {
                const double c = law.cdf(t);
                CHECK(c >= prev - 1e-15);
                prev = c;
            }
            CHECK(law.cdf(-40.0) <= 1e-12);
            CHECK(law.cdf(40.0) >= 1.0 - 1e-12);
        }
    }
    SECTION("kind mismatches raise domain errors") {
        const LimitLaw pois = make_averaged_poisson(lebesgue_circle(), 1.0);
        CHECK_THROWS_AS(pois.charfn(1.0), domain_error);
        CHECK_THROWS_AS(pois.density(0.0), domain_error);
        CHECK_THROWS_AS(make_standard_normal().pmf(0), domain_error);
    }
    SECTION("explicit variance profile") {
        const LimitLaw law = make_variance_profile_gaussian({{0.5, 1.0}, {0.5, 2.0}});
        CHECK_THAT(law.charfn(1.0),
                   Catch::Matchers::WithinAbs(0.5 * std::exp(-0.5) + 0.5 * std::exp(-1.0),
                                              1e-15));
        CHECK_THROWS_AS(make_variance_profile_gaussian({{0.5, 1.0}, {0.4, 2.0}}),
                        validation_error);
        CHECK_THROWS_AS(make_variance_profile_gaussian({{1.0, 0.0}}), validation_error);
    }
}

TEST_CASE("Kolmogorov-Smirnov statistic") {
    SECTION("point mass at zero against the standard normal") {
        const auto emp = EmpiricalDistribution::from_samples(std::vector<double>(1000, 0.0));
        CHECK_THAT(ks_statistic(emp, make_standard_normal()),
                   Catch::Matchers::WithinAbs(0.5, 1e-12));
    }
    SECTION("quantile construction has KS about 1/(2N)") {
        // Invert the normal cdf by bisection at the midpoint grid.
        const std::size_t N = 10'000;
        std::vector<double> v(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(N);
            double lo = -10.0, hi = 10.0;
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                (normal_cdf(mid) < u ? lo : hi) = mid;
            }
            v[i] = 0.5 * (lo + hi);
        }
        const auto emp = EmpiricalDistribution::from_samples(std::move(v));
        CHECK(ks_statistic(emp, make_standard_normal()) <= 1.0 / (2.0 * N) + 1e-6);
    }
    SECTION("uniform(0,1) grid against the standard normal: closed form 1/2") {
        // The largest gap sits at the left edge of the support, where the
        // normal cdf is already 1/2 but the empirical mass is still 0.
        const std::size_t N = 10'000;
        std::vector<double> v(N);
        for (std::size_t i = 0; i < N; ++i)
            v[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(N);
        const auto emp = EmpiricalDistribution::from_samples(std::move(v));
        CHECK_THAT(ks_statistic(emp, make_standard_normal()),
                   Catch::Matchers::WithinAbs(0.5, 1e-3));
    }
}

TEST_CASE("empirical characteristic function") {
    SECTION("t = 0 is exactly 1") {
        const auto emp = EmpiricalDistribution::from_samples({0.3, -1.2, 4.0});
        CHECK(empirical_charfn(emp, 0.0).real() == 1.0);
        CHECK(empirical_charfn(emp, 0.0).imag() == 0.0);
    }
    SECTION("symmetric two-point sample gives cos(at)") {
        const double a = 0.8;
        const auto emp = EmpiricalDistribution::from_samples({-a, a});
        for (double t : {0.5, 1.0, 3.0}) {
            const auto cf = empirical_charfn(emp, t);
            CHECK_THAT(cf.real(), Catch::Matchers::WithinAbs(std::cos(a * t), 1e-15));
            CHECK_THAT(cf.imag(), Catch::Matchers::WithinAbs(0.0, 1e-15));
        }
    }
    SECTION("standard normal draws match exp(-t^2/2)") {
        Rng rng(2718);
        std::vector<double> v;
        v.reserve(100'000);
        for (int i = 0; i < 50'000; ++i) {
            // Box-Muller from two uniforms.
            const double u1 = std::max(rng.next_double(), 1e-300);
            const double u2 = rng.next_double();
            const double rad = std::sqrt(-2.0 * std::log(u1));
            v.push_back(rad * std::cos(2.0 * std::numbers::pi * u2));
            v.push_back(rad * std::sin(2.0 * std::numbers::pi * u2));
        }
        const auto emp = EmpiricalDistribution::from_samples(std::move(v));
        const auto cf = empirical_charfn(emp, 1.0);
        CHECK_THAT(cf.real(), Catch::Matchers::WithinAbs(std::exp(-0.5), 5e-3));
        CHECK_THAT(cf.imag(), Catch::Matchers::WithinAbs(0.0, 5e-3));
    }
}

TEST_CASE("total-variation distance for count data") {
    SECTION("all-zero counts against Poisson(1)") {
        const std::vector<std::uint64_t> counts(500, 0);
        const double tv = tv_distance_counts(counts, make_averaged_poisson(lebesgue_circle(), 1.0));
        CHECK_THAT(tv, Catch::Matchers::WithinAbs(1.0 - std::exp(-1.0), 1e-12));
    }
    SECTION("exact Poisson frequencies give a tiny distance") {
        // Build counts whose empirical pmf matches Poisson(1) rounded to
        // 1/1000ths; the residual is the rounding plus the folded tail.
        const LimitLaw law = make_averaged_poisson(lebesgue_circle(), 1.0);
        std::vector<std::uint64_t> counts;
        for (std::uint64_t k = 0; k <= 8; ++k) {
            const auto copies = static_cast<std::size_t>(std::round(1000.0 * law.pmf(k)));
            counts.insert(counts.end(), copies, k);
        }
        CHECK(tv_distance_counts(counts, law) <= 5e-3);
    }
}

TEST_CASE("limit laws round-trip through JSON") {
    for (const LimitLaw& law :
         {make_standard_normal(), make_averaged_gaussian(two_slope_invariant()),
          make_averaged_poisson(two_slope_invariant(), 1.5),
          make_variance_profile_gaussian({{0.25, 0.5}, {0.75, 1.5}})}) {
        const LimitLaw back = law_from_json(to_json(law));
        CHECK(back.kind == law.kind);
        if (law.continuous()) {
            for (double t : {0.3, 1.0, 2.5})
                CHECK_THAT(back.charfn(t), Catch::Matchers::WithinAbs(law.charfn(t), 1e-15));
        } else {
            for (std::uint64_t k : {0ull, 1ull, 3ull})
                CHECK_THAT(back.pmf(k), Catch::Matchers::WithinAbs(law.pmf(k), 1e-15));
        }
    }
    CHECK_THROWS_AS(law_from_json(json{{"kind", "cauchy"}}), validation_error);
}
