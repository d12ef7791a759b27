#pragma once

// Shared error taxonomy and small numeric helpers used across the library.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reclab {

// ---------------------------------------------------------------------------
// Errors.  Everything user-triggerable throws one of these; the CLI maps any
// reclab::error to exit code 1.
// ---------------------------------------------------------------------------

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed descriptors: branch domains that do not partition [0,1), densities
// that do not integrate to 1, non-primitive transition matrices, bad configs.
struct validation_error : error {
    using error::error;
};

// Arguments outside the mathematical domain of an operation (negative counts,
// points outside [0,1)^d, M <= 0, ...).
struct domain_error : error {
    using error::error;
};

// Implicit-radius targets that no admissible ball can reach.  Deliberately not
// clamped: a silent clamp would corrupt the statistics this library exists to
// measure.
struct infeasible_error : error {
    using error::error;
};

// Ulam bins that miss branch endpoints on a declared-exact request.
struct alignment_error : error {
    using error::error;
};

// A (center, radius) stream ended before the requested orbit length.
struct stream_length_error : error {
    using error::error;
};

// Radius r >= 1/2 on circle/torus, where balls would self-overlap.
struct unsupported_radius_error : error {
    using error::error;
};

// ---------------------------------------------------------------------------
// Compensated summation (Neumaier).  Used wherever long orbit accumulations or
// order-fixed reductions feed reported statistics.
// ---------------------------------------------------------------------------

struct kahan_sum {
    double s = 0.0;
    double c = 0.0;

    void add(double x) {
        const double t = s + x;
        if (std::abs(s) >= std::abs(x))
            c += (s - t) + x;
        else
            c += (x - t) + s;
        s = t;
    }
    double value() const { return s + c; }
};

// ---------------------------------------------------------------------------
// Basic sample statistics.
// ---------------------------------------------------------------------------

inline double sample_mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    kahan_sum acc;
    for (double x : v) acc.add(x);
    return acc.value() / static_cast<double>(v.size());
}

// Unbiased sample variance.
inline double sample_variance(std::span<const double> v) {
    const std::size_t m = v.size();
    if (m < 2) return 0.0;
    const double mean = sample_mean(v);
    kahan_sum acc;
    for (double x : v) {
        const double d = x - mean;
        acc.add(d * d);
    }
    return acc.value() / static_cast<double>(m - 1);
}

// Delete-one jackknife standard error of the unbiased sample variance.
// Uses the closed form: the i-th leave-one-out variance is computable from the
// full first/second centered moments in O(1).
inline double jackknife_variance_se(std::span<const double> v) {
    const std::size_t m = v.size();
    if (m < 3) return 0.0;
    const double mean = sample_mean(v);
    kahan_sum s2;
    for (double x : v) {
        const double d = x - mean;
        s2.add(d * d);
    }
    const double ss = s2.value();  // sum of squared deviations from full mean
    const double md = static_cast<double>(m);
    std::vector<double> loo(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double d = v[i] - mean;
        // Sum of squared deviations about the leave-one-out mean.
        const double ss_i = ss - d * d * md / (md - 1.0);
        loo[i] = ss_i / (md - 2.0);
    }
    const double loo_mean = sample_mean(loo);
    kahan_sum acc;
    for (double x : loo) {
        const double d = x - loo_mean;
        acc.add(d * d);
    }
    return std::sqrt((md - 1.0) / md * acc.value());
}

// Standard error of a Bernoulli proportion estimate.
inline double bernoulli_se(double p_hat, std::size_t n) {
    if (n == 0) return 0.0;
    const double v = p_hat * (1.0 - p_hat);
    return std::sqrt((v > 0 ? v : 0) / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Normal distribution helpers.
// ---------------------------------------------------------------------------

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Misc numeric helpers.
// ---------------------------------------------------------------------------

inline bool is_power_of_two_ge2(double s) {
    if (!(s >= 2.0)) return false;
    const double l = std::log2(s);
    const double r = std::round(l);
    return std::abs(l - r) < 1e-12 && std::abs(std::exp2(r) - s) < 1e-9;
}

inline double reduce_mod1(double x) {
    double y = x - std::floor(x);
    if (y >= 1.0) y = 0.0;  // guards x = -eps rounding to 1.0
    return y;
}

}  // namespace reclab
