#pragma once

// Hit statistics along orbits: recurrence series (did T^k x return to the
// shrinking ball around x?), shrinking-target series (did T^k x land in the
// ball around y?), strong-Borel-Cantelli ratios against a reference volume,
// and short-return functionals.  The short-return overlap integral uses an
// exact inner evaluation whenever the map is piecewise affine: the l-step
// preimage of a ball is a finite union of intervals that we enumerate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "reclab/common.hpp"
#include "reclab/measures.hpp"
#include "reclab/radii.hpp"
#include "reclab/rng.hpp"
#include "reclab/systems.hpp"

namespace reclab {

// ---------------------------------------------------------------------------
// Hit series.
// ---------------------------------------------------------------------------

struct HitSeries {
    std::vector<std::uint8_t> hits;  // step k = 1..n
    std::vector<double> masses;      // expected per-step mass
    std::vector<double> hits_cum;    // running Sum hits
    std::vector<double> mass_cum;    // running Sum masses (the CLT normalizer)
    std::string normalization;       // "mass-schedule" | "ball-at-center" | "ball-at-target"

    std::size_t size() const { return hits.size(); }
};

namespace detail {

inline void finish_series(HitSeries& hs) {
    hs.hits_cum.resize(hs.hits.size());
    hs.mass_cum.resize(hs.masses.size());
    double hc = 0.0;
    kahan_sum mc;
    for (std::size_t i = 0; i < hs.hits.size(); ++i) {
        hc += hs.hits[i];
        mc.add(hs.masses[i]);
        hs.hits_cum[i] = hc;
        hs.mass_cum[i] = mc.value();
    }
}

}  // namespace detail

// Radii for steps 1..n at a fixed center: explicit schedules read the
// generator, implicit schedules solve mu(B(center, r_k)) = M_k per step.
inline std::vector<double> radii_at(const DensityMeasure& m, const MapSystem& s,
                                    const RadiusSchedule& sched, const Point& center,
                                    std::uint64_t n) {
    std::vector<double> r(n);
    if (sched.mode == RadiusSchedule::Mode::explicit_radius) {
        for (std::uint64_t k = 1; k <= n; ++k) r[k - 1] = sched.value(k);
    } else {
        for (std::uint64_t k = 1; k <= n; ++k)
            r[k - 1] = implicit_radius(m, s, center, sched.value(k));
    }
    return r;
}

// Recurrence hit series with precomputed per-step radii (the schedule is only
// consulted for the expected masses).
inline HitSeries recurrence_series(const MapSystem& s, const DensityMeasure& m,
                                   const RadiusSchedule& sched, const Point& x,
                                   std::uint64_t n, std::span<const double> radii) {
    check_compat(m, s);
    if (radii.size() < n)
        throw stream_length_error("recurrence series: " + std::to_string(radii.size()) +
                                  " radii for n = " + std::to_string(n));
    HitSeries hs;
    hs.hits.reserve(n);
    hs.masses.reserve(n);
    const bool implicit = sched.mode == RadiusSchedule::Mode::implicit_mass;
    hs.normalization = implicit ? "mass-schedule" : "ball-at-center";
    Point p = x;
    for (std::uint64_t k = 1; k <= n; ++k) {
        p = iterate(s, p, 1);
        const double r = radii[k - 1];
        hs.hits.push_back(distance(s, p, x) < r ? 1 : 0);
        hs.masses.push_back(implicit ? sched.value(k) : ball_measure(m, s, x, r));
    }
    detail::finish_series(hs);
    return hs;
}

inline HitSeries recurrence_series(const MapSystem& s, const DensityMeasure& m,
                                   const RadiusSchedule& sched, const Point& x,
                                   std::uint64_t n) {
    return recurrence_series(s, m, sched, x, n, radii_at(m, s, sched, x, n));
}

// Shrinking-target hit series toward a fixed target y.  Explicit schedules
// only: the target version of the implicit construction is radii solved at y,
// which callers obtain via radii_at and the precomputed-radii overload below.
inline HitSeries target_series(const MapSystem& s, const DensityMeasure& m,
                               const RadiusSchedule& sched, const Point& y, const Point& x,
                               std::uint64_t n, std::span<const double> radii) {
    check_compat(m, s);
    if (radii.size() < n)
        throw stream_length_error("target series: " + std::to_string(radii.size()) +
                                  " radii for n = " + std::to_string(n));
    HitSeries hs;
    hs.hits.reserve(n);
    hs.masses.reserve(n);
    hs.normalization = "ball-at-target";
    Point p = x;
    for (std::uint64_t k = 1; k <= n; ++k) {
        p = iterate(s, p, 1);
        const double r = radii[k - 1];
        hs.hits.push_back(distance(s, p, y) < r ? 1 : 0);
        hs.masses.push_back(ball_measure(m, s, y, r));
    }
    detail::finish_series(hs);
    return hs;
}

inline HitSeries target_series(const MapSystem& s, const DensityMeasure& m,
                               const RadiusSchedule& sched, const Point& y, const Point& x,
                               std::uint64_t n) {
    if (sched.mode != RadiusSchedule::Mode::explicit_radius)
        throw validation_error("target series takes an explicit radius schedule "
                               "(solve implicit radii at the target first)");
    return target_series(s, m, sched, y, x, n, radii_at(m, s, sched, y, n));
}

// ---------------------------------------------------------------------------
// Strong Borel-Cantelli ratio against a reference cumulative volume.
// ---------------------------------------------------------------------------

struct SbcResult {
    std::vector<double> ratio;      // NaN before the first positive reference entry
    double final_ratio = std::numeric_limits<double>::quiet_NaN();
    std::size_t first_defined = 0;  // index into the series (0-based)
    bool undefined_prefix = false;
    bool all_undefined = false;
};

inline SbcResult sbc_ratio(const HitSeries& series, std::span<const double> reference_cum) {
    if (reference_cum.size() < series.size())
        throw stream_length_error("sbc_ratio: reference cumulative shorter than series");
    SbcResult out;
    out.ratio.assign(series.size(), std::numeric_limits<double>::quiet_NaN());
    bool seen = false;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (reference_cum[i] > 0.0) {
            if (!seen) {
                seen = true;
                out.first_defined = i;
                out.undefined_prefix = i > 0;
            }
            out.ratio[i] = series.hits_cum[i] / reference_cum[i];
        }
    }
    if (!seen) {
        out.all_undefined = true;
        out.undefined_prefix = !series.hits.empty();
    } else {
        out.final_ratio = out.ratio.back();
    }
    return out;
}

// Reference volumes: cumulative Lebesgue masses of the balls B(center, r_k).
inline std::vector<double> lebesgue_cumulative(const MapSystem& s, const Point& center,
                                               std::span<const double> radii) {
    DensityMeasure leb;
    switch (space_of(s.kind)) {
        case Space::circle: leb = lebesgue_circle(); break;
        case Space::interval: leb = lebesgue_interval(); break;
        case Space::torus: leb = lebesgue_torus(); break;
    }
    std::vector<double> out(radii.size());
    kahan_sum acc;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        acc.add(ball_measure(leb, s, center, radii[i]));
        out[i] = acc.value();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo scalar estimate.
// ---------------------------------------------------------------------------

struct McEstimate {
    double value = 0.0;
    double se = 0.0;
    std::size_t samples = 0;
};

// Diagnostic: mu(E_k) = mu{x : d(T^k x, x) < r_k(x)} by Monte Carlo, to be
// compared with the schedule mass M_k (they agree up to an exponentially
// small gap in k, which is why series in implicit mode record M_k).
inline McEstimate recurrence_mass_mc(const MapSystem& s, const DensityMeasure& m,
                                     const RadiusSchedule& sched, std::uint64_t k,
                                     std::size_t samples, Rng& rng) {
    if (k == 0) throw domain_error("recurrence step index starts at 1");
    if (samples < 2) throw validation_error("need >= 2 samples");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        const Point x = sample_orbit_points(s, m, rng, 1)[0];
        const double r = sched.mode == RadiusSchedule::Mode::implicit_mass
                             ? implicit_radius(m, s, x, sched.value(k))
                             : sched.value(k);
        const Point p = iterate(s, x, k);
        if (distance(s, p, x) < r) ++hits;
    }
    McEstimate est;
    est.samples = samples;
    est.value = static_cast<double>(hits) / static_cast<double>(samples);
    est.se = bernoulli_se(est.value, samples);
    return est;
}

// ---------------------------------------------------------------------------
// Short returns.
// ---------------------------------------------------------------------------

namespace detail {

// Finite unions of closed subintervals of [0,1], kept unsorted (only measures
// of intersections are ever taken).
using IntervalSet = std::vector<std::pair<double, double>>;

inline IntervalSet ball_intervals(Space space, double c, double r) {
    IntervalSet out;
    if (r <= 0.0) return out;
    if (space == Space::interval) {
        out.emplace_back(std::max(0.0, c - r), std::min(1.0, c + r));
        return out;
    }
    // Circle: split a wrapping arc at 0.
    if (r >= 0.5) {
        out.emplace_back(0.0, 1.0);
        return out;
    }
    double lo = c - r, hi = c + r;
    if (lo < 0.0) {
        out.emplace_back(0.0, hi);
        out.emplace_back(lo + 1.0, 1.0);
    } else if (hi > 1.0) {
        out.emplace_back(lo, 1.0);
        out.emplace_back(0.0, hi - 1.0);
    } else {
        out.emplace_back(lo, hi);
    }
    return out;
}

// One-step preimage through every affine branch.
inline IntervalSet preimage_step(const MapSystem& s, const IntervalSet& target) {
    IntervalSet out;
    out.reserve(target.size() * s.branches.size());
    for (const Branch& br : s.branches) {
        for (const auto& [c, d] : target) {
            double u = (c - br.intercept) / br.slope;
            double v = (d - br.intercept) / br.slope;
            if (u > v) std::swap(u, v);
            u = std::max(u, br.a);
            v = std::min(v, br.b);
            if (v > u) out.emplace_back(u, v);
        }
    }
    return out;
}

inline IntervalSet preimage(const MapSystem& s, IntervalSet target, std::uint64_t l) {
    for (std::uint64_t i = 0; i < l; ++i) target = preimage_step(s, target);
    return target;
}

inline double intersection_measure(const DensityMeasure& m, const IntervalSet& a,
                                   const IntervalSet& b) {
    kahan_sum acc;
    for (const auto& [alo, ahi] : a)
        for (const auto& [blo, bhi] : b) {
            const double lo = std::max(alo, blo);
            const double hi = std::min(ahi, bhi);
            if (hi > lo) acc.add(interval_measure(m, lo, hi));
        }
    return acc.value();
}

// mu(B(c,r) n T^-l B(c,r)) for a canonical dyadic circle map of slope 2^shift:
// T^l x = L x mod 1 with L = 2^(shift*l), so the preimage pieces are
// [(c-r+j)/L, (c+r+j)/L] over integers j, and only the handful of j whose
// piece meets the ball contribute.  Cost O(r*L) instead of O(branches^l).
inline double dyadic_overlap(const DensityMeasure& m, int shift, std::uint64_t l, double c,
                             double r) {
    const double L = std::ldexp(1.0, static_cast<int>(shift * l));
    kahan_sum acc;
    for (const auto& [blo, bhi] : ball_intervals(Space::circle, c, r)) {
        const auto j_min = static_cast<long long>(std::ceil(L * blo - c - r));
        const auto j_max = static_cast<long long>(std::floor(L * bhi - c + r));
        for (long long j = j_min; j <= j_max; ++j) {
            const double lo = std::max((c - r + static_cast<double>(j)) / L, blo);
            const double hi = std::min((c + r + static_cast<double>(j)) / L, bhi);
            if (hi > lo) acc.add(interval_measure(m, lo, hi));
        }
    }
    return acc.value();
}

}  // namespace detail

struct ShortReturns {
    McEstimate p_close;  // mu{x : d(x, T^l x) < 2r}
    McEstimate overlap;  // Integral of mu(B(y,r) n T^-l B(y,r)) dmu(y)
    bool inner_exact = false;
    double r = 0.0;
    std::uint64_t l = 0;
};

inline ShortReturns short_returns(const MapSystem& s, const DensityMeasure& m, double r,
                                  std::uint64_t l, std::size_t sample_count, Rng& rng,
                                  std::size_t inner_samples = 512) {
    check_compat(m, s);
    if (l < 1) throw validation_error("short returns need lag l >= 1");
    if (!(r >= 0.0)) throw domain_error("negative radius");
    ShortReturns out;
    out.r = r;
    out.l = l;
    out.p_close.samples = sample_count;
    out.overlap.samples = sample_count;
    out.inner_exact = s.is_pw_affine();
    if (r == 0.0) return out;

    // p_close: plain Monte Carlo indicator.
    std::size_t close_hits = 0;
    for (std::size_t i = 0; i < sample_count; ++i) {
        const Point x = sample_orbit_points(s, m, rng, 1)[0];
        const Point px = iterate(s, x, l);
        if (distance(s, x, px) < 2.0 * r) ++close_hits;
    }
    out.p_close.value = static_cast<double>(close_hits) / static_cast<double>(sample_count);
    out.p_close.se = bernoulli_se(out.p_close.value, sample_count);

    // overlap: outer Monte Carlo over the ball center y; inner value exact
    // for piecewise-affine maps, nested Monte Carlo otherwise.
    const auto shift = s.dyadic_shift();
    const bool fast_dyadic =
        shift && static_cast<std::uint64_t>(*shift) * l <= 40 &&
        2.0 * r * std::ldexp(1.0, static_cast<int>(*shift * l)) < 1e5;
    if (out.inner_exact && !fast_dyadic &&
        static_cast<double>(l) * std::log2(static_cast<double>(s.branches.size())) > 22.0)
        throw validation_error("short-return lag too deep for exact preimage enumeration");
    std::vector<double> inner(sample_count);
    for (std::size_t i = 0; i < sample_count; ++i) {
        const Point y = sample(m, rng, 1)[0];
        if (fast_dyadic) {
            inner[i] = detail::dyadic_overlap(m, *shift, l, y.coord(), r);
        } else if (out.inner_exact) {
            const auto ball = detail::ball_intervals(m.space, y.coord(), r);
            const auto pre = detail::preimage(s, ball, l);
            inner[i] = detail::intersection_measure(m, ball, pre);
        } else {
            std::size_t both = 0;
            for (std::size_t j = 0; j < inner_samples; ++j) {
                const Point z = sample(m, rng, 1)[0];
                if (distance(s, z, y) < r && distance(s, iterate(s, z, l), y) < r) ++both;
            }
            inner[i] = static_cast<double>(both) / static_cast<double>(inner_samples);
        }
    }
    out.overlap.value = sample_mean(inner);
    out.overlap.se = std::sqrt(sample_variance(inner) / static_cast<double>(sample_count));
    return out;
}

}  // namespace reclab
