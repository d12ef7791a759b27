#pragma once

// Absolutely continuous invariant measures with piecewise-constant densities,
// plus the ball-measure machinery built on them: exact CDFs, exact ball
// measures, exact mean ball measures (the density is piecewise constant and
// the ball measure is piecewise linear in the center, so every integral here
// is a finite sum), inverse-CDF sampling, and a regularity checker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "reclab/common.hpp"
#include "reclab/rng.hpp"
#include "reclab/systems.hpp"

namespace reclab {

enum class Space { circle, interval, torus };

inline std::string to_string(Space s) {
    switch (s) {
        case Space::circle: return "circle";
        case Space::interval: return "interval";
        case Space::torus: return "torus";
    }
    return "?";
}

inline Space space_of(MapKind k) {
    switch (k) {
        case MapKind::circle_pw_affine: return Space::circle;
        case MapKind::interval_pw_affine: return Space::interval;
        case MapKind::torus_linear: return Space::torus;
        case MapKind::sft_handle:
            throw domain_error("sft handle has no metric space for measures");
    }
    return Space::circle;
}

// Density piece: h on [lo, hi).
struct Piece {
    double lo = 0.0;
    double hi = 0.0;
    double h = 0.0;
};

struct DensityMeasure {
    Space space = Space::circle;
    std::vector<Piece> pieces;
    std::vector<double> cum;  // cum[i] = F(pieces[i].lo); cum.back() = F(1) = 1

    double density_at(double x) const {
        for (std::size_t i = pieces.size(); i-- > 1;)
            if (x >= pieces[i].lo) return pieces[i].h;
        return pieces.front().h;
    }

    double density_max() const {
        double m = 0.0;
        for (const Piece& p : pieces) m = std::max(m, p.h);
        return m;
    }

    double density_min() const {
        double m = pieces.empty() ? 0.0 : pieces.front().h;
        for (const Piece& p : pieces) m = std::min(m, p.h);
        return m;
    }

    bool is_uniform() const {
        for (const Piece& p : pieces)
            if (std::abs(p.h - 1.0) > 1e-12) return false;
        return true;
    }

    // F(x) = mu([0,x]) for x in [0,1].
    double cdf(double x) const {
        if (x <= 0.0) return 0.0;
        if (x >= 1.0) return 1.0;
        std::size_t i = pieces.size() - 1;
        while (i > 0 && x < pieces[i].lo) --i;
        return cum[i] + pieces[i].h * (x - pieces[i].lo);
    }

    // Smallest x with F(x) = u.
    double quantile(double u) const {
        if (u <= 0.0) return 0.0;
        if (u >= 1.0) return 1.0;
        std::size_t i = pieces.size() - 1;
        while (i > 0 && u < cum[i]) --i;
        return pieces[i].lo + (u - cum[i]) / pieces[i].h;
    }
};

inline void validate(const DensityMeasure& m) {
    if (m.pieces.empty()) throw validation_error("measure has no density pieces");
    constexpr double tol = 1e-9;
    double cursor = 0.0;
    double mass = 0.0;
    for (const Piece& p : m.pieces) {
        if (std::abs(p.lo - cursor) > 1e-12)
            throw validation_error("density pieces do not partition [0,1)");
        if (!(p.hi > p.lo)) throw validation_error("density piece is empty or reversed");
        if (!(p.h >= 0.0)) throw validation_error("density must be nonnegative");
        mass += p.h * (p.hi - p.lo);
        cursor = p.hi;
    }
    if (std::abs(cursor - 1.0) > 1e-12)
        throw validation_error("density pieces do not cover [0,1)");
    if (std::abs(mass - 1.0) > tol)
        throw validation_error("density does not integrate to 1 (mass " +
                               std::to_string(mass) + ")");
    if (m.space == Space::torus && (m.pieces.size() != 1 || std::abs(m.pieces[0].h - 1.0) > 1e-12))
        throw validation_error("torus measures are supported for uniform density only");
}

inline DensityMeasure make_measure(Space space, std::vector<Piece> pieces) {
    DensityMeasure m;
    m.space = space;
    m.pieces = std::move(pieces);
    m.cum.resize(m.pieces.size() + 1);
    m.cum[0] = 0.0;
    for (std::size_t i = 0; i < m.pieces.size(); ++i)
        m.cum[i + 1] = m.cum[i] + m.pieces[i].h * (m.pieces[i].hi - m.pieces[i].lo);
    validate(m);
    return m;
}

inline DensityMeasure lebesgue_circle() { return make_measure(Space::circle, {{0.0, 1.0, 1.0}}); }
inline DensityMeasure lebesgue_interval() { return make_measure(Space::interval, {{0.0, 1.0, 1.0}}); }
inline DensityMeasure lebesgue_torus() { return make_measure(Space::torus, {{0.0, 1.0, 1.0}}); }

// Invariant density of make_two_slope(): 9/8 on [0,2/3), 3/4 on [2/3,1).
inline DensityMeasure two_slope_invariant() {
    return make_measure(Space::interval,
                        {{0.0, 2.0 / 3.0, 9.0 / 8.0}, {2.0 / 3.0, 1.0, 3.0 / 4.0}});
}

// Metric by space alone (distance(MapSystem,...) routes through the system).
inline double space_distance(Space sp, const Point& p, const Point& q) {
    switch (sp) {
        case Space::circle: return circle_dist(p.coord(), q.coord());
        case Space::interval: return std::abs(p.coord() - q.coord());
        case Space::torus: {
            const double dx = circle_dist(p.x, q.x);
            const double dy = circle_dist(p.y, q.y);
            return std::sqrt(dx * dx + dy * dy);
        }
    }
    return 0.0;
}

inline void check_compat(const DensityMeasure& m, const MapSystem& s) {
    if (space_of(s.kind) != m.space)
        throw validation_error("measure lives on the " + to_string(m.space) +
                               " but the system acts on the " + to_string(space_of(s.kind)));
}

// ---------------------------------------------------------------------------
// Ball measures.
// ---------------------------------------------------------------------------

// mu of the circle arc from a to b going counterclockwise (arguments are any
// reals; the arc has length (b - a) mod 1).
inline double arc_measure(const DensityMeasure& m, double a, double b) {
    const double lo = reduce_mod1(a);
    const double hi = reduce_mod1(b);
    if (lo <= hi) return m.cdf(hi) - m.cdf(lo);
    return 1.0 - (m.cdf(lo) - m.cdf(hi));
}

// mu([a,b] intersected with [0,1]).
inline double interval_measure(const DensityMeasure& m, double a, double b) {
    const double lo = std::max(0.0, a);
    const double hi = std::min(1.0, b);
    if (hi <= lo) return 0.0;
    return m.cdf(hi) - m.cdf(lo);
}

inline double ball_measure(const DensityMeasure& m, const MapSystem& s, const Point& center,
                           double r) {
    check_compat(m, s);
    if (!(r >= 0.0)) throw domain_error("negative ball radius");
    if (r == 0.0) return 0.0;
    switch (m.space) {
        case Space::circle: {
            if (r >= 0.5) return 1.0;  // ball wraps the whole circle
            const double c = center.coord();
            return arc_measure(m, c - r, c + r);
        }
        case Space::interval: {
            const double c = center.coord();
            return interval_measure(m, c - r, c + r);
        }
        case Space::torus: {
            if (r > 0.5)
                throw unsupported_radius_error(
                    "torus ball measure implemented for r <= 1/2 (injectivity radius)");
            return std::numbers::pi * r * r;
        }
    }
    return 0.0;
}

// Exact integral of x -> mu(B(x, r)) against mu itself.  The integrand is
// piecewise linear with breakpoints where a ball endpoint crosses a density
// knot (plus the domain-boundary clip points on the interval), so we integrate
// with the trapezoid rule on the refined cell partition, which is exact.
inline double mean_ball_measure(const DensityMeasure& m, const MapSystem& s, double r) {
    check_compat(m, s);
    if (!(r >= 0.0)) throw domain_error("negative ball radius");
    if (r == 0.0) return 0.0;
    if (m.space == Space::torus) {
        if (r > 0.5)
            throw unsupported_radius_error("torus ball measure implemented for r <= 1/2");
        return std::numbers::pi * r * r;
    }
    std::vector<double> cuts;
    cuts.push_back(0.0);
    cuts.push_back(1.0);
    for (const Piece& p : m.pieces) {
        cuts.push_back(p.lo);
        for (double shift : {-r, r}) {
            double c = p.lo + shift;
            if (m.space == Space::circle) {
                cuts.push_back(reduce_mod1(c));
            } else if (c > 0.0 && c < 1.0) {
                cuts.push_back(c);
            }
        }
    }
    if (m.space == Space::interval) {
        if (r < 1.0) cuts.push_back(r);
        if (1.0 - r > 0.0) cuts.push_back(1.0 - r);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-15; }),
               cuts.end());

    auto g = [&](double x) {
        Point p;
        p.x = std::min(std::max(x, 0.0), std::nextafter(1.0, 0.0));
        return ball_measure(m, s, p, r);
    };
    kahan_sum acc;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = cuts[i], b = cuts[i + 1];
        if (b - a < 1e-15) continue;
        const double h = m.density_at(0.5 * (a + b));
        acc.add(h * 0.5 * (g(a) + g(b)) * (b - a));
    }
    return acc.value();
}

// ---------------------------------------------------------------------------
// Sampling.
// ---------------------------------------------------------------------------

inline std::vector<Point> sample(const DensityMeasure& m, Rng& rng, std::size_t count) {
    std::vector<Point> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (m.space == Space::torus) {
            out.push_back(make_point2(rng.next_double(), rng.next_double()));
        } else {
            Point p;
            p.x = m.quantile(rng.next_double());
            if (p.x >= 1.0) p.x = std::nextafter(1.0, 0.0);
            out.push_back(p);
        }
    }
    return out;
}

// Uniform circle points carried as exact binary expansions.  Only the uniform
// measure admits this representation (the expansion bits are i.i.d. fair).
inline std::vector<Point> sample_bitstream(const DensityMeasure& m, Rng& rng,
                                           std::size_t count) {
    if (m.space != Space::circle || !m.is_uniform())
        throw validation_error("bitstream sampling requires the uniform circle measure");
    std::vector<Point> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(make_bitstream_point(rng.next_u64()));
    return out;
}

// Starting points for long orbits.  Dyadic circle maps destroy one mantissa
// bit per step, so a double-precision start collapses onto the fixed point
// after ~53 iterations; the bitstream representation keeps the orbit exact
// for arbitrarily many steps.  Use this whenever the sampled point will be
// iterated; plain `sample` is fine for fixed targets.
inline std::vector<Point> sample_orbit_points(const MapSystem& sys, const DensityMeasure& m,
                                              Rng& rng, std::size_t count) {
    if (sys.dyadic_shift() && m.space == Space::circle && m.is_uniform())
        return sample_bitstream(m, rng, count);
    return sample(m, rng, count);
}

// ---------------------------------------------------------------------------
// Regularity of r -> mu(B(x,r)).
// ---------------------------------------------------------------------------

// For an absolutely continuous measure with bounded density the ball measure
// is Lipschitz in the radius (constant at most twice the density sup, or the
// annulus area on the torus) and spheres are null.  This checks both on a
// grid and reports the worst observed modulus.
struct RegularityReport {
    bool ok = true;
    double max_ratio = 0.0;       // observed increment / permitted increment
    double worst_center = 0.0;
    double worst_radius = 0.0;
    std::size_t violations = 0;
};

inline RegularityReport verify_regularity(const DensityMeasure& m, const MapSystem& s,
                                          std::span<const double> radii,
                                          std::span<const Point> centers) {
    check_compat(m, s);
    if (radii.size() < 2) throw validation_error("regularity check needs >= 2 radii");
    std::vector<double> rs(radii.begin(), radii.end());
    std::sort(rs.begin(), rs.end());
    RegularityReport rep;
    const double hmax = m.density_max();
    for (const Point& c : centers) {
        double prev = ball_measure(m, s, c, rs[0]);
        for (std::size_t i = 1; i < rs.size(); ++i) {
            const double cur = ball_measure(m, s, c, rs[i]);
            const double dr = rs[i] - rs[i - 1];
            if (cur + 1e-12 < prev) {
                rep.ok = false;
                ++rep.violations;
            }
            double permitted;
            if (m.space == Space::torus) {
                permitted = std::numbers::pi * (rs[i] * rs[i] - rs[i - 1] * rs[i - 1]);
            } else {
                permitted = 2.0 * hmax * dr;
            }
            const double ratio = permitted > 0.0 ? (cur - prev) / permitted : 0.0;
            if (ratio > rep.max_ratio) {
                rep.max_ratio = ratio;
                rep.worst_center = c.coord();
                rep.worst_radius = rs[i];
            }
            if (ratio > 1.0 + 1e-9) {
                rep.ok = false;
                ++rep.violations;
            }
            prev = cur;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// JSON wire format.
// ---------------------------------------------------------------------------

inline json to_json(const DensityMeasure& m) {
    json j;
    j["space"] = to_string(m.space);
    json arr = json::array();
    for (const Piece& p : m.pieces)
        arr.push_back({{"lo", p.lo}, {"hi", p.hi}, {"h", p.h}});
    j["pieces"] = arr;
    return j;
}

inline DensityMeasure measure_from_json(const json& j) {
    const std::string sp = j.value("space", "circle");
    Space space;
    if (sp == "circle") space = Space::circle;
    else if (sp == "interval") space = Space::interval;
    else if (sp == "torus") space = Space::torus;
    else throw validation_error("unknown measure space: " + sp);
    std::vector<Piece> pieces;
    if (j.contains("pieces")) {
        for (const auto& pj : j.at("pieces"))
            pieces.push_back({pj.at("lo").get<double>(), pj.at("hi").get<double>(),
                              pj.at("h").get<double>()});
    } else {
        pieces.push_back({0.0, 1.0, 1.0});
    }
    return make_measure(space, std::move(pieces));
}

}  // namespace reclab
