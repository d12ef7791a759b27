#pragma once

// Concrete metric measure-preserving systems: piecewise-affine circle/interval
// maps, linear toral automorphisms, and a thin handle for subshifts of finite
// type (whose own operations live in symbolic.hpp).
//
// Orbit representation note: iterating x -> 2x mod 1 in floating point zeroes
// the mantissa after ~53 steps, so maps whose branch slopes are a uniform
// power of two support a "bitstream" point: a seeded random binary expansion
// whose orbit is an exact shift.  Everything else runs in double precision;
// statistical functionals of uniformly expanding maps are shadowing-robust.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reclab/common.hpp"

namespace reclab {

using json = nlohmann::ordered_json;

enum class MapKind {
    circle_pw_affine,
    interval_pw_affine,
    torus_linear,
    sft_handle,
};

inline std::string to_string(MapKind k) {
    switch (k) {
        case MapKind::circle_pw_affine: return "circle-pw-affine";
        case MapKind::interval_pw_affine: return "interval-pw-affine";
        case MapKind::torus_linear: return "torus-linear";
        case MapKind::sft_handle: return "sft";
    }
    return "?";
}

// One affine branch T(x) = slope*x + intercept on the right-open domain [a,b).
struct Branch {
    double a = 0.0;
    double b = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
};

struct MapSystem {
    MapKind kind = MapKind::circle_pw_affine;
    std::vector<Branch> branches;                       // pw-affine kinds
    std::array<std::array<long long, 2>, 2> matrix{};   // torus-linear
    bool declared_markov = false;
    std::string sft_descriptor;  // serialized SftSystem JSON for the handle

    int dimension() const { return kind == MapKind::torus_linear ? 2 : 1; }

    bool is_pw_affine() const {
        return kind == MapKind::circle_pw_affine ||
               kind == MapKind::interval_pw_affine;
    }

    // Uniform power-of-two slope with canonical dyadic branches: the orbit of
    // a bitstream point is an exact shift by dyadic_shift() bits per step.
    std::optional<int> dyadic_shift() const {
        if (kind != MapKind::circle_pw_affine || branches.empty()) return std::nullopt;
        const double s = branches.front().slope;
        if (!is_power_of_two_ge2(s)) return std::nullopt;
        const int m = static_cast<int>(std::lround(std::log2(s)));
        const auto nb = static_cast<std::size_t>(1) << m;
        if (branches.size() != nb) return std::nullopt;
        for (std::size_t i = 0; i < nb; ++i) {
            const Branch& br = branches[i];
            const double a = static_cast<double>(i) / static_cast<double>(nb);
            const double b = static_cast<double>(i + 1) / static_cast<double>(nb);
            if (std::abs(br.a - a) > 1e-12 || std::abs(br.b - b) > 1e-12) return std::nullopt;
            if (std::abs(br.slope - s) > 1e-12) return std::nullopt;
            if (std::abs(br.intercept + static_cast<double>(i)) > 1e-12) return std::nullopt;
        }
        return m;
    }
};

// ---------------------------------------------------------------------------
// Points.
// ---------------------------------------------------------------------------

namespace bits {

// Block q of the infinite expansion of a seeded point: splitmix64 sequence.
inline std::uint64_t block(std::uint64_t seed, std::uint64_t q) {
    return detail::mix64(seed + (q + 1) * detail::kGolden);
}

// 64 expansion bits starting at bit offset pos (bit 0 = most significant).
inline std::uint64_t window64(std::uint64_t seed, std::uint64_t pos) {
    const std::uint64_t q = pos >> 6;
    const unsigned sh = static_cast<unsigned>(pos & 63);
    const std::uint64_t hi = block(seed, q);
    if (sh == 0) return hi;
    return (hi << sh) | (block(seed, q + 1) >> (64 - sh));
}

// Fractional value of a 64-bit window, in [0,1).
inline double frac(std::uint64_t w) {
    return static_cast<double>(w) * 0x1.0p-64;
}

}  // namespace bits

struct Point {
    enum class Repr : std::uint8_t { float1d, float2d, bitstream };

    Repr repr = Repr::float1d;
    double x = 0.0;
    double y = 0.0;
    std::uint64_t seed = 0;  // bitstream: expansion seed
    std::uint64_t pos = 0;   // bitstream: current shift offset

    double coord() const {
        return repr == Repr::bitstream ? bits::frac(bits::window64(seed, pos)) : x;
    }
};

inline Point make_point(double x) {
    if (!(x >= 0.0 && x < 1.0)) throw domain_error("point outside [0,1)");
    Point p;
    p.x = x;
    return p;
}

inline Point make_point2(double x, double y) {
    if (!(x >= 0.0 && x < 1.0 && y >= 0.0 && y < 1.0))
        throw domain_error("point outside [0,1)^2");
    Point p;
    p.repr = Point::Repr::float2d;
    p.x = x;
    p.y = y;
    return p;
}

inline Point make_bitstream_point(std::uint64_t seed) {
    Point p;
    p.repr = Point::Repr::bitstream;
    p.seed = seed;
    return p;
}

// ---------------------------------------------------------------------------
// Validation / construction.
// ---------------------------------------------------------------------------

namespace detail {

inline void validate_pw_affine(const MapSystem& s) {
    if (s.branches.empty())
        throw validation_error("piecewise-affine map needs at least one branch");
    constexpr double tol = 1e-12;
    double cursor = 0.0;
    for (const Branch& br : s.branches) {
        if (std::abs(br.a - cursor) > tol)
            throw validation_error("branch domains do not partition [0,1): gap or overlap at " +
                                   std::to_string(br.a));
        if (!(br.b > br.a)) throw validation_error("branch domain is empty or reversed");
        if (!(std::abs(br.slope) > 1.0))
            throw validation_error("branch slope must satisfy |slope| > 1");
        cursor = br.b;
    }
    if (std::abs(cursor - 1.0) > tol)
        throw validation_error("branch domains do not cover [0,1)");
    // Branch images must stay inside [0,1] so the dynamics never leaves the
    // space (circle images are interpreted mod 1 but we keep branches in
    // fundamental-domain form).
    for (const Branch& br : s.branches) {
        const double ia = br.slope * br.a + br.intercept;
        const double ib = br.slope * br.b + br.intercept;
        const double lo = std::min(ia, ib), hi = std::max(ia, ib);
        if (lo < -1e-9 || hi > 1.0 + 1e-9)
            throw validation_error("branch image leaves [0,1]");
    }
    if (s.declared_markov) {
        // Image of each branch domain must equal a union of branch domains,
        // i.e. image endpoints land on branch endpoints.
        std::vector<double> endpoints;
        endpoints.reserve(s.branches.size() + 1);
        for (const Branch& br : s.branches) endpoints.push_back(br.a);
        endpoints.push_back(1.0);
        auto is_endpoint = [&](double v) {
            for (double e : endpoints)
                if (std::abs(v - e) <= 1e-9) return true;
            return false;
        };
        for (const Branch& br : s.branches) {
            const double ia = br.slope * br.a + br.intercept;
            const double ib = br.slope * br.b + br.intercept;
            if (!is_endpoint(std::min(ia, ib)) || !is_endpoint(std::max(ia, ib)))
                throw validation_error("declared Markov map has a branch image that is "
                                       "not a union of branch domains");
        }
    }
}

inline void validate_torus(const MapSystem& s) {
    const long long a = s.matrix[0][0], b = s.matrix[0][1];
    const long long c = s.matrix[1][0], d = s.matrix[1][1];
    const long long det = a * d - b * c;
    if (det != 1 && det != -1)
        throw validation_error("torus matrix must have determinant +-1");
    const long long tr = a + d;
    // Unit-modulus eigenvalues: det=+1 needs |tr|<=2; det=-1 needs tr=0.
    if ((det == 1 && std::llabs(tr) <= 2) || (det == -1 && tr == 0))
        throw validation_error("torus matrix has an eigenvalue of modulus 1 (not hyperbolic)");
}

}  // namespace detail

inline void validate(const MapSystem& s) {
    switch (s.kind) {
        case MapKind::circle_pw_affine:
        case MapKind::interval_pw_affine:
            detail::validate_pw_affine(s);
            break;
        case MapKind::torus_linear:
            detail::validate_torus(s);
            break;
        case MapKind::sft_handle:
            if (s.sft_descriptor.empty())
                throw validation_error("sft handle carries no descriptor");
            break;
    }
}

inline MapSystem make_system(MapKind kind, std::vector<Branch> branches, bool markov = false) {
    MapSystem s;
    s.kind = kind;
    s.branches = std::move(branches);
    s.declared_markov = markov;
    validate(s);
    return s;
}

// x -> 2x mod 1 on the circle.
inline MapSystem make_doubling() {
    return make_system(MapKind::circle_pw_affine,
                       {{0.0, 0.5, 2.0, 0.0}, {0.5, 1.0, 2.0, -1.0}}, true);
}

// Two-branch Markov interval map with invariant density (9/8, 3/4) on the
// partition {[0,2/3), [2/3,1)}: slope 3/2 onto [0,1), slope 2 onto [0,2/3).
inline MapSystem make_two_slope() {
    return make_system(MapKind::interval_pw_affine,
                       {{0.0, 2.0 / 3.0, 1.5, 0.0}, {2.0 / 3.0, 1.0, 2.0, -4.0 / 3.0}}, true);
}

// Arnold cat map.
inline MapSystem make_cat_map() {
    MapSystem s;
    s.kind = MapKind::torus_linear;
    s.matrix = {{{2, 1}, {1, 1}}};
    validate(s);
    return s;
}

// ---------------------------------------------------------------------------
// Dynamics.
// ---------------------------------------------------------------------------

namespace detail {

// Branch lookup for x in [0,1): right-open domains, so a point sitting exactly
// on an endpoint takes the branch that starts there.
inline const Branch& branch_at(const MapSystem& s, double x) {
    const auto& br = s.branches;
    if (br.size() <= 8) {
        for (std::size_t i = br.size(); i-- > 1;)
            if (x >= br[i].a) return br[i];
        return br[0];
    }
    auto it = std::upper_bound(br.begin(), br.end(), x,
                               [](double v, const Branch& b) { return v < b.a; });
    return *(it - 1);
}

inline double step1d(const MapSystem& s, double x) {
    const Branch& br = branch_at(s, x);
    double y = br.slope * x + br.intercept;
    if (s.kind == MapKind::circle_pw_affine) return reduce_mod1(y);
    // Interval maps stay in [0,1) by validation; guard rounding spill.
    if (y < 0.0) y = 0.0;
    if (y >= 1.0) y = std::nextafter(1.0, 0.0);
    return y;
}

inline void step2d(const MapSystem& s, double& x, double& y) {
    const auto& m = s.matrix;
    const double nx = static_cast<double>(m[0][0]) * x + static_cast<double>(m[0][1]) * y;
    const double ny = static_cast<double>(m[1][0]) * x + static_cast<double>(m[1][1]) * y;
    x = reduce_mod1(nx);
    y = reduce_mod1(ny);
}

}  // namespace detail

inline Point iterate(const MapSystem& s, Point p, std::uint64_t n) {
    switch (p.repr) {
        case Point::Repr::bitstream: {
            const auto m = s.dyadic_shift();
            if (!m)
                throw domain_error(
                    "bitstream points require a dyadic circle map (uniform power-of-two slope)");
            p.pos += static_cast<std::uint64_t>(*m) * n;
            return p;
        }
        case Point::Repr::float1d: {
            if (!s.is_pw_affine())
                throw domain_error("1d float point on a non-1d system");
            if (!(p.x >= 0.0 && p.x < 1.0)) throw domain_error("point outside [0,1)");
            for (std::uint64_t k = 0; k < n; ++k) p.x = detail::step1d(s, p.x);
            return p;
        }
        case Point::Repr::float2d: {
            if (s.kind != MapKind::torus_linear)
                throw domain_error("2d point on a 1d system");
            if (!(p.x >= 0.0 && p.x < 1.0 && p.y >= 0.0 && p.y < 1.0))
                throw domain_error("point outside [0,1)^2");
            for (std::uint64_t k = 0; k < n; ++k) detail::step2d(s, p.x, p.y);
            return p;
        }
    }
    throw domain_error("unreachable point representation");
}

inline double circle_dist(double a, double b) {
    double u = std::abs(a - b);
    return std::min(u, 1.0 - u);
}

inline double distance(const MapSystem& s, const Point& p, const Point& q) {
    switch (s.kind) {
        case MapKind::circle_pw_affine:
            return circle_dist(p.coord(), q.coord());
        case MapKind::interval_pw_affine:
            return std::abs(p.coord() - q.coord());
        case MapKind::torus_linear: {
            const double dx = circle_dist(p.x, q.x);
            const double dy = circle_dist(p.y, q.y);
            return std::sqrt(dx * dx + dy * dy);
        }
        case MapKind::sft_handle:
            throw domain_error("sft handle points use symbolic::sft_distance");
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Orbit hit indicators: bit k = 1 iff d(T^k x, center_k) < radius_k.
// ---------------------------------------------------------------------------

struct TargetBall {
    Point center;
    double radius = 0.0;
};

// Generator form: gen(k) -> TargetBall for k = 1..n.  Single pass, constant
// memory beyond the point itself.
template <typename Gen>
std::vector<std::uint8_t> orbit_hits_stream(const MapSystem& s, const Point& x,
                                            std::uint64_t n, Gen&& gen) {
    std::vector<std::uint8_t> out;
    out.reserve(n);
    Point p = x;
    for (std::uint64_t k = 1; k <= n; ++k) {
        p = iterate(s, p, 1);
        const TargetBall tb = gen(k);
        out.push_back(distance(s, p, tb.center) < tb.radius ? 1 : 0);
    }
    return out;
}

inline std::vector<std::uint8_t> orbit_hits(const MapSystem& s, const Point& x,
                                            std::span<const TargetBall> stream,
                                            std::uint64_t n) {
    if (stream.size() < n)
        throw stream_length_error("orbit_hits: stream supplies " +
                                  std::to_string(stream.size()) + " balls for n = " +
                                  std::to_string(n));
    return orbit_hits_stream(s, x, n, [&](std::uint64_t k) { return stream[k - 1]; });
}

// ---------------------------------------------------------------------------
// JSON wire format.
// ---------------------------------------------------------------------------

inline json to_json(const MapSystem& s) {
    json j;
    j["kind"] = to_string(s.kind);
    if (s.is_pw_affine()) {
        json arr = json::array();
        for (const Branch& br : s.branches)
            arr.push_back({{"a", br.a}, {"b", br.b}, {"slope", br.slope},
                           {"intercept", br.intercept}});
        j["branches"] = arr;
        j["markov"] = s.declared_markov;
    } else if (s.kind == MapKind::torus_linear) {
        j["matrix"] = {{s.matrix[0][0], s.matrix[0][1]}, {s.matrix[1][0], s.matrix[1][1]}};
    } else {
        j["sft"] = json::parse(s.sft_descriptor);
    }
    return j;
}

inline MapSystem system_from_json(const json& j) {
    if (!j.contains("kind")) throw validation_error("system JSON lacks \"kind\"");
    const std::string kind = j.at("kind").get<std::string>();
    MapSystem s;
    if (kind == "circle-pw-affine" || kind == "interval-pw-affine") {
        s.kind = (kind[0] == 'c') ? MapKind::circle_pw_affine : MapKind::interval_pw_affine;
        if (!j.contains("branches"))
            throw validation_error("piecewise-affine system JSON lacks \"branches\"");
        for (const auto& bj : j.at("branches")) {
            Branch br;
            br.a = bj.at("a").get<double>();
            br.b = bj.at("b").get<double>();
            br.slope = bj.at("slope").get<double>();
            br.intercept = bj.at("intercept").get<double>();
            s.branches.push_back(br);
        }
        s.declared_markov = j.value("markov", false);
    } else if (kind == "torus-linear") {
        s.kind = MapKind::torus_linear;
        const auto& m = j.at("matrix");
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) s.matrix[r][c] = m.at(r).at(c).get<long long>();
    } else if (kind == "sft") {
        s.kind = MapKind::sft_handle;
        s.sft_descriptor = j.at("sft").dump();
    } else {
        throw validation_error("unknown system kind: " + kind);
    }
    validate(s);
    return s;
}

}  // namespace reclab
