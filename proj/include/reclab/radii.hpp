#pragma once

// Radius schedules.  Explicit schedules prescribe r_n directly; implicit
// schedules prescribe the ball mass M_n and the radius r_n(x) solves
// mu(B(x, r_n(x))) = M_n by monotone bisection on the exact ball measure.
// One decay-condition checker verifies monotonicity together with the
// two-sided envelope  c * n^-gamma  <=  a_n  <=  C * (log n)^-upsilon
// with fitted constants.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "reclab/common.hpp"
#include "reclab/measures.hpp"
#include "reclab/systems.hpp"

namespace reclab {

// ---------------------------------------------------------------------------
// Schedule generators.
// ---------------------------------------------------------------------------

struct GeneratorSpec {
    enum class Form { pow, logpow, table };

    Form form = Form::pow;
    double gamma = 0.5;    // pow:    scale * n^-gamma
    double upsilon = 1.0;  // logpow: scale * log(n+1)^-upsilon
    double scale = 1.0;
    std::vector<double> values;  // table

    double value(std::uint64_t n) const {
        if (n == 0) throw domain_error("schedule index starts at 1");
        switch (form) {
            case Form::pow:
                return scale * std::pow(static_cast<double>(n), -gamma);
            case Form::logpow:
                return scale * std::pow(std::log(static_cast<double>(n) + 1.0), -upsilon);
            case Form::table:
                if (n > values.size())
                    throw stream_length_error("tabulated schedule has " +
                                              std::to_string(values.size()) +
                                              " entries, index " + std::to_string(n) +
                                              " requested");
                return values[n - 1];
        }
        return 0.0;
    }
};

// Explicit radius schedules may be identically zero (degenerate but legal);
// implicit mass schedules must stay strictly positive, enforced by
// make_schedule below.
inline void validate(const GeneratorSpec& g) {
    switch (g.form) {
        case GeneratorSpec::Form::pow:
            if (!(g.scale >= 0.0) || !(g.gamma >= 0.0))
                throw validation_error("power schedule needs scale >= 0 and gamma >= 0");
            break;
        case GeneratorSpec::Form::logpow:
            if (!(g.scale >= 0.0) || !(g.upsilon >= 0.0))
                throw validation_error("log-power schedule needs scale >= 0 and upsilon >= 0");
            break;
        case GeneratorSpec::Form::table:
            if (g.values.empty()) throw validation_error("tabulated schedule is empty");
            for (double v : g.values)
                if (!(v >= 0.0)) throw validation_error("tabulated schedule must be nonnegative");
            break;
    }
}

inline bool strictly_positive(const GeneratorSpec& g) {
    if (g.form == GeneratorSpec::Form::table) {
        for (double v : g.values)
            if (!(v > 0.0)) return false;
        return true;
    }
    return g.scale > 0.0;
}

struct RadiusSchedule {
    enum class Mode { explicit_radius, implicit_mass };

    Mode mode = Mode::implicit_mass;
    GeneratorSpec gen;     // r_n (explicit) or M_n (implicit)
    double upsilon = 1.0;  // default exponent for the decay-condition check

    double value(std::uint64_t n) const { return gen.value(n); }
};

inline RadiusSchedule make_schedule(RadiusSchedule::Mode mode, GeneratorSpec gen,
                                    double upsilon = 1.0) {
    validate(gen);
    if (mode == RadiusSchedule::Mode::implicit_mass && !strictly_positive(gen))
        throw validation_error("implicit schedules need strictly positive ball masses");
    RadiusSchedule s;
    s.mode = mode;
    s.gen = std::move(gen);
    s.upsilon = upsilon;
    return s;
}

inline RadiusSchedule implicit_pow_schedule(double gamma, double scale = 1.0) {
    GeneratorSpec g;
    g.form = GeneratorSpec::Form::pow;
    g.gamma = gamma;
    g.scale = scale;
    return make_schedule(RadiusSchedule::Mode::implicit_mass, g);
}

inline RadiusSchedule explicit_pow_schedule(double gamma, double scale) {
    GeneratorSpec g;
    g.form = GeneratorSpec::Form::pow;
    g.gamma = gamma;
    g.scale = scale;
    return make_schedule(RadiusSchedule::Mode::explicit_radius, g);
}

// ---------------------------------------------------------------------------
// Decay condition: monotone nonincreasing and sandwiched between a power law
// and a log power.
// ---------------------------------------------------------------------------

struct ConditionSReport {
    bool ok = false;
    bool monotone_ok = false;
    std::uint64_t first_violation = 0;  // 1-based index; 0 = none
    double c_lower = 0.0;               // min_n a_n * n^gamma
    double c_upper = 0.0;               // max_{n>=2} a_n * (log n)^upsilon
    double gamma = 0.0;
    double upsilon = 0.0;
    std::uint64_t n_max = 0;
};

inline ConditionSReport check_condition_S(const RadiusSchedule& sched, double gamma,
                                          double upsilon, std::uint64_t n_max) {
    if (n_max < 2) throw validation_error("decay condition check needs n_max >= 2");
    ConditionSReport rep;
    rep.gamma = gamma;
    rep.upsilon = upsilon;
    rep.n_max = n_max;
    rep.monotone_ok = true;
    rep.c_lower = std::numeric_limits<double>::infinity();
    double prev = sched.value(1);
    rep.c_lower = std::min(rep.c_lower, prev);  // n = 1: a_1 * 1^gamma
    for (std::uint64_t n = 2; n <= n_max; ++n) {
        const double a = sched.value(n);
        if (rep.monotone_ok && a > prev + 1e-15) {
            rep.monotone_ok = false;
            rep.first_violation = n;
        }
        rep.c_lower = std::min(rep.c_lower, a * std::pow(static_cast<double>(n), gamma));
        rep.c_upper = std::max(rep.c_upper, a * std::pow(std::log(static_cast<double>(n)), upsilon));
        prev = a;
    }
    rep.ok = rep.monotone_ok && rep.c_lower > 0.0 && std::isfinite(rep.c_upper);
    return rep;
}

// ---------------------------------------------------------------------------
// Implicit radii: solve mu(B(x,r)) = M.
// ---------------------------------------------------------------------------

inline double max_ball_radius(const DensityMeasure& m) {
    // Circle balls wrap at r = 1/2 (mass 1); interval balls exhaust [0,1] by
    // r = 1; torus discs are supported up to the injectivity radius.
    switch (m.space) {
        case Space::circle: return 0.5;
        case Space::interval: return 1.0;
        case Space::torus: return 0.5;
    }
    return 0.5;
}

inline double implicit_radius(const DensityMeasure& m, const MapSystem& s, const Point& x,
                              double M) {
    check_compat(m, s);
    if (!(M > 0.0)) throw domain_error("implicit radius needs target mass M > 0");
    constexpr double tol = 1e-12;
    const double rmax = max_ball_radius(m);
    const double top = ball_measure(m, s, x, rmax);
    if (M > top + tol)
        throw infeasible_error("target ball mass " + std::to_string(M) +
                               " exceeds the largest admissible ball (" +
                               std::to_string(top) + ")");
    if (M >= top - tol) return rmax;
    double lo = 0.0, hi = rmax;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double v = ball_measure(m, s, x, mid);
        if (std::abs(v - M) <= tol) return mid;
        if (v < M) lo = mid;
        else hi = mid;
    }
    throw error("implicit radius bisection failed to converge");
}

struct RadiusField {
    std::vector<Point> points;
    std::vector<double> r;
    double lipschitz_ratio = 0.0;  // max |r(x)-r(y)| / d(x,y) over sampled pairs
};

inline RadiusField radius_field(const DensityMeasure& m, const MapSystem& s, double M,
                                std::span<const Point> points) {
    RadiusField field;
    field.points.assign(points.begin(), points.end());
    field.r.reserve(points.size());
    for (const Point& x : points) {
        try {
            field.r.push_back(implicit_radius(m, s, x, M));
        } catch (const infeasible_error& e) {
            throw infeasible_error(std::string(e.what()) + " (at x = " +
                                   std::to_string(x.coord()) + ")");
        }
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            const double d = distance(s, points[i], points[j]);
            if (d < 1e-15) continue;
            field.lipschitz_ratio =
                std::max(field.lipschitz_ratio, std::abs(field.r[i] - field.r[j]) / d);
        }
    }
    return field;
}

// ---------------------------------------------------------------------------
// JSON wire format.
// ---------------------------------------------------------------------------

inline json to_json(const GeneratorSpec& g) {
    json j;
    switch (g.form) {
        case GeneratorSpec::Form::pow:
            j["form"] = "pow";
            j["gamma"] = g.gamma;
            j["scale"] = g.scale;
            break;
        case GeneratorSpec::Form::logpow:
            j["form"] = "logpow";
            j["upsilon"] = g.upsilon;
            j["scale"] = g.scale;
            break;
        case GeneratorSpec::Form::table:
            j["form"] = "table";
            j["values"] = g.values;
            break;
    }
    return j;
}

inline GeneratorSpec generator_from_json(const json& j) {
    GeneratorSpec g;
    const std::string form = j.value("form", "pow");
    if (form == "pow") {
        g.form = GeneratorSpec::Form::pow;
        g.gamma = j.value("gamma", 0.5);
        g.scale = j.value("scale", 1.0);
    } else if (form == "logpow") {
        g.form = GeneratorSpec::Form::logpow;
        g.upsilon = j.value("upsilon", 1.0);
        g.scale = j.value("scale", 1.0);
    } else if (form == "table") {
        g.form = GeneratorSpec::Form::table;
        g.values = j.at("values").get<std::vector<double>>();
    } else {
        throw validation_error("unknown schedule form: " + form);
    }
    validate(g);
    return g;
}

inline json to_json(const RadiusSchedule& s) {
    json j;
    j["mode"] = s.mode == RadiusSchedule::Mode::implicit_mass ? "implicit" : "explicit";
    j[s.mode == RadiusSchedule::Mode::implicit_mass ? "M" : "r"] = to_json(s.gen);
    j["upsilon"] = s.upsilon;
    return j;
}

inline RadiusSchedule schedule_from_json(const json& j) {
    const std::string mode = j.value("mode", "implicit");
    RadiusSchedule s;
    if (mode == "implicit") {
        s.mode = RadiusSchedule::Mode::implicit_mass;
        s.gen = generator_from_json(j.at("M"));
    } else if (mode == "explicit") {
        s.mode = RadiusSchedule::Mode::explicit_radius;
        s.gen = generator_from_json(j.at("r"));
    } else {
        throw validation_error("unknown schedule mode: " + mode);
    }
    s.upsilon = j.value("upsilon", 1.0);
    return s;
}

}  // namespace reclab
