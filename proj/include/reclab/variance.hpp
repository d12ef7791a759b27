#pragma once

// Monte Carlo estimation of the variance sequences attached to recurrence and
// shrinking-target sums:
//
//   sigma2_recurrence  Var of Sum_k 1{d(T^k x, x) < r_k(x)}        (implicit radii)
//   s2_target          Var of Sum_k 1{d(T^k x, y) < r_k(y)}        (implicit radii at y)
//   sigma2_hat         Var of Sum_k [1{d(T^k x, x) < r_k} - mu(B(x, r_k))]   (explicit)
//   s2_hat_target      Var of Sum_k 1{d(T^k x, y) < r_k}                     (explicit)
//
// plus the ratio report (variance over cumulative mass, and the distribution
// of s_n^2(y)/sigma_n^2 over the target y) and the L1 profile distance to
// sqrt(h/mu(h)).  Centering constants that do not depend on the sampled
// initial point drop out of variances and are not subtracted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "reclab/common.hpp"
#include "reclab/hitstats.hpp"
#include "reclab/measures.hpp"
#include "reclab/radii.hpp"
#include "reclab/rng.hpp"
#include "reclab/systems.hpp"

namespace reclab {

enum class VarKind { sigma2_recurrence, s2_target, sigma2_hat, s2_hat_target };

inline std::string to_string(VarKind k) {
    switch (k) {
        case VarKind::sigma2_recurrence: return "sigma2_recurrence";
        case VarKind::s2_target: return "s2_target";
        case VarKind::sigma2_hat: return "sigma2_hat";
        case VarKind::s2_hat_target: return "s2_hat_target";
    }
    return "?";
}

inline bool is_target_kind(VarKind k) {
    return k == VarKind::s2_target || k == VarKind::s2_hat_target;
}

inline bool is_explicit_kind(VarKind k) {
    return k == VarKind::sigma2_hat || k == VarKind::s2_hat_target;
}

struct VarianceEstimate {
    VarKind kind = VarKind::sigma2_recurrence;
    std::uint64_t n = 0;
    double estimate = 0.0;
    double se = 0.0;
    std::size_t samples = 0;  // samples actually used
    std::size_t skips = 0;    // infeasible initial points skipped
};

namespace detail {

// Implicit radii depend on the ball center only through mu(B(center, r)); on
// the circle or torus with uniform density that dependence vanishes, so one
// solve per step serves every sampled center.
inline bool center_free_radii(const DensityMeasure& m) {
    return (m.space == Space::circle && m.is_uniform()) || m.space == Space::torus;
}

inline Point generic_center(const DensityMeasure& m) {
    return m.space == Space::torus ? make_point2(0.25, 0.25) : make_point(0.25);
}

// Centered hit sum along one orbit, recorded at each checkpoint of `grid`
// (grid strictly increasing).  `center` is the ball center (the initial point
// itself for recurrence); when `subtract_center_mass` is set the per-step
// ball mass at the center is subtracted (the explicit-radius recurrence
// centering, which varies with the sampled point).
inline void centered_checkpoint_sums(const MapSystem& sys, const DensityMeasure& m,
                                     const Point& x0, const Point& center,
                                     std::span<const double> radii,
                                     std::span<const std::uint64_t> grid,
                                     bool subtract_center_mass, std::span<double> out) {
    const std::uint64_t n_max = grid.back();
    const double cc = sys.kind == MapKind::torus_linear ? 0.0 : center.coord();
    const double ccx = center.x, ccy = center.y;
    double hits = 0.0;
    kahan_sum mass;
    Point p = x0;
    std::size_t gi = 0;
    for (std::uint64_t k = 1; k <= n_max; ++k) {
        p = iterate(sys, p, 1);
        const double r = radii[k - 1];
        double d;
        switch (m.space) {
            case Space::circle: {
                double u = std::abs(p.coord() - cc);
                d = std::min(u, 1.0 - u);
                break;
            }
            case Space::interval:
                d = std::abs(p.x - cc);
                break;
            default: {
                const double dx = circle_dist(p.x, ccx);
                const double dy = circle_dist(p.y, ccy);
                d = std::sqrt(dx * dx + dy * dy);
                break;
            }
        }
        if (d < r) hits += 1.0;
        if (subtract_center_mass) mass.add(ball_measure(m, sys, center, r));
        if (k == grid[gi]) {
            out[gi] = hits - mass.value();
            ++gi;
        }
    }
}

inline void check_grid(std::span<const std::uint64_t> grid) {
    if (grid.empty()) throw validation_error("empty n grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] == 0) throw validation_error("n grid entries start at 1");
        if (i > 0 && grid[i] <= grid[i - 1])
            throw validation_error("n grid must be strictly increasing");
    }
}

}  // namespace detail

// Variance estimates at every checkpoint of an increasing n grid, reusing one
// orbit per sampled point.  Infeasible initial points (implicit radius has no
// solution there) are skipped and counted.
inline std::vector<VarianceEstimate> estimate_variance_grid(
    VarKind kind, const MapSystem& sys, const DensityMeasure& m, const RadiusSchedule& sched,
    std::span<const std::uint64_t> n_grid, std::size_t samples, Rng& rng,
    const Point* y = nullptr) {
    detail::check_grid(n_grid);
    if (samples < 2) throw validation_error("variance estimation needs >= 2 samples");
    if (is_target_kind(kind) && y == nullptr)
        throw validation_error("target variance kinds need the target point y");
    const bool want_explicit = is_explicit_kind(kind);
    const bool have_explicit = sched.mode == RadiusSchedule::Mode::explicit_radius;
    if (want_explicit != have_explicit)
        throw validation_error(std::string("estimand ") + to_string(kind) + " takes an " +
                               (want_explicit ? "explicit" : "implicit") + " schedule");
    const std::uint64_t n_max = n_grid.back();
    const bool subtract = kind == VarKind::sigma2_hat;

    // Radii shared across samples whenever they do not depend on the center.
    std::optional<std::vector<double>> shared;
    if (is_target_kind(kind)) {
        shared = radii_at(m, sys, sched, *y, n_max);
    } else if (have_explicit || detail::center_free_radii(m)) {
        shared = radii_at(m, sys, sched, detail::generic_center(m), n_max);
    }

    const std::vector<Point> xs = sample_orbit_points(sys, m, rng, samples);
    std::vector<std::vector<double>> sums(n_grid.size());
    for (auto& v : sums) v.reserve(samples);
    std::vector<double> buf(n_grid.size());
    std::size_t skips = 0;
    for (const Point& x : xs) {
        const Point& center = is_target_kind(kind) ? *y : x;
        if (shared) {
            detail::centered_checkpoint_sums(sys, m, x, center, *shared, n_grid, subtract, buf);
        } else {
            std::vector<double> radii;
            try {
                radii = radii_at(m, sys, sched, center, n_max);
            } catch (const infeasible_error&) {
                ++skips;
                continue;
            }
            detail::centered_checkpoint_sums(sys, m, x, center, radii, n_grid, subtract, buf);
        }
        for (std::size_t gi = 0; gi < n_grid.size(); ++gi) sums[gi].push_back(buf[gi]);
    }
    if (sums[0].size() < 2)
        throw infeasible_error("variance estimation: fewer than 2 feasible sampled points");

    std::vector<VarianceEstimate> out(n_grid.size());
    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        out[gi].kind = kind;
        out[gi].n = n_grid[gi];
        out[gi].estimate = sample_variance(sums[gi]);
        out[gi].se = jackknife_variance_se(sums[gi]);
        out[gi].samples = sums[gi].size();
        out[gi].skips = skips;
    }
    return out;
}

inline VarianceEstimate estimate_variance(VarKind kind, const MapSystem& sys,
                                          const DensityMeasure& m, const RadiusSchedule& sched,
                                          std::uint64_t n, std::size_t samples, Rng& rng,
                                          const Point* y = nullptr) {
    const std::uint64_t grid[1] = {n};
    return estimate_variance_grid(kind, sys, m, sched, grid, samples, rng, y)[0];
}

// ---------------------------------------------------------------------------
// Ratio report.
// ---------------------------------------------------------------------------

struct VarianceRatioRow {
    std::uint64_t n = 0;
    VarianceEstimate sigma2;               // recurrence-sum variance
    double mass_cum = 0.0;                 // cumulative expected per-step mass
    double ratio = std::numeric_limits<double>::quiet_NaN();  // sigma2 / mass_cum
    double s2_ratio_mean = std::numeric_limits<double>::quiet_NaN();
    double s2_ratio_se = 0.0;
    std::vector<double> s2_ratio_samples;  // sorted per-target ratios
    bool degenerate = false;
};

struct VarianceRatioReport {
    std::vector<VarianceRatioRow> rows;
    std::size_t sigma_samples = 0;
    std::size_t outer_samples = 0;  // target points y
    std::size_t inner_samples = 0;  // initial points per y
};

inline VarianceRatioReport variance_ratio_report(const MapSystem& sys, const DensityMeasure& m,
                                                 const RadiusSchedule& sched,
                                                 std::span<const std::uint64_t> n_grid,
                                                 std::size_t samples, Rng& rng,
                                                 std::size_t outer = 100) {
    detail::check_grid(n_grid);
    const bool implicit = sched.mode == RadiusSchedule::Mode::implicit_mass;
    const VarKind var_kind = implicit ? VarKind::sigma2_recurrence : VarKind::sigma2_hat;
    const VarKind tgt_kind = implicit ? VarKind::s2_target : VarKind::s2_hat_target;

    VarianceRatioReport rep;
    rep.sigma_samples = samples;
    rep.outer_samples = outer;
    rep.inner_samples = std::max<std::size_t>(2, samples / std::max<std::size_t>(1, outer));

    const auto sigma = estimate_variance_grid(var_kind, sys, m, sched, n_grid, samples, rng);

    // Cumulative expected per-step masses: the schedule's own masses in
    // implicit mode, mean ball masses in explicit mode.
    std::vector<double> mass_cum(n_grid.size());
    {
        kahan_sum acc;
        std::size_t gi = 0;
        for (std::uint64_t k = 1; k <= n_grid.back(); ++k) {
            acc.add(implicit ? sched.value(k) : mean_ball_measure(m, sys, sched.value(k)));
            if (k == n_grid[gi]) mass_cum[gi++] = acc.value();
        }
    }

    // Per-target-point variances, one orbit batch per y.
    std::vector<std::vector<double>> ratios(n_grid.size());
    for (std::size_t oy = 0; oy < outer; ++oy) {
        const Point y = sample(m, rng, 1)[0];
        std::vector<VarianceEstimate> sy;
        try {
            sy = estimate_variance_grid(tgt_kind, sys, m, sched, n_grid, rep.inner_samples,
                                        rng, &y);
        } catch (const infeasible_error&) {
            continue;  // target with no admissible radii: skip this y
        }
        for (std::size_t gi = 0; gi < n_grid.size(); ++gi)
            if (sigma[gi].estimate > 0.0)
                ratios[gi].push_back(sy[gi].estimate / sigma[gi].estimate);
    }

    rep.rows.resize(n_grid.size());
    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        VarianceRatioRow& row = rep.rows[gi];
        row.n = n_grid[gi];
        row.sigma2 = sigma[gi];
        row.mass_cum = mass_cum[gi];
        row.degenerate = !(sigma[gi].estimate > 0.0) || !(mass_cum[gi] > 0.0);
        if (!row.degenerate) {
            row.ratio = sigma[gi].estimate / mass_cum[gi];
            if (!ratios[gi].empty()) {
                row.s2_ratio_mean = sample_mean(ratios[gi]);
                row.s2_ratio_se = ratios[gi].size() > 1
                                      ? std::sqrt(sample_variance(ratios[gi]) /
                                                  static_cast<double>(ratios[gi].size()))
                                      : 0.0;
                row.s2_ratio_samples = ratios[gi];
                std::sort(row.s2_ratio_samples.begin(), row.s2_ratio_samples.end());
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// L1 distance of the target standard-deviation profile to sqrt(h / mu(h)).
// ---------------------------------------------------------------------------

// mu(h) = Integral of h dmu = Integral of h^2 dm, exact for piecewise h.
inline double density_second_moment(const DensityMeasure& m) {
    kahan_sum acc;
    for (const Piece& p : m.pieces) acc.add(p.h * p.h * (p.hi - p.lo));
    return acc.value();
}

inline double l1_profile_check(const MapSystem& sys, const DensityMeasure& m,
                               const RadiusSchedule& sched, std::uint64_t n,
                               std::size_t samples, Rng& rng, std::size_t outer = 100) {
    if (sched.mode != RadiusSchedule::Mode::explicit_radius)
        throw validation_error("profile check compares explicit-radius quantities");
    if (!(m.density_min() > 0.0))
        throw validation_error("profile check needs a density bounded away from zero");
    const double mu_h = density_second_moment(m);

    const auto sigma = estimate_variance(VarKind::sigma2_hat, sys, m, sched, n,
                                         std::max<std::size_t>(4, 2 * samples), rng);
    if (!(sigma.estimate > 0.0))
        throw infeasible_error("hat variance is degenerate; profile undefined");
    const double sigma_sd = std::sqrt(sigma.estimate);

    kahan_sum acc;
    for (std::size_t oy = 0; oy < outer; ++oy) {
        const Point y = sample(m, rng, 1)[0];
        const auto sy =
            estimate_variance(VarKind::s2_hat_target, sys, m, sched, n, samples, rng, &y);
        const double profile = std::sqrt(sy.estimate) / sigma_sd;
        const double target = std::sqrt(m.density_at(y.coord()) / mu_h);
        acc.add(std::abs(profile - target));
    }
    return acc.value() / static_cast<double>(outer);
}

}  // namespace reclab
