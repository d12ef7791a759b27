#pragma once

// Limit-law evaluators and empirical-distribution comparisons.  Every law
// here is a finite mixture over the pieces of a piecewise-constant density
// (or an explicit variance table), so characteristic functions, densities,
// CDFs, and Poisson pmfs are exact finite sums -- no quadrature enters.
//
//   averaged Gaussian:  CF(t) = Integral exp(-h(x) t^2 / (2 mu(h))) dmu(x)
//   averaged Poisson:   P(k)  = Integral (tau h)^k e^{-tau h} / k! dmu
//                             = Integral tau^k h^{k+1} e^{-tau h} / k! dm
//
// with mu(h) = Integral h dmu = Integral h^2 dm.  The density remark's
// literal (unnormalized) variance profile is available behind a flag; the
// normalized form is the one consistent with the characteristic function.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reclab/common.hpp"
#include "reclab/measures.hpp"

namespace reclab {

// Mixture components (weight, variance): weights are the mu-masses of the
// density pieces, variances are h_i / mu(h) (or the literal h_i).
inline std::vector<std::pair<double, double>> gaussian_mixture_components(
    const DensityMeasure& h, bool literal_variance = false) {
    double mu_h = 0.0;
    for (const Piece& p : h.pieces) mu_h += p.h * p.h * (p.hi - p.lo);
    std::vector<std::pair<double, double>> out;
    out.reserve(h.pieces.size());
    for (const Piece& p : h.pieces) {
        const double w = p.h * (p.hi - p.lo);
        if (w <= 0.0) continue;
        out.emplace_back(w, literal_variance ? p.h : p.h / mu_h);
    }
    return out;
}

inline double averaged_gaussian_charfn(const DensityMeasure& h, double t) {
    kahan_sum acc;
    for (const auto& [w, v] : gaussian_mixture_components(h))
        acc.add(w * std::exp(-0.5 * v * t * t));
    return acc.value();
}

inline double averaged_gaussian_density(const DensityMeasure& h, double t,
                                        bool literal_remark_form = false) {
    if (!(h.density_min() > 0.0))
        throw validation_error("averaged Gaussian density needs h bounded away from zero");
    kahan_sum acc;
    for (const auto& [w, v] : gaussian_mixture_components(h, literal_remark_form))
        acc.add(w / std::sqrt(v) * normal_pdf(t / std::sqrt(v)));
    return acc.value();
}

inline double averaged_poisson_pmf(const DensityMeasure& h, double tau, std::uint64_t k) {
    if (!(tau > 0.0)) throw domain_error("averaged Poisson needs tau > 0");
    kahan_sum acc;
    for (const Piece& p : h.pieces) {
        if (p.h <= 0.0) continue;
        // tau^k h^{k+1} e^{-tau h} / k! via logs to dodge overflow at large k.
        const double lam = tau * p.h;
        double log_term = static_cast<double>(k) * std::log(lam) - lam - std::lgamma(k + 1.0);
        acc.add(p.h * (p.hi - p.lo) * std::exp(log_term));
    }
    return acc.value();
}

// ---------------------------------------------------------------------------
// Limit laws.
// ---------------------------------------------------------------------------

struct LimitLaw {
    enum class Kind {
        standard_normal,
        averaged_gaussian,
        averaged_poisson,
        variance_profile_gaussian,
    };

    Kind kind = Kind::standard_normal;
    DensityMeasure h;  // averaged kinds
    double tau = 1.0;  // averaged Poisson
    bool literal_remark_form = false;
    std::vector<std::pair<double, double>> profile;  // (weight, variance)

    bool continuous() const { return kind != Kind::averaged_poisson; }

    std::vector<std::pair<double, double>> components() const {
        switch (kind) {
            case Kind::standard_normal: return {{1.0, 1.0}};
            case Kind::averaged_gaussian: return gaussian_mixture_components(h);
            case Kind::variance_profile_gaussian: return profile;
            case Kind::averaged_poisson:
                throw domain_error("averaged Poisson has no Gaussian components");
        }
        return {};
    }

    double cdf(double t) const {
        if (kind == Kind::averaged_poisson) {
            if (t < 0.0) return 0.0;
            kahan_sum acc;
            const auto kmax = static_cast<std::uint64_t>(std::floor(t));
            for (std::uint64_t k = 0; k <= kmax; ++k) acc.add(averaged_poisson_pmf(h, tau, k));
            return std::min(1.0, acc.value());
        }
        kahan_sum acc;
        for (const auto& [w, v] : components()) acc.add(w * normal_cdf(t / std::sqrt(v)));
        return acc.value();
    }

    // All laws here are symmetric (Gaussian mixtures) or evaluated on the
    // real axis via their real characteristic function.
    double charfn(double t) const {
        if (kind == Kind::averaged_poisson)
            throw domain_error("use pmf for the averaged Poisson law");
        kahan_sum acc;
        for (const auto& [w, v] : components()) acc.add(w * std::exp(-0.5 * v * t * t));
        return acc.value();
    }

    double density(double t) const {
        if (kind == Kind::averaged_poisson)
            throw domain_error("averaged Poisson is discrete");
        if (kind == Kind::averaged_gaussian)
            return averaged_gaussian_density(h, t, literal_remark_form);
        kahan_sum acc;
        for (const auto& [w, v] : components())
            acc.add(w / std::sqrt(v) * normal_pdf(t / std::sqrt(v)));
        return acc.value();
    }

    double pmf(std::uint64_t k) const {
        if (kind != Kind::averaged_poisson)
            throw domain_error("pmf is defined for the averaged Poisson law only");
        return averaged_poisson_pmf(h, tau, k);
    }
};

inline LimitLaw make_standard_normal() { return {}; }

inline LimitLaw make_averaged_gaussian(DensityMeasure h, bool literal_remark_form = false) {
    LimitLaw law;
    law.kind = LimitLaw::Kind::averaged_gaussian;
    law.h = std::move(h);
    law.literal_remark_form = literal_remark_form;
    return law;
}

inline LimitLaw make_averaged_poisson(DensityMeasure h, double tau) {
    if (!(tau > 0.0)) throw domain_error("averaged Poisson needs tau > 0");
    LimitLaw law;
    law.kind = LimitLaw::Kind::averaged_poisson;
    law.h = std::move(h);
    law.tau = tau;
    return law;
}

inline LimitLaw make_variance_profile_gaussian(std::vector<std::pair<double, double>> profile) {
    double total = 0.0;
    for (const auto& [w, v] : profile) {
        if (!(w >= 0.0) || !(v > 0.0))
            throw validation_error("variance profile entries need weight >= 0, variance > 0");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw validation_error("variance profile weights must sum to 1");
    LimitLaw law;
    law.kind = LimitLaw::Kind::variance_profile_gaussian;
    law.profile = std::move(profile);
    return law;
}

// ---------------------------------------------------------------------------
// Empirical distributions and comparisons.
// ---------------------------------------------------------------------------

struct EmpiricalDistribution {
    std::vector<double> values;  // sorted ascending

    static EmpiricalDistribution from_samples(std::vector<double> v) {
        if (v.empty()) throw validation_error("empirical distribution needs >= 1 sample");
        std::sort(v.begin(), v.end());
        EmpiricalDistribution e;
        e.values = std::move(v);
        return e;
    }

    std::size_t size() const { return values.size(); }

    double cdf(double t) const {
        const auto it = std::upper_bound(values.begin(), values.end(), t);
        return static_cast<double>(it - values.begin()) / static_cast<double>(values.size());
    }
};

// sup_x |F_emp(x) - F(x)|, attained at a sample point from one side or the
// other (the law CDF is continuous for every law we compare this way).
inline double ks_statistic(const EmpiricalDistribution& emp, const LimitLaw& law) {
    if (emp.values.empty()) throw validation_error("empty empirical distribution");
    const auto n = static_cast<double>(emp.values.size());
    double d = 0.0;
    for (std::size_t i = 0; i < emp.values.size(); ++i) {
        const double f = law.cdf(emp.values[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    }
    return d;
}

inline std::complex<double> empirical_charfn(const EmpiricalDistribution& emp, double t) {
    if (emp.values.empty()) throw validation_error("empty empirical distribution");
    kahan_sum re, im;
    for (double v : emp.values) {
        re.add(std::cos(t * v));
        im.add(std::sin(t * v));
    }
    const auto n = static_cast<double>(emp.values.size());
    return {re.value() / n, im.value() / n};
}

// Total-variation distance between an empirical count law and a discrete
// limit law: 0.5 * Sum_k |p_emp(k) - p(k)|, with the law's tail beyond the
// largest observed count folded in exactly.
inline double tv_distance_counts(std::span<const std::uint64_t> counts, const LimitLaw& law) {
    if (counts.empty()) throw validation_error("empty count sample");
    std::uint64_t kmax = 0;
    for (std::uint64_t c : counts) kmax = std::max(kmax, c);
    std::vector<double> emp(kmax + 1, 0.0);
    for (std::uint64_t c : counts) emp[c] += 1.0;
    for (double& e : emp) e /= static_cast<double>(counts.size());
    kahan_sum diff, head;
    for (std::uint64_t k = 0; k <= kmax; ++k) {
        const double p = law.pmf(k);
        diff.add(std::abs(emp[k] - p));
        head.add(p);
    }
    const double tail = std::max(0.0, 1.0 - head.value());
    return 0.5 * (diff.value() + tail);
}

// ---------------------------------------------------------------------------
// JSON wire format.
// ---------------------------------------------------------------------------

inline json to_json(const LimitLaw& law) {
    json j;
    switch (law.kind) {
        case LimitLaw::Kind::standard_normal:
            j["kind"] = "standard-normal";
            break;
        case LimitLaw::Kind::averaged_gaussian:
            j["kind"] = "averaged-gaussian";
            j["h"] = to_json(law.h);
            j["literal_remark_form"] = law.literal_remark_form;
            break;
        case LimitLaw::Kind::averaged_poisson:
            j["kind"] = "averaged-poisson";
            j["h"] = to_json(law.h);
            j["tau"] = law.tau;
            break;
        case LimitLaw::Kind::variance_profile_gaussian: {
            j["kind"] = "variance-profile-gaussian";
            json arr = json::array();
            for (const auto& [w, v] : law.profile) arr.push_back({w, v});
            j["profile"] = arr;
            break;
        }
    }
    return j;
}

inline LimitLaw law_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "standard-normal") return make_standard_normal();
    if (kind == "averaged-gaussian")
        return make_averaged_gaussian(measure_from_json(j.at("h")),
                                      j.value("literal_remark_form", false));
    if (kind == "averaged-poisson")
        return make_averaged_poisson(measure_from_json(j.at("h")), j.at("tau").get<double>());
    if (kind == "variance-profile-gaussian") {
        std::vector<std::pair<double, double>> profile;
        for (const auto& row : j.at("profile"))
            profile.emplace_back(row.at(0).get<double>(), row.at(1).get<double>());
        return make_variance_profile_gaussian(std::move(profile));
    }
    throw validation_error("unknown limit-law kind: " + kind);
}

}  // namespace reclab
