#pragma once

// Experiment orchestration: JSON configs, deterministic execution, reports.
//
// Determinism contract: every experiment decomposes into pure per-point tasks
// whose randomness comes only from derive_substream(seed, point_index), with
// results written into preallocated slots and reduced in index order.  The
// serialized report and CSV bytes therefore depend on the config alone, never
// on the worker count or scheduling.  Wall time is measured and carried on the
// in-memory report for console display but deliberately kept out of the
// serialized bytes.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reclab/common.hpp"
#include "reclab/hitstats.hpp"
#include "reclab/limits.hpp"
#include "reclab/measures.hpp"
#include "reclab/radii.hpp"
#include "reclab/rng.hpp"
#include "reclab/symbolic.hpp"
#include "reclab/systems.hpp"
#include "reclab/transfer.hpp"
#include "reclab/variance.hpp"

namespace reclab {

enum class ExperimentKind {
    clt_recurrence,
    clt_target,
    variance_report,
    short_returns,
    poisson_count,
    transfer_diagnostics,
    sinai_check,
};

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::clt_recurrence: return "clt-recurrence";
        case ExperimentKind::clt_target: return "clt-target";
        case ExperimentKind::variance_report: return "variance-report";
        case ExperimentKind::short_returns: return "short-returns";
        case ExperimentKind::poisson_count: return "poisson-count";
        case ExperimentKind::transfer_diagnostics: return "transfer-diagnostics";
        case ExperimentKind::sinai_check: return "sinai-check";
    }
    return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
    for (ExperimentKind k :
         {ExperimentKind::clt_recurrence, ExperimentKind::clt_target,
          ExperimentKind::variance_report, ExperimentKind::short_returns,
          ExperimentKind::poisson_count, ExperimentKind::transfer_diagnostics,
          ExperimentKind::sinai_check})
        if (to_string(k) == s) return k;
    throw validation_error("unknown experiment kind: \"" + s +
                           "\" (expected clt-recurrence | clt-target | variance-report | "
                           "short-returns | poisson-count | transfer-diagnostics | sinai-check)");
}

// ---------------------------------------------------------------------------
// Config.
// ---------------------------------------------------------------------------

// Named shortcuts keep fixture files readable; full descriptors pass through.
inline MapSystem resolve_system(const json& j) {
    if (j.is_string() || (j.is_object() && j.contains("name"))) {
        const std::string name = j.is_string() ? j.get<std::string>()
                                               : j.at("name").get<std::string>();
        if (name == "doubling") return make_doubling();
        if (name == "two-slope") return make_two_slope();
        if (name == "cat") return make_cat_map();
        if (name == "golden-mean-sft") return make_sft_handle(make_golden_mean());
        throw validation_error("unknown system name: " + name);
    }
    return system_from_json(j);
}

inline DensityMeasure resolve_measure(const json& j, const MapSystem& sys) {
    if (j.is_string() || (j.is_object() && j.contains("name"))) {
        const std::string name = j.is_string() ? j.get<std::string>()
                                               : j.at("name").get<std::string>();
        if (name == "lebesgue") {
            switch (space_of(sys.kind)) {
                case Space::circle: return lebesgue_circle();
                case Space::interval: return lebesgue_interval();
                case Space::torus: return lebesgue_torus();
            }
        }
        if (name == "two-slope-invariant") return two_slope_invariant();
        throw validation_error("unknown measure name: " + name);
    }
    return measure_from_json(j);
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::clt_recurrence;
    std::string label;
    std::uint64_t seed = 0;
    std::uint64_t n = 0;
    std::vector<std::uint64_t> n_grid;  // variance-report checkpoints (else {n})
    std::uint64_t samples = 0;
    json system;    // resolved descriptor for the echo
    json measure;   // empty for sinai-check
    json schedule;  // empty where no schedule applies
    std::map<std::string, double> tolerances;
    json params = json::object();
    std::string out_dir;

    MapSystem sys;
    DensityMeasure meas;
    std::optional<RadiusSchedule> sched;
};

namespace detail {

inline bool needs_measure(ExperimentKind k) { return k != ExperimentKind::sinai_check; }

inline bool needs_schedule(ExperimentKind k) {
    return k == ExperimentKind::clt_recurrence || k == ExperimentKind::clt_target ||
           k == ExperimentKind::variance_report;
}

inline bool needs_n(ExperimentKind k) {
    return k == ExperimentKind::clt_recurrence || k == ExperimentKind::clt_target ||
           k == ExperimentKind::poisson_count;
}

inline bool needs_samples(ExperimentKind k) {
    return k != ExperimentKind::transfer_diagnostics && k != ExperimentKind::sinai_check;
}

}  // namespace detail

// Parses and fully validates a config, collecting every offending field into
// one structured error instead of stopping at the first.
inline ExperimentConfig config_from_json(const json& j) {
    std::vector<std::string> problems;
    auto complain = [&](const std::string& field, const std::string& what) {
        problems.push_back("field \"" + field + "\": " + what);
    };

    ExperimentConfig cfg;
    if (!j.is_object()) throw validation_error("invalid config: top level must be a JSON object");

    if (!j.contains("kind") || !j.at("kind").is_string()) {
        complain("kind", "required string");
    } else {
        try {
            cfg.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
        } catch (const validation_error& e) {
            complain("kind", e.what());
        }
    }
    cfg.label = j.value("label", std::string{});
    cfg.out_dir = j.value("out", std::string{});

    if (!j.contains("seed") || !j.at("seed").is_number_unsigned()) {
        complain("seed", "required nonnegative integer (no wall-clock seeding)");
    } else {
        cfg.seed = j.at("seed").get<std::uint64_t>();
    }

    if (j.contains("n")) {
        if (!j.at("n").is_number_unsigned() || j.at("n").get<std::uint64_t>() == 0)
            complain("n", "must be a positive integer");
        else
            cfg.n = j.at("n").get<std::uint64_t>();
    }
    if (j.contains("n_grid")) {
        if (!j.at("n_grid").is_array() || j.at("n_grid").empty()) {
            complain("n_grid", "must be a nonempty array of positive integers");
        } else {
            for (const auto& v : j.at("n_grid")) {
                if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0) {
                    complain("n_grid", "entries must be positive integers");
                    break;
                }
                cfg.n_grid.push_back(v.get<std::uint64_t>());
            }
        }
    }
    if (j.contains("samples")) {
        if (!j.at("samples").is_number_unsigned() || j.at("samples").get<std::uint64_t>() == 0)
            complain("samples", "must be a positive integer");
        else
            cfg.samples = j.at("samples").get<std::uint64_t>();
    }
    if (j.contains("tolerances")) {
        if (!j.at("tolerances").is_object()) {
            complain("tolerances", "must map metric names to numbers");
        } else {
            for (const auto& [k, v] : j.at("tolerances").items()) {
                if (!v.is_number())
                    complain("tolerances", "\"" + k + "\" is not a number");
                else
                    cfg.tolerances[k] = v.get<double>();
            }
        }
    }
    if (j.contains("params")) {
        if (!j.at("params").is_object())
            complain("params", "must be an object");
        else
            cfg.params = j.at("params");
    }

    // Descriptors.
    if (!j.contains("system")) {
        complain("system", "required");
    } else {
        try {
            cfg.sys = resolve_system(j.at("system"));
            cfg.system = to_json(cfg.sys);
        } catch (const error& e) {
            complain("system", e.what());
        }
    }
    if (detail::needs_measure(cfg.kind)) {
        if (!j.contains("measure")) {
            complain("measure", "required for this experiment kind");
        } else if (!problems.empty() && cfg.system.is_null()) {
            // cannot resolve "lebesgue" without a valid system; already reported
        } else {
            try {
                cfg.meas = resolve_measure(j.at("measure"), cfg.sys);
                cfg.measure = to_json(cfg.meas);
                check_compat(cfg.meas, cfg.sys);
            } catch (const error& e) {
                complain("measure", e.what());
            }
        }
    }
    if (detail::needs_schedule(cfg.kind)) {
        if (!j.contains("schedule")) {
            complain("schedule", "required for this experiment kind");
        } else {
            try {
                cfg.sched = schedule_from_json(j.at("schedule"));
                cfg.schedule = to_json(*cfg.sched);
            } catch (const error& e) {
                complain("schedule", e.what());
            }
        }
    }

    // Kind-specific requirements.
    if (detail::needs_n(cfg.kind) && cfg.n == 0) complain("n", "required for this experiment kind");
    if (cfg.kind == ExperimentKind::variance_report && cfg.n == 0 && cfg.n_grid.empty())
        complain("n", "variance-report needs n or n_grid");
    if (detail::needs_samples(cfg.kind) && cfg.samples == 0)
        complain("samples", "required for this experiment kind");
    if (cfg.kind == ExperimentKind::variance_report && cfg.samples == 1)
        complain("samples", "variance estimation needs >= 2");
    if (cfg.kind == ExperimentKind::short_returns && !cfg.params.contains("r"))
        complain("params.r", "short-returns needs a radius or list of radii");
    if (cfg.kind == ExperimentKind::sinai_check) {
        if (!cfg.system.is_null() && cfg.sys.kind != MapKind::sft_handle)
            complain("system", "sinai-check needs an sft system");
    }

    if (!problems.empty()) {
        std::string msg = "invalid config";
        for (const auto& p : problems) msg += "; " + p;
        throw validation_error(msg);
    }
    if (cfg.n_grid.empty() && cfg.n > 0) cfg.n_grid = {cfg.n};
    return cfg;
}

// Normalized echo: enough to reproduce the run byte-for-byte.
inline json config_echo(const ExperimentConfig& cfg) {
    json j;
    j["kind"] = to_string(cfg.kind);
    if (!cfg.label.empty()) j["label"] = cfg.label;
    j["seed"] = cfg.seed;
    if (cfg.n > 0) j["n"] = cfg.n;
    if (cfg.kind == ExperimentKind::variance_report) j["n_grid"] = cfg.n_grid;
    if (cfg.samples > 0) j["samples"] = cfg.samples;
    j["system"] = cfg.system;
    if (!cfg.measure.is_null()) j["measure"] = cfg.measure;
    if (cfg.sched) j["schedule"] = cfg.schedule;
    if (!cfg.tolerances.empty()) {
        json t = json::object();
        for (const auto& [k, v] : cfg.tolerances) t[k] = v;
        j["tolerances"] = t;
    }
    if (!cfg.params.empty()) j["params"] = cfg.params;
    return j;
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

struct MetricValue {
    std::string name;
    double value = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
    bool has_se = false;
    bool checked = false;  // a tolerance was declared for this metric
    double tolerance = 0.0;
    std::string comparison = "<=";
    bool pass = true;
};

struct RunReport {
    json config;                  // echo
    std::vector<MetricValue> metrics;
    bool pass = true;             // all tolerance-checked metrics pass
    double wall_seconds = 0.0;    // console-only; never serialized
    json summary;                 // the full serialized document
    std::vector<std::pair<std::string, std::string>> files;  // name -> contents
};

namespace detail {

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Declares a metric; when the config carries a tolerance under the same name
// the metric is checked (direction chosen by the pipeline, smaller-is-better
// by default) and contributes to the overall pass flag.
inline void add_metric(RunReport& rep, const ExperimentConfig& cfg, const std::string& name,
                       double value, std::optional<double> se = std::nullopt,
                       const std::string& comparison = "<=") {
    MetricValue m;
    m.name = name;
    m.value = value;
    if (se) {
        m.se = *se;
        m.has_se = true;
    }
    m.comparison = comparison;
    const auto it = cfg.tolerances.find(name);
    if (it != cfg.tolerances.end()) {
        m.checked = true;
        m.tolerance = it->second;
        m.pass = comparison == ">=" ? value >= m.tolerance : value <= m.tolerance;
        rep.pass = rep.pass && m.pass;
    }
    rep.metrics.push_back(std::move(m));
}

inline json metric_json(const MetricValue& m) {
    json j;
    j["name"] = m.name;
    j["value"] = std::isnan(m.value) ? json() : json(m.value);
    if (m.has_se) j["se"] = std::isnan(m.se) ? json() : json(m.se);
    if (m.checked) {
        j["tolerance"] = m.tolerance;
        j["comparison"] = m.comparison;
        j["pass"] = m.pass;
    }
    return j;
}

inline void finish_report(RunReport& rep, const ExperimentConfig& cfg) {
    json j;
    j["kind"] = to_string(cfg.kind);
    j["config"] = rep.config;
    json arr = json::array();
    for (const auto& m : rep.metrics) arr.push_back(metric_json(m));
    j["metrics"] = arr;
    j["pass"] = rep.pass;
    rep.summary = std::move(j);
}

// Index-slot parallel loop: worker count never changes results because task i
// only writes slot i and draws from substream i.
inline void parallel_for(std::size_t jobs, std::size_t count,
                         const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const std::size_t workers = std::min(jobs, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count || failed.load()) return;
                try {
                    fn(i);
                } catch (...) {
                    std::scoped_lock lk(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Substream index space: point tasks use 0..samples-1, auxiliary draws use
// indices from here up (derive_substream rejects >= 2^63, so both stay clear
// of each other and of the guard).
inline constexpr std::uint64_t kAuxStream = std::uint64_t{1} << 62;

inline Point draw_point(const ExperimentConfig& cfg, Rng& rng, bool bitstream) {
    return bitstream ? sample_bitstream(cfg.meas, rng, 1)[0] : sample(cfg.meas, rng, 1)[0];
}

inline bool want_bitstream(const ExperimentConfig& cfg) {
    const std::string repr = cfg.params.value("representation", std::string("auto"));
    const bool dyadic_uniform = cfg.sys.dyadic_shift() && cfg.meas.space == Space::circle &&
                                cfg.meas.is_uniform();
    if (repr == "auto") return dyadic_uniform;  // dyadic float orbits collapse; see sample_orbit_points
    if (repr == "float") return false;
    if (repr != "bitstream")
        throw validation_error(
            "params.representation must be \"auto\", \"float\", or \"bitstream\"");
    if (!dyadic_uniform)
        throw validation_error(
            "bitstream representation needs a dyadic circle map with the uniform measure");
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipelines.
// ---------------------------------------------------------------------------

namespace detail {

// Sum of (hit - expected mass) over the first n steps for each sampled
// initial point, self-normalized by the run's sample standard deviation.
inline void run_clt(const ExperimentConfig& cfg, std::size_t jobs, RunReport& rep) {
    const bool target_kind = cfg.kind == ExperimentKind::clt_target;
    const bool bitstream = want_bitstream(cfg);
    const std::uint64_t n = cfg.n;
    const std::size_t count = cfg.samples;
    const RadiusSchedule& sched = *cfg.sched;

    Point y = generic_center(cfg.meas);
    std::optional<std::vector<double>> shared;  // radii reused across points
    if (target_kind) {
        if (cfg.params.contains("target")) {
            const auto& t = cfg.params.at("target");
            if (t.is_number()) {
                y = make_point(t.get<double>());
            } else if (t.is_array() && t.size() == 2) {
                y = make_point2(t.at(0).get<double>(), t.at(1).get<double>());
            } else if (!(t.is_string() && t.get<std::string>() == "sample")) {
                throw validation_error("params.target must be a coordinate or \"sample\"");
            } else {
                Rng aux = derive_substream(cfg.seed, kAuxStream);
                y = sample(cfg.meas, aux, 1)[0];
            }
        } else {
            Rng aux = derive_substream(cfg.seed, kAuxStream);
            y = sample(cfg.meas, aux, 1)[0];
        }
        shared = radii_at(cfg.meas, cfg.sys, sched, y, n);
    } else if (sched.mode == RadiusSchedule::Mode::explicit_radius || center_free_radii(cfg.meas)) {
        shared = radii_at(cfg.meas, cfg.sys, sched, generic_center(cfg.meas), n);
    }

    std::vector<double> stat(count);
    parallel_for(jobs, count, [&](std::size_t i) {
        Rng rng = derive_substream(cfg.seed, i);
        const Point x = draw_point(cfg, rng, bitstream);
        HitSeries hs;
        if (target_kind) {
            hs = target_series(cfg.sys, cfg.meas, sched, y, x, n, *shared);
        } else if (shared) {
            hs = recurrence_series(cfg.sys, cfg.meas, sched, x, n, *shared);
        } else {
            hs = recurrence_series(cfg.sys, cfg.meas, sched, x, n);
        }
        stat[i] = hs.hits_cum.back() - hs.mass_cum.back();
    });

    const double mean = sample_mean(stat);
    const double sd = std::sqrt(sample_variance(stat));

    // Normalizer: the run's own sample SD (self-norming), or the deterministic
    // square root of the cumulative expected mass (the natural scale when the
    // limit is an averaged Gaussian rather than a single one).
    const std::string norm_kind = cfg.params.value("normalizer", std::string("sample-sd"));
    double norm = sd;
    if (norm_kind == "expected-mass") {
        kahan_sum acc;
        if (sched.mode == RadiusSchedule::Mode::implicit_mass) {
            for (std::uint64_t k = 1; k <= n; ++k) acc.add(sched.value(k));
        } else if (target_kind) {
            for (std::uint64_t k = 1; k <= n; ++k)
                acc.add(ball_measure(cfg.meas, cfg.sys, y, (*shared)[k - 1]));
        } else {
            for (std::uint64_t k = 1; k <= n; ++k)
                acc.add(mean_ball_measure(cfg.meas, cfg.sys, (*shared)[k - 1]));
        }
        norm = std::sqrt(acc.value());
    } else if (norm_kind != "sample-sd") {
        throw validation_error("params.normalizer must be \"sample-sd\" or \"expected-mass\"");
    }
    if (!(norm > 0.0)) throw infeasible_error("degenerate run: zero normalizer");
    std::vector<double> z(count);
    for (std::size_t i = 0; i < count; ++i) z[i] = stat[i] / norm;

    LimitLaw law;
    const std::string law_name = cfg.params.value("law", std::string("standard-normal"));
    if (law_name == "standard-normal") {
        law = make_standard_normal();
    } else if (law_name == "averaged-gaussian") {
        law = make_averaged_gaussian(cfg.meas, cfg.params.value("literal_variance", false));
    } else {
        throw validation_error("params.law must be \"standard-normal\" or \"averaged-gaussian\"");
    }

    const auto emp = EmpiricalDistribution::from_samples(z);
    const double ks = ks_statistic(emp, law);
    add_metric(rep, cfg, "ks", ks);
    add_metric(rep, cfg, "sample_mean", mean);
    add_metric(rep, cfg, "sample_sd", sd);
    add_metric(rep, cfg, "normalizer", norm);
    if (target_kind && cfg.meas.space != Space::torus)
        add_metric(rep, cfg, "target", y.coord());

    // Optional characteristic-function probes: for averaged limits the CF is
    // the natural comparison; each requested t yields |ECF(t) - CF(t)|.
    if (cfg.params.contains("charfn_t")) {
        for (const auto& tv : cfg.params.at("charfn_t")) {
            const double t = tv.get<double>();
            const auto cf = empirical_charfn(emp, t);
            const double model = law.charfn(t);
            add_metric(rep, cfg, "charfn_dev_t" + fmt_g(t),
                       std::hypot(cf.real() - model, cf.imag()));
        }
    }

    std::string csv = "point,stat,z\n";
    for (std::size_t i = 0; i < count; ++i)
        csv += std::to_string(i) + "," + fmt_g(stat[i]) + "," + fmt_g(z[i]) + "\n";
    rep.files.emplace_back("samples.csv", std::move(csv));
}

inline void run_variance_report(const ExperimentConfig& cfg, RunReport& rep) {
    const std::size_t outer = cfg.params.value("outer", std::uint64_t{100});
    Rng rng = derive_substream(cfg.seed, kAuxStream);
    const auto report = variance_ratio_report(cfg.sys, cfg.meas, *cfg.sched, cfg.n_grid,
                                              cfg.samples, rng, outer);

    double ratio_min = std::numeric_limits<double>::infinity();
    double ratio_max = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& row : report.rows) {
        if (row.degenerate) continue;
        any = true;
        ratio_min = std::min(ratio_min, row.ratio);
        ratio_max = std::max(ratio_max, row.ratio);
    }
    if (!any) throw infeasible_error("every checkpoint degenerate; no ratios to report");
    add_metric(rep, cfg, "ratio_min", ratio_min, std::nullopt, ">=");
    add_metric(rep, cfg, "ratio_max", ratio_max);
    const auto& last = report.rows.back();
    if (!last.degenerate && !std::isnan(last.s2_ratio_mean))
        add_metric(rep, cfg, "s2_dev", std::abs(last.s2_ratio_mean - 1.0), last.s2_ratio_se);

    if (cfg.params.value("profile", false)) {
        const std::size_t inner = cfg.params.value("profile_inner", std::uint64_t{150});
        const std::size_t prof_outer = cfg.params.value("profile_outer", std::uint64_t{100});
        Rng prof_rng = derive_substream(cfg.seed, kAuxStream + 1);
        const double l1 = l1_profile_check(cfg.sys, cfg.meas, *cfg.sched, cfg.n_grid.back(),
                                           inner, prof_rng, prof_outer);
        add_metric(rep, cfg, "profile_l1", l1);
    }

    std::string csv = "n,sigma2,sigma2_se,mass_cum,ratio,s2_ratio_mean,s2_ratio_se,degenerate\n";
    for (const auto& row : report.rows) {
        csv += std::to_string(row.n) + "," + fmt_g(row.sigma2.estimate) + "," +
               fmt_g(row.sigma2.se) + "," + fmt_g(row.mass_cum) + "," + fmt_g(row.ratio) + "," +
               fmt_g(row.s2_ratio_mean) + "," + fmt_g(row.s2_ratio_se) + "," +
               (row.degenerate ? "1" : "0") + "\n";
    }
    rep.files.emplace_back("variance.csv", std::move(csv));
}

inline void run_short_returns(const ExperimentConfig& cfg, std::size_t jobs, RunReport& rep) {
    std::vector<double> radii;
    const auto& rj = cfg.params.at("r");
    if (rj.is_number()) {
        radii.push_back(rj.get<double>());
    } else if (rj.is_array()) {
        for (const auto& v : rj) radii.push_back(v.get<double>());
    }
    if (radii.empty()) throw validation_error("params.r must be a radius or list of radii");
    std::vector<std::uint64_t> lags;
    if (cfg.params.contains("lags")) {
        for (const auto& v : cfg.params.at("lags")) lags.push_back(v.get<std::uint64_t>());
    } else {
        const auto max_lag = cfg.params.value("max_lag", std::uint64_t{10});
        for (std::uint64_t l = 1; l <= max_lag; ++l) lags.push_back(l);
    }
    const auto inner = cfg.params.value("inner_samples", std::uint64_t{512});

    std::vector<ShortReturns> rows(radii.size() * lags.size());
    parallel_for(jobs, rows.size(), [&](std::size_t i) {
        const double r = radii[i / lags.size()];
        const std::uint64_t l = lags[i % lags.size()];
        Rng rng = derive_substream(cfg.seed, i);
        rows[i] = short_returns(cfg.sys, cfg.meas, r, l, cfg.samples, rng, inner);
    });

    double bound_ratio_max = 0.0;
    double max_se = 0.0;
    for (const auto& row : rows) {
        const double cap = std::pow(2.0 * row.r, 1.5);
        if (cap > 0.0) bound_ratio_max = std::max(bound_ratio_max, row.overlap.value / cap);
        max_se = std::max(max_se, std::max(row.p_close.se, row.overlap.se));
    }
    add_metric(rep, cfg, "bound_ratio_max", bound_ratio_max);
    add_metric(rep, cfg, "max_se", max_se);

    std::string csv = "r,l,p_close,p_close_se,overlap,overlap_se,inner_exact\n";
    for (const auto& row : rows) {
        csv += fmt_g(row.r) + "," + std::to_string(row.l) + "," + fmt_g(row.p_close.value) + "," +
               fmt_g(row.p_close.se) + "," + fmt_g(row.overlap.value) + "," +
               fmt_g(row.overlap.se) + "," + (row.inner_exact ? "1" : "0") + "\n";
    }
    rep.files.emplace_back("short_returns.csv", std::move(csv));
}

inline void run_poisson_count(const ExperimentConfig& cfg, std::size_t jobs, RunReport& rep) {
    const double tau = cfg.params.value("tau", 1.0);
    if (!(tau > 0.0)) throw validation_error("params.tau must be positive");
    const std::string rule = cfg.params.value("radius_rule", std::string("mass"));
    double fixed_radius = 0.0;
    if (rule == "fixed") {
        if (!cfg.params.contains("radius"))
            throw validation_error("radius_rule \"fixed\" needs params.radius");
        fixed_radius = cfg.params.at("radius").get<double>();
    } else if (rule != "mass") {
        throw validation_error("params.radius_rule must be \"mass\" or \"fixed\"");
    }
    const double per_step = tau / static_cast<double>(cfg.n);
    const bool bitstream = want_bitstream(cfg);

    std::vector<std::uint64_t> counts(cfg.samples);
    parallel_for(jobs, cfg.samples, [&](std::size_t i) {
        Rng rng = derive_substream(cfg.seed, i);
        const Point x = draw_point(cfg, rng, bitstream);
        const double r = rule == "fixed" ? fixed_radius
                                         : implicit_radius(cfg.meas, cfg.sys, x, per_step);
        std::uint64_t c = 0;
        Point p = x;
        for (std::uint64_t k = 1; k <= cfg.n; ++k) {
            p = iterate(cfg.sys, p, 1);
            if (distance(cfg.sys, p, x) < r) ++c;
        }
        counts[i] = c;
    });

    const LimitLaw law = make_averaged_poisson(cfg.meas, tau);
    const double tv = tv_distance_counts(counts, law);
    kahan_sum mean;
    std::uint64_t kmax = 0;
    for (std::uint64_t c : counts) {
        mean.add(static_cast<double>(c));
        kmax = std::max(kmax, c);
    }
    add_metric(rep, cfg, "tv", tv);
    add_metric(rep, cfg, "mean_count", mean.value() / static_cast<double>(cfg.samples));

    std::vector<std::uint64_t> hist(kmax + 1, 0);
    for (std::uint64_t c : counts) ++hist[c];
    std::string csv = "k,empirical,model\n";
    for (std::uint64_t k = 0; k <= kmax; ++k)
        csv += std::to_string(k) + "," +
               fmt_g(static_cast<double>(hist[k]) / static_cast<double>(cfg.samples)) + "," +
               fmt_g(law.pmf(k)) + "\n";
    rep.files.emplace_back("counts.csv", std::move(csv));
}

inline void run_transfer_diagnostics(const ExperimentConfig& cfg, RunReport& rep) {
    UlamOperator op;
    const bool require_exact = cfg.params.value("require_exact", false);
    if (cfg.params.contains("edges")) {
        const auto edges = cfg.params.at("edges").get<std::vector<double>>();
        op = build_ulam(cfg.sys, cfg.meas, edges, require_exact);
    } else {
        const auto bins = cfg.params.value("bins", std::uint64_t{64});
        op = build_ulam(cfg.sys, cfg.meas, static_cast<std::size_t>(bins), require_exact);
    }
    const std::size_t nb = op.bins();

    double row_dev = 0.0;
    for (std::size_t i = 0; i < nb; ++i) {
        kahan_sum row;
        for (std::size_t j = 0; j < nb; ++j) row.add(op.entry(i, j));
        row_dev = std::max(row_dev, std::abs(row.value() - 1.0));
    }
    const auto stat = stationary_distribution(op);
    double stat_l1 = 0.0;
    for (std::size_t i = 0; i < nb; ++i) stat_l1 += std::abs(stat[i] - op.mass[i]);
    const double lambda2 = slem(op);

    add_metric(rep, cfg, "markov_aligned", op.exact ? 1.0 : 0.0);
    add_metric(rep, cfg, "row_sum_dev", row_dev);
    add_metric(rep, cfg, "stationary_l1", stat_l1);
    add_metric(rep, cfg, "lambda2", lambda2);

    // Green-Kubo variance of a centered bin observable (default: the indicator
    // of [0, 1/2) minus its mean), when the halfway point is a bin edge.
    const auto kmax = cfg.params.value("kmax", std::uint64_t{40});
    bool half_is_edge = false;
    for (double e : op.edges) half_is_edge = half_is_edge || std::abs(e - 0.5) <= 1e-12;
    if (half_is_edge) {
        std::vector<double> phi(nb);
        for (std::size_t i = 0; i < nb; ++i) phi[i] = op.edges[i + 1] <= 0.5 + 1e-12 ? 1.0 : 0.0;
        const double mean = integrate(op, phi);
        for (double& v : phi) v -= mean;
        const auto gk = green_kubo_variance(op, phi, kmax);
        if (cfg.params.contains("gk_target")) {
            add_metric(rep, cfg, "gk_dev",
                       std::abs(gk.value - cfg.params.at("gk_target").get<double>()));
        }
        add_metric(rep, cfg, "gk_value", gk.value);
        add_metric(rep, cfg, "gk_tail_bound", gk.tail_bound);
    }

    rep.files.emplace_back("ulam_matrix.csv", matrix_csv(op));
    rep.files.emplace_back("spectra.json", spectra_json(op).dump(2) + "\n");
}

inline void run_sinai_check(const ExperimentConfig& cfg, std::size_t jobs, RunReport& rep) {
    const SftSystem sft = sft_of(cfg.sys);
    int wlo = -1, whi = 0;
    if (cfg.params.contains("window")) {
        const auto& w = cfg.params.at("window");
        if (!w.is_array() || w.size() != 2)
            throw validation_error("params.window must be [lo, hi]");
        wlo = w.at(0).get<int>();
        whi = w.at(1).get<int>();
        if (wlo > whi) throw validation_error("params.window must have lo <= hi");
    }
    const auto n = cfg.params.value("steps", std::uint64_t{6});
    const int K = cfg.params.value("truncation", sft.past_depth);
    const std::size_t trials = cfg.samples > 0 ? cfg.samples : 1000;
    const double scale = cfg.params.value("phi_scale", 1.0);

    // Random cylinder observables phi*_1..phi*_{n+2} on the window.
    Rng phi_rng = derive_substream(cfg.seed, kAuxStream);
    const std::size_t table_size = dense_size(sft.alphabet, whi - wlo + 1);
    std::vector<CylinderFunction> phis;
    for (std::size_t k = 0; k < n + 2; ++k) {
        std::vector<double> table(table_size);
        for (double& v : table) v = scale * (2.0 * phi_rng.next_double() - 1.0);
        phis.push_back(make_cylinder(sft.alphabet, wlo, whi, std::move(table)));
    }

    const SinaiResult res = sinai_future(sft, phis, n, K);
    std::size_t violations = 0;
    for (const auto& f : res.f)
        if (!is_future_only(f, sft)) ++violations;

    // Coordinate range every evaluation in the telescoping identity touches.
    int need_lo = 0, need_hi = 0;
    auto touch = [&](const CylinderFunction& g, int shift) {
        if (g.width() <= 0) return;
        need_lo = std::min(need_lo, g.lo + shift);
        need_hi = std::max(need_hi, g.hi + shift);
    };
    for (std::size_t k = 1; k <= n; ++k) {
        touch(res.f[k - 1], static_cast<int>(k));
        touch(phis[k - 1], static_cast<int>(k));
    }
    touch(res.v.front(), 1);
    touch(res.v.back(), static_cast<int>(n) + 1);

    std::vector<double> residual(trials);
    parallel_for(jobs, trials, [&](std::size_t t) {
        Rng rng = derive_substream(cfg.seed, t);
        const SftWord x = random_admissible(sft, rng, need_lo, need_hi);
        kahan_sum lhs;
        for (std::size_t k = 1; k <= n; ++k) {
            lhs.add(eval_shifted(res.f[k - 1], sft, x, static_cast<int>(k)));
            lhs.add(-eval_shifted(phis[k - 1], sft, x, static_cast<int>(k)));
        }
        const double rhs = eval_shifted(res.v.back(), sft, x, static_cast<int>(n) + 1) -
                           eval_shifted(res.v.front(), sft, x, 1);
        residual[t] = std::abs(lhs.value() - rhs);
    });
    double worst = 0.0;
    for (double r : residual) worst = std::max(worst, r);

    add_metric(rep, cfg, "future_only_violations", static_cast<double>(violations));
    add_metric(rep, cfg, "telescoping_max", worst);
    add_metric(rep, cfg, "exact", res.exact ? 1.0 : 0.0);
    add_metric(rep, cfg, "truncation_bound", res.truncation_bound);

    std::string csv = "trial,residual\n";
    for (std::size_t t = 0; t < trials; ++t)
        csv += std::to_string(t) + "," + fmt_g(residual[t]) + "\n";
    rep.files.emplace_back("residuals.csv", std::move(csv));
}

}  // namespace detail

inline RunReport run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1) {
    const auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    rep.config = config_echo(cfg);
    switch (cfg.kind) {
        case ExperimentKind::clt_recurrence:
        case ExperimentKind::clt_target:
            detail::run_clt(cfg, jobs, rep);
            break;
        case ExperimentKind::variance_report:
            detail::run_variance_report(cfg, rep);
            break;
        case ExperimentKind::short_returns:
            detail::run_short_returns(cfg, jobs, rep);
            break;
        case ExperimentKind::poisson_count:
            detail::run_poisson_count(cfg, jobs, rep);
            break;
        case ExperimentKind::transfer_diagnostics:
            detail::run_transfer_diagnostics(cfg, rep);
            break;
        case ExperimentKind::sinai_check:
            detail::run_sinai_check(cfg, jobs, rep);
            break;
    }
    detail::finish_report(rep, cfg);
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

inline RunReport run_experiment(const json& config, std::size_t jobs = 1) {
    return run_experiment(config_from_json(config), jobs);
}

// Writes report.json plus every per-experiment file; returns the paths.
inline std::vector<std::filesystem::path> write_report(const RunReport& rep,
                                                       const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::string& contents) {
        const auto path = out_dir / name;
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw error("cannot open " + path.string() + " for writing");
        f << contents;
        written.push_back(path);
    };
    emit("report.json", rep.summary.dump(2) + "\n");
    for (const auto& [name, contents] : rep.files) emit(name, contents);
    return written;
}

}  // namespace reclab
