#pragma once

// Subshifts of finite type on finite coordinate windows, cylinder functions
// with dense value tables, and the reduction of two-sided observables to
// future-coordinate observables.
//
// The past-erasing map G replaces all negative coordinates of a sequence by a
// fixed admissible left tail chosen per symbol at coordinate 0.  For cylinder
// observables every series in the reduction is a finite sum: the term
// phi_k o sigma^{k-m} - phi_k o sigma^{k-m} o G vanishes exactly once the
// shifted window sits in the future, so v_m is itself a cylinder function and
// nothing is asymptotic.  Coordinate convention: (sigma x)_i = x_{i+1}, so a
// function of sigma^j x reads coordinates shifted right by j.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reclab/common.hpp"
#include "reclab/rng.hpp"
#include "reclab/systems.hpp"

namespace reclab {

struct SftSystem {
    int alphabet = 2;
    std::vector<std::uint8_t> trans;      // alphabet x alphabet, row-major 0/1
    double theta = 0.5;                   // metric base: d = theta^(first disagreement)
    int past_depth = 16;                  // W: fixed pasts cover coordinates -W..-1
    std::vector<std::vector<int>> pasts;  // per symbol a: tail with pasts[a][W+i] at coord i

    bool allowed(int a, int b) const {
        return trans[static_cast<std::size_t>(a) * alphabet + b] != 0;
    }
};

inline void validate(const SftSystem& s) {
    if (s.alphabet < 1) throw validation_error("alphabet must be nonempty");
    if (s.trans.size() != static_cast<std::size_t>(s.alphabet) * s.alphabet)
        throw validation_error("transition matrix size mismatch");
    if (!(s.theta > 0.0 && s.theta < 1.0))
        throw validation_error("metric base theta must lie in (0,1)");
    if (s.past_depth < 1) throw validation_error("past depth must be >= 1");
    // Primitivity: some boolean power of the transition matrix is all-ones;
    // Wielandt's bound caps the power to check.
    {
        const int n = s.alphabet;
        std::vector<std::uint8_t> c = s.trans;
        bool primitive = false;
        const int cap = (n - 1) * (n - 1) + 2;
        for (int it = 0; it < cap && !primitive; ++it) {
            primitive = std::all_of(c.begin(), c.end(), [](std::uint8_t v) { return v != 0; });
            if (primitive) break;
            std::vector<std::uint8_t> next(c.size(), 0);
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < n; ++k)
                    if (c[i * n + k])
                        for (int j = 0; j < n; ++j)
                            if (s.trans[k * n + j]) next[i * n + j] = 1;
            c = std::move(next);
        }
        if (!primitive) throw validation_error("transition matrix is not primitive");
    }
    if (s.pasts.size() != static_cast<std::size_t>(s.alphabet))
        throw validation_error("need one fixed past per symbol");
    for (int a = 0; a < s.alphabet; ++a) {
        const auto& p = s.pasts[a];
        if (p.size() != static_cast<std::size_t>(s.past_depth))
            throw validation_error("fixed past depth mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] < 0 || p[i] >= s.alphabet)
                throw validation_error("fixed past symbol out of range");
            if (i + 1 < p.size() && !s.allowed(p[i], p[i + 1]))
                throw validation_error("fixed past is not admissible");
        }
        if (!s.allowed(p.back(), a))
            throw validation_error("fixed past does not connect to its symbol");
    }
}

inline SftSystem make_golden_mean(double theta = 0.5, int past_depth = 16) {
    SftSystem s;
    s.alphabet = 2;
    s.trans = {1, 1, 1, 0};  // the word "11" is forbidden
    s.theta = theta;
    s.past_depth = past_depth;
    s.pasts = {std::vector<int>(past_depth, 0), std::vector<int>(past_depth, 0)};
    validate(s);
    return s;
}

inline SftSystem make_full_shift(int alphabet, double theta = 0.5, int past_depth = 16) {
    SftSystem s;
    s.alphabet = alphabet;
    s.trans.assign(static_cast<std::size_t>(alphabet) * alphabet, 1);
    s.theta = theta;
    s.past_depth = past_depth;
    s.pasts.assign(alphabet, std::vector<int>(past_depth, 0));
    validate(s);
    return s;
}

// ---------------------------------------------------------------------------
// Finite words.
// ---------------------------------------------------------------------------

struct SftWord {
    int lo = 0;            // coordinate of sym.front()
    std::vector<int> sym;

    int hi() const { return lo + static_cast<int>(sym.size()) - 1; }
    bool covers(int a, int b) const { return lo <= a && b <= hi(); }

    int at(int i) const {
        if (i < lo || i > hi()) throw domain_error("word coordinate out of range");
        return sym[static_cast<std::size_t>(i - lo)];
    }
};

inline bool is_admissible(const SftSystem& s, const SftWord& w) {
    for (std::size_t i = 0; i + 1 < w.sym.size(); ++i)
        if (!s.allowed(w.sym[i], w.sym[i + 1])) return false;
    for (int v : w.sym)
        if (v < 0 || v >= s.alphabet) return false;
    return true;
}

// Word of sigma^j x given a word of x: same symbols, coordinates shifted so
// that (sigma^j x)_i = x_{i+j}.
inline SftWord shift_word(SftWord w, int j) {
    w.lo -= j;
    return w;
}

// Past-erasing map: coordinates >= 0 kept, coordinates < 0 replaced by the
// fixed past of the symbol at coordinate 0.
inline SftWord apply_G(const SftSystem& s, const SftWord& w) {
    if (!w.covers(0, 0)) throw domain_error("G needs coordinate 0");
    if (w.lo < -s.past_depth)
        throw domain_error("word reaches past coordinate -W; increase past depth");
    SftWord out = w;
    const int a = w.at(0);
    for (int i = w.lo; i < 0; ++i)
        out.sym[static_cast<std::size_t>(i - w.lo)] =
            s.pasts[static_cast<std::size_t>(a)][static_cast<std::size_t>(s.past_depth + i)];
    return out;
}

inline double sft_distance(const SftSystem& s, const SftWord& x, const SftWord& y, int wlo,
                           int whi) {
    if (wlo > whi) throw validation_error("empty comparison window");
    if (!x.covers(wlo, whi) || !y.covers(wlo, whi))
        throw domain_error("words do not cover the comparison window");
    int best = -1;
    for (int i = wlo; i <= whi; ++i)
        if (x.at(i) != y.at(i)) {
            const int d = std::abs(i);
            if (best < 0 || d < best) best = d;
        }
    if (best < 0) return 0.0;  // equal at window resolution
    return std::pow(s.theta, best);
}

inline SftWord random_admissible(const SftSystem& s, Rng& rng, int lo, int hi) {
    if (lo > hi) throw validation_error("empty word range");
    auto pick = [&](const std::vector<int>& options) {
        return options[static_cast<std::size_t>(rng.next_double() *
                                                static_cast<double>(options.size())) %
                       options.size()];
    };
    SftWord w;
    w.lo = lo;
    w.sym.resize(static_cast<std::size_t>(hi - lo + 1));
    std::vector<int> all(static_cast<std::size_t>(s.alphabet));
    for (int a = 0; a < s.alphabet; ++a) all[static_cast<std::size_t>(a)] = a;
    w.sym[0] = pick(all);
    for (std::size_t i = 1; i < w.sym.size(); ++i) {
        std::vector<int> opts;
        for (int b = 0; b < s.alphabet; ++b)
            if (s.allowed(w.sym[i - 1], b)) opts.push_back(b);
        w.sym[i] = pick(opts);
    }
    return w;
}

// ---------------------------------------------------------------------------
// Markov measures.
// ---------------------------------------------------------------------------

struct MarkovMeasure {
    std::vector<double> q;   // stochastic transition matrix restricted to allowed moves
    std::vector<double> pi;  // stationary vector
    int alphabet = 0;
};

inline void validate(const SftSystem& s, const MarkovMeasure& m) {
    const int n = s.alphabet;
    if (m.alphabet != n || m.q.size() != static_cast<std::size_t>(n) * n ||
        m.pi.size() != static_cast<std::size_t>(n))
        throw validation_error("Markov measure dimension mismatch");
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            const double v = m.q[static_cast<std::size_t>(i) * n + j];
            if (v < 0.0 || (v > 0.0 && !s.allowed(i, j)))
                throw validation_error("Markov measure charges a forbidden transition");
            row += v;
        }
        if (std::abs(row - 1.0) > 1e-9) throw validation_error("transition rows must sum to 1");
        total += m.pi[static_cast<std::size_t>(i)];
    }
    if (std::abs(total - 1.0) > 1e-9) throw validation_error("stationary vector must sum to 1");
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc += m.pi[static_cast<std::size_t>(i)] * m.q[static_cast<std::size_t>(i) * n + j];
        if (std::abs(acc - m.pi[static_cast<std::size_t>(j)]) > 1e-9)
            throw validation_error("vector is not stationary for the transition matrix");
    }
}

// Maximal-entropy Markov measure: q[i][j] = trans[i][j] v_j / (lambda v_i)
// with v the right Perron vector, pi_i proportional to u_i v_i.
inline MarkovMeasure parry_measure(const SftSystem& s) {
    const int n = s.alphabet;
    std::vector<double> v(static_cast<std::size_t>(n), 1.0), u(static_cast<std::size_t>(n), 1.0);
    double lambda = 1.0;
    for (int it = 0; it < 500; ++it) {
        std::vector<double> nv(static_cast<std::size_t>(n), 0.0),
            nu(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (s.allowed(i, j)) {
                    nv[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(j)];
                    nu[static_cast<std::size_t>(j)] += u[static_cast<std::size_t>(i)];
                }
        lambda = 0.0;
        for (double x : nv) lambda = std::max(lambda, x);
        for (double& x : nv) x /= lambda;
        double un = 0.0;
        for (double x : nu) un = std::max(un, x);
        for (double& x : nu) x /= un;
        v = std::move(nv);
        u = std::move(nu);
    }
    MarkovMeasure m;
    m.alphabet = n;
    m.q.assign(static_cast<std::size_t>(n) * n, 0.0);
    m.pi.assign(static_cast<std::size_t>(n), 0.0);
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            if (s.allowed(i, j))
                m.q[static_cast<std::size_t>(i) * n + j] =
                    v[static_cast<std::size_t>(j)] / (lambda * v[static_cast<std::size_t>(i)]);
        m.pi[static_cast<std::size_t>(i)] =
            u[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
        z += m.pi[static_cast<std::size_t>(i)];
    }
    for (double& x : m.pi) x /= z;
    validate(s, m);
    return m;
}

// mu of the cylinder fixing the word's symbols (location-invariant).
inline double cylinder_mass(const MarkovMeasure& m, const SftWord& w) {
    if (w.sym.empty()) return 1.0;
    double p = m.pi[static_cast<std::size_t>(w.sym[0])];
    for (std::size_t i = 0; i + 1 < w.sym.size(); ++i)
        p *= m.q[static_cast<std::size_t>(w.sym[i]) * m.alphabet + w.sym[i + 1]];
    return p;
}

// ---------------------------------------------------------------------------
// Cylinder functions.
// ---------------------------------------------------------------------------

// Value table over the dense words on a coordinate window [lo, hi], leftmost
// coordinate most significant.  Entries at inadmissible words are carried but
// never observed by admissible dynamics.  An empty window (hi = lo-1, one
// entry) is a constant.
struct CylinderFunction {
    int lo = 0;
    int hi = -1;
    std::vector<double> table{0.0};

    int width() const { return hi - lo + 1; }
};

namespace detail {

inline std::size_t dense_size(int alphabet, int width) {
    std::size_t n = 1;
    for (int i = 0; i < width; ++i) {
        n *= static_cast<std::size_t>(alphabet);
        if (n > (1u << 26)) throw validation_error("cylinder window too wide");
    }
    return n;
}

inline void decode_word(int alphabet, std::size_t idx, int lo, int width, SftWord& out) {
    out.lo = lo;
    out.sym.assign(static_cast<std::size_t>(width), 0);
    for (int i = width - 1; i >= 0; --i) {
        out.sym[static_cast<std::size_t>(i)] = static_cast<int>(idx % alphabet);
        idx /= static_cast<std::size_t>(alphabet);
    }
}

}  // namespace detail

inline CylinderFunction make_constant_cylinder(double c) {
    CylinderFunction f;
    f.table = {c};
    return f;
}

inline CylinderFunction make_cylinder(int alphabet, int lo, int hi, std::vector<double> table) {
    if (hi < lo - 1) throw validation_error("invalid cylinder window");
    if (table.size() != detail::dense_size(alphabet, hi - lo + 1))
        throw validation_error("cylinder table size mismatch");
    CylinderFunction f;
    f.lo = lo;
    f.hi = hi;
    f.table = std::move(table);
    return f;
}

inline double eval(const CylinderFunction& f, const SftSystem& s, const SftWord& w) {
    if (f.width() <= 0) return f.table[0];
    if (!w.covers(f.lo, f.hi)) throw domain_error("word does not cover the cylinder window");
    std::size_t idx = 0;
    for (int i = f.lo; i <= f.hi; ++i)
        idx = idx * static_cast<std::size_t>(s.alphabet) + static_cast<std::size_t>(w.at(i));
    return f.table[idx];
}

// Value of f(sigma^j x) read off a word of x.
inline double eval_shifted(const CylinderFunction& f, const SftSystem& s, const SftWord& x,
                           int j) {
    return eval(f, s, shift_word(x, j));
}

// Same function on a wider window (values replicated over the new coords).
inline CylinderFunction extend_window(const CylinderFunction& f, const SftSystem& s, int lo,
                                      int hi) {
    if (f.width() > 0 && (lo > f.lo || hi < f.hi))
        throw validation_error("extend_window cannot shrink the window");
    CylinderFunction out;
    out.lo = lo;
    out.hi = hi;
    out.table.assign(detail::dense_size(s.alphabet, hi - lo + 1), 0.0);
    SftWord w;
    for (std::size_t idx = 0; idx < out.table.size(); ++idx) {
        detail::decode_word(s.alphabet, idx, lo, hi - lo + 1, w);
        out.table[idx] = eval(f, s, w);
    }
    return out;
}

inline CylinderFunction add(const CylinderFunction& f, const CylinderFunction& g,
                            const SftSystem& s, double sign = 1.0) {
    const int lo = std::min(f.width() > 0 ? f.lo : g.lo, g.width() > 0 ? g.lo : f.lo);
    const int hi = std::max(f.width() > 0 ? f.hi : g.hi, g.width() > 0 ? g.hi : f.hi);
    if (f.width() <= 0 && g.width() <= 0) return make_constant_cylinder(f.table[0] + sign * g.table[0]);
    CylinderFunction a = extend_window(f, s, lo, hi);
    const CylinderFunction b = extend_window(g, s, lo, hi);
    for (std::size_t i = 0; i < a.table.size(); ++i) a.table[i] += sign * b.table[i];
    return a;
}

inline CylinderFunction sub(const CylinderFunction& f, const CylinderFunction& g,
                            const SftSystem& s) {
    return add(f, g, s, -1.0);
}

// f o sigma^j: reads coordinates shifted right by j, same table.
inline CylinderFunction compose_shift(CylinderFunction f, int j) {
    if (f.width() <= 0) return f;
    f.lo += j;
    f.hi += j;
    return f;
}

// f o G: negative coordinates are resolved through the fixed pasts, so the
// result depends on coordinates [0, max(hi,0)] only.
inline CylinderFunction compose_G(const CylinderFunction& f, const SftSystem& s) {
    if (f.width() <= 0 || f.lo >= 0) return f;
    if (-f.lo > s.past_depth)
        throw validation_error("cylinder reaches past coordinate -W; increase past depth");
    const int lo = 0;
    const int hi = std::max(f.hi, 0);
    CylinderFunction out;
    out.lo = lo;
    out.hi = hi;
    out.table.assign(detail::dense_size(s.alphabet, hi - lo + 1), 0.0);
    SftWord w, full;
    for (std::size_t idx = 0; idx < out.table.size(); ++idx) {
        detail::decode_word(s.alphabet, idx, lo, hi - lo + 1, w);
        full.lo = f.lo;
        full.sym.assign(static_cast<std::size_t>(f.hi - f.lo + 1), 0);
        const int a = w.at(0);
        for (int i = f.lo; i <= f.hi; ++i)
            full.sym[static_cast<std::size_t>(i - f.lo)] =
                i < 0 ? s.pasts[static_cast<std::size_t>(a)]
                               [static_cast<std::size_t>(s.past_depth + i)]
                      : w.at(i);
        out.table[idx] = eval(f, s, full);
    }
    return out;
}

inline double sup_abs(const CylinderFunction& f) {
    double m = 0.0;
    for (double v : f.table) m = std::max(m, std::abs(v));
    return m;
}

// Exact table check: equal values at every pair of admissible words agreeing
// on coordinates >= 0.
inline bool is_future_only(const CylinderFunction& f, const SftSystem& s) {
    if (f.width() <= 0 || f.lo >= 0) return true;
    const int width = f.width();
    const int future_width = f.hi >= 0 ? f.hi + 1 : 0;
    const std::size_t future_size = detail::dense_size(s.alphabet, future_width);
    std::vector<char> seen(future_size, 0);
    std::vector<double> rep(future_size, 0.0);
    SftWord w;
    for (std::size_t idx = 0; idx < f.table.size(); ++idx) {
        detail::decode_word(s.alphabet, idx, f.lo, width, w);
        if (!is_admissible(s, w)) continue;
        std::size_t fidx = 0;
        for (int i = 0; i <= f.hi; ++i)
            fidx = fidx * static_cast<std::size_t>(s.alphabet) + static_cast<std::size_t>(w.at(i));
        if (!seen[fidx]) {
            seen[fidx] = 1;
            rep[fidx] = f.table[idx];
        } else if (f.table[idx] != rep[fidx]) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Future-coordinate reduction.
// ---------------------------------------------------------------------------

struct SinaiResult {
    std::vector<CylinderFunction> f;  // f_1 .. f_n
    std::vector<CylinderFunction> v;  // v_1 .. v_{n+1}
    bool exact = true;                // no contributing term was truncated
    double truncation_bound = 0.0;    // sup bound on what truncation discarded
};

// v_m = Sum_{k=m}^{min(m+K, N)} [phi_k o sigma^{k-m} - phi_k o sigma^{k-m} o G],
// f_m = phi_m - v_m + v_{m+1} o sigma.  Terms whose shifted window already
// sits in the future vanish identically and are skipped; truncation beyond K
// is reported with a sup-norm bound instead of silently ignored.
inline SinaiResult sinai_future(const SftSystem& s, std::span<const CylinderFunction> phis,
                                std::size_t n, int truncation_K) {
    if (truncation_K < 0) throw validation_error("negative truncation depth");
    if (phis.size() < n + 1)
        throw validation_error("future reduction to step n needs phi_1..phi_{n+1}");
    for (const auto& p : phis) {
        if (p.width() > 0 && (p.lo < -s.past_depth || p.hi > s.past_depth))
            throw validation_error("cylinder window exceeds the stored past depth");
    }
    const std::size_t N = phis.size();
    SinaiResult out;
    out.v.reserve(n + 1);
    for (std::size_t m = 1; m <= n + 1; ++m) {
        CylinderFunction vm = make_constant_cylinder(0.0);
        for (std::size_t k = m; k <= N; ++k) {
            const CylinderFunction& phi = phis[k - 1];
            const int j = static_cast<int>(k - m);
            if (phi.width() <= 0 || phi.lo + j >= 0) continue;  // term is identically 0
            if (k > m + static_cast<std::size_t>(truncation_K)) {
                out.exact = false;
                out.truncation_bound += 2.0 * sup_abs(phi);
                continue;
            }
            const CylinderFunction shifted = compose_shift(phi, j);
            vm = add(vm, sub(shifted, compose_G(shifted, s), s), s);
        }
        out.v.push_back(std::move(vm));
    }
    out.f.reserve(n);
    for (std::size_t m = 1; m <= n; ++m) {
        const CylinderFunction& phi = phis[m - 1];
        // f_m = phi_m - v_m + v_{m+1} o sigma, assembled term by term: the
        // phi_m parts cancel into phi_m o G and for every k > m the plain
        // shift in -v_m cancels against the one in v_{m+1} o sigma, leaving
        // only G-compositions (window from 0) and their sigma-shifts (window
        // from 1).  Cancelling symbolically rather than numerically keeps f_m
        // future-measurable as a table, not merely up to rounding.  Truncated
        // tail terms keep their uncancelled form; those runs are already
        // flagged inexact with a sup-norm bound.
        CylinderFunction fm = (phi.width() > 0 && phi.lo < 0) ? compose_G(phi, s) : phi;
        for (std::size_t k = m + 1; k <= N; ++k) {
            const CylinderFunction& phik = phis[k - 1];
            if (phik.width() <= 0) continue;
            const int j1 = static_cast<int>(k - m);  // shift of the v_m term
            const int j2 = j1 - 1;                   // shift of the v_{m+1} term
            const bool in_vm =
                phik.lo + j1 < 0 && k <= m + static_cast<std::size_t>(truncation_K);
            const bool in_vm1 =
                phik.lo + j2 < 0 && k <= m + 1 + static_cast<std::size_t>(truncation_K);
            if (!in_vm && !in_vm1) continue;
            const CylinderFunction s1 = compose_shift(phik, j1);
            if (in_vm)
                fm = add(fm, compose_G(s1, s), s);
            else
                fm = add(fm, s1, s);
            if (in_vm1)
                fm = sub(fm, compose_shift(compose_G(compose_shift(phik, j2), s), 1), s);
            else
                fm = sub(fm, s1, s);
        }
        out.f.push_back(std::move(fm));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON wire format.
// ---------------------------------------------------------------------------

inline json to_json(const SftSystem& s) {
    json j;
    j["alphabet"] = s.alphabet;
    json rows = json::array();
    for (int i = 0; i < s.alphabet; ++i) {
        json row = json::array();
        for (int k = 0; k < s.alphabet; ++k)
            row.push_back(static_cast<int>(s.trans[static_cast<std::size_t>(i) * s.alphabet + k]));
        rows.push_back(row);
    }
    j["transitions"] = rows;
    j["theta"] = s.theta;
    j["past_depth"] = s.past_depth;
    j["pasts"] = s.pasts;
    return j;
}

inline SftSystem sft_from_json(const json& j) {
    SftSystem s;
    s.alphabet = j.at("alphabet").get<int>();
    s.trans.clear();
    for (const auto& row : j.at("transitions"))
        for (const auto& v : row) s.trans.push_back(v.get<int>() != 0 ? 1 : 0);
    s.theta = j.value("theta", 0.5);
    s.past_depth = j.value("past_depth", 16);
    if (j.contains("pasts")) {
        s.pasts = j.at("pasts").get<std::vector<std::vector<int>>>();
    } else {
        s.pasts.assign(static_cast<std::size_t>(s.alphabet),
                       std::vector<int>(static_cast<std::size_t>(s.past_depth), 0));
    }
    validate(s);
    return s;
}

inline MapSystem make_sft_handle(const SftSystem& s) {
    MapSystem m;
    m.kind = MapKind::sft_handle;
    m.sft_descriptor = to_json(s).dump();
    validate(m);
    return m;
}

inline SftSystem sft_of(const MapSystem& m) {
    if (m.kind != MapKind::sft_handle) throw domain_error("system is not an sft handle");
    return sft_from_json(json::parse(m.sft_descriptor));
}

inline json to_json(const CylinderFunction& f) {
    json j;
    j["lo"] = f.lo;
    j["hi"] = f.hi;
    j["table"] = f.table;
    return j;
}

inline CylinderFunction cylinder_from_json(const json& j, int alphabet) {
    return make_cylinder(alphabet, j.at("lo").get<int>(), j.at("hi").get<int>(),
                         j.at("table").get<std::vector<double>>());
}

}  // namespace reclab
