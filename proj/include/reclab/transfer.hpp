#pragma once

// Finite transfer-operator machinery.  An Ulam operator is the row-stochastic
// matrix A[i][j] = mu(bin_i n T^-1 bin_j) / mu(bin_i) on a bin partition of
// [0,1).  When the bins are aligned with a Markov piecewise-affine map
// (branch endpoints are edges and edges map to edges) the matrix IS the
// transfer operator restricted to bin-constant functions, and the martingale
// decomposition below is exact; otherwise the operator serves correlation
// diagnostics only.
//
// Conventions: A acts on the right of row vectors (densities) and on the
// left of column vectors as the conditional-expectation step
// (A v)[i] = E[v(Tx) | x in bin_i].  The normalized transfer operator P,
// defined by  Integral u (w o T) dmu = Integral (P u) w dmu,  acts on bin
// vectors as (P u)[j] = Sum_i u[i] mu_i A[i][j] / mu_j.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reclab/common.hpp"
#include "reclab/measures.hpp"
#include "reclab/rng.hpp"
#include "reclab/systems.hpp"

namespace reclab {

struct UlamOperator {
    std::vector<double> edges;  // bins()+1 boundaries, edges.front()=0, edges.back()=1
    std::vector<double> A;      // row-major bins() x bins()
    std::vector<double> mass;   // mu(bin_i), all positive
    bool exact = false;
    MapSystem system;
    DensityMeasure measure;

    std::size_t bins() const { return mass.size(); }
    double entry(std::size_t i, std::size_t j) const { return A[i * bins() + j]; }
};

namespace detail {

inline std::size_t edge_bin(const std::vector<double>& edges, double x) {
    auto it = std::upper_bound(edges.begin(), edges.end(), x);
    if (it == edges.begin()) return 0;
    std::size_t i = static_cast<std::size_t>(it - edges.begin()) - 1;
    return std::min(i, edges.size() - 2);
}

inline bool near_edge(const std::vector<double>& edges, double v) {
    const auto it = std::lower_bound(edges.begin(), edges.end(), v - 1e-9);
    return it != edges.end() && std::abs(*it - v) <= 1e-9;
}

// Markov alignment: branch endpoints are edges and every edge inside a branch
// domain maps to an edge, so bin images/preimages are unions of bins.
inline bool markov_aligned(const MapSystem& s, const std::vector<double>& edges) {
    if (!s.declared_markov) return false;
    for (const Branch& br : s.branches) {
        if (!near_edge(edges, br.a) || !near_edge(edges, std::min(br.b, 1.0))) return false;
        for (double e : edges) {
            if (e < br.a - 1e-12 || e > br.b + 1e-12) continue;
            const double img = br.slope * e + br.intercept;
            if (!near_edge(edges, std::min(std::max(img, 0.0), 1.0))) return false;
        }
    }
    return true;
}

}  // namespace detail

inline UlamOperator build_ulam(const MapSystem& s, const DensityMeasure& m,
                               std::span<const double> edge_list, bool require_exact = false) {
    check_compat(m, s);
    if (!s.is_pw_affine())
        throw validation_error("Ulam construction needs a piecewise-affine interval/circle map");
    if (edge_list.size() < 3) throw validation_error("Ulam operator needs >= 2 bins");
    UlamOperator op;
    op.system = s;
    op.measure = m;
    op.edges.assign(edge_list.begin(), edge_list.end());
    std::sort(op.edges.begin(), op.edges.end());
    if (std::abs(op.edges.front()) > 1e-12 || std::abs(op.edges.back() - 1.0) > 1e-12)
        throw validation_error("bin edges must span [0,1]");
    for (std::size_t i = 0; i + 1 < op.edges.size(); ++i)
        if (!(op.edges[i + 1] - op.edges[i] > 1e-12))
            throw validation_error("degenerate or duplicate bin edge");
    op.edges.front() = 0.0;
    op.edges.back() = 1.0;
    const std::size_t nb = op.edges.size() - 1;
    op.mass.resize(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        op.mass[i] = interval_measure(m, op.edges[i], op.edges[i + 1]);
        if (!(op.mass[i] > 0.0))
            throw validation_error("bin " + std::to_string(i) + " has zero measure");
    }
    op.exact = detail::markov_aligned(s, op.edges);
    if (require_exact && !op.exact)
        throw alignment_error("bins are not aligned with the Markov structure of the map");

    // Row i, column j: pull each bin j back through every branch inverse and
    // apportion the preimage mass to the bins it lands in.
    op.A.assign(nb * nb, 0.0);
    for (const Branch& br : s.branches) {
        for (std::size_t j = 0; j < nb; ++j) {
            double u = (op.edges[j] - br.intercept) / br.slope;
            double v = (op.edges[j + 1] - br.intercept) / br.slope;
            if (u > v) std::swap(u, v);
            u = std::max(u, br.a);
            v = std::min(v, br.b);
            if (v <= u) continue;
            std::size_t i = detail::edge_bin(op.edges, u);
            while (i < nb && op.edges[i] < v) {
                const double lo = std::max(u, op.edges[i]);
                const double hi = std::min(v, op.edges[i + 1]);
                if (hi > lo) op.A[i * nb + j] += interval_measure(m, lo, hi) / op.mass[i];
                ++i;
            }
        }
    }
    for (std::size_t i = 0; i < nb; ++i) {
        kahan_sum row;
        for (std::size_t j = 0; j < nb; ++j) row.add(op.A[i * nb + j]);
        if (std::abs(row.value() - 1.0) > 1e-12)
            throw error("Ulam row " + std::to_string(i) + " sums to " +
                        std::to_string(row.value()));
    }
    return op;
}

inline UlamOperator build_ulam(const MapSystem& s, const DensityMeasure& m, std::size_t bins,
                               bool require_exact = false) {
    if (bins < 2) throw validation_error("Ulam operator needs >= 2 bins");
    std::vector<double> edges(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        edges[i] = static_cast<double>(i) / static_cast<double>(bins);
    return build_ulam(s, m, edges, require_exact);
}

// ---------------------------------------------------------------------------
// Actions and integrals.
// ---------------------------------------------------------------------------

// (A v)[i] = E[v(T x) | x in bin_i]: one step of conditional expectation.
inline std::vector<double> apply_markov(const UlamOperator& op, std::span<const double> v) {
    const std::size_t nb = op.bins();
    if (v.size() != nb) throw validation_error("bin-vector length mismatch");
    std::vector<double> out(nb, 0.0);
    for (std::size_t i = 0; i < nb; ++i) {
        kahan_sum acc;
        for (std::size_t j = 0; j < nb; ++j) acc.add(op.A[i * nb + j] * v[j]);
        out[i] = acc.value();
    }
    return out;
}

// Normalized transfer operator on bin vectors.
inline std::vector<double> transfer_apply(const UlamOperator& op, std::span<const double> u) {
    const std::size_t nb = op.bins();
    if (u.size() != nb) throw validation_error("bin-vector length mismatch");
    std::vector<double> out(nb, 0.0);
    for (std::size_t j = 0; j < nb; ++j) {
        kahan_sum acc;
        for (std::size_t i = 0; i < nb; ++i) acc.add(u[i] * op.mass[i] * op.A[i * nb + j]);
        out[j] = acc.value() / op.mass[j];
    }
    return out;
}

inline double integrate(const UlamOperator& op, std::span<const double> u) {
    if (u.size() != op.bins()) throw validation_error("bin-vector length mismatch");
    kahan_sum acc;
    for (std::size_t i = 0; i < op.bins(); ++i) acc.add(u[i] * op.mass[i]);
    return acc.value();
}

// Stationary row vector by power iteration (cross-check: it must reproduce
// the binned invariant measure).
inline std::vector<double> stationary_distribution(const UlamOperator& op,
                                                   std::size_t iters = 500) {
    const std::size_t nb = op.bins();
    std::vector<double> p(nb, 1.0 / static_cast<double>(nb)), q(nb);
    for (std::size_t it = 0; it < iters; ++it) {
        std::fill(q.begin(), q.end(), 0.0);
        for (std::size_t i = 0; i < nb; ++i)
            for (std::size_t j = 0; j < nb; ++j) q[j] += p[i] * op.A[i * nb + j];
        double total = 0.0;
        for (double x : q) total += x;
        for (double& x : q) x /= total;
        std::swap(p, q);
    }
    return p;
}

// Second-largest eigenvalue modulus by power iteration on the complement of
// the Perron pair (right eigenvector 1, left eigenvector the bin masses).
// The modulus estimate is a geometric mean of late-stage growth ratios, which
// also handles complex pairs; an iterate collapsing to zero means the
// complement is nilpotent at this resolution and the modulus is 0.
inline double slem(const UlamOperator& op, std::size_t iters = 300) {
    const std::size_t nb = op.bins();
    std::vector<double> v(nb);
    for (std::size_t i = 0; i < nb; ++i)
        v[i] = static_cast<double>(detail::mix64(0x5eedULL + i)) * 0x1.0p-64 - 0.5;
    auto project = [&](std::vector<double>& w) {
        double dot = 0.0;
        for (std::size_t i = 0; i < nb; ++i) dot += op.mass[i] * w[i];
        for (std::size_t i = 0; i < nb; ++i) w[i] -= dot;
    };
    auto norm = [](const std::vector<double>& w) {
        double s = 0.0;
        for (double x : w) s += x * x;
        return std::sqrt(s);
    };
    project(v);
    double nv = norm(v);
    if (nv < 1e-300) return 0.0;
    for (double& x : v) x /= nv;
    double log_ratio_sum = 0.0;
    std::size_t tail_count = 0;
    const std::size_t tail_start = iters > 40 ? iters - 40 : iters / 2;
    for (std::size_t it = 0; it < iters; ++it) {
        std::vector<double> w = apply_markov(op, v);
        project(w);
        const double nw = norm(w);
        if (nw < 1e-13) return 0.0;
        if (it >= tail_start) {
            log_ratio_sum += std::log(nw);
            ++tail_count;
        }
        for (double& x : w) x /= nw;
        v = std::move(w);
    }
    return tail_count ? std::exp(log_ratio_sum / static_cast<double>(tail_count)) : 0.0;
}

// ---------------------------------------------------------------------------
// Correlation decay.
// ---------------------------------------------------------------------------

struct CorrelationDecay {
    std::vector<double> cov;  // cov[k] = Cov(phi, psi o T^k), k = 0..k_max
    double fitted_rate = 0.0; // least-squares exponential rate of |cov|
    double lambda2 = 0.0;     // second eigenvalue modulus of the operator
};

inline CorrelationDecay correlation_decay(const UlamOperator& op, std::span<const double> phi,
                                          std::span<const double> psi, std::size_t k_max) {
    const double mean_phi = integrate(op, phi);
    const double mean_psi = integrate(op, psi);
    CorrelationDecay out;
    out.cov.reserve(k_max + 1);
    std::vector<double> w(psi.begin(), psi.end());
    for (std::size_t k = 0; k <= k_max; ++k) {
        if (k > 0) w = apply_markov(op, w);
        kahan_sum acc;
        for (std::size_t i = 0; i < op.bins(); ++i) acc.add(op.mass[i] * phi[i] * w[i]);
        out.cov.push_back(acc.value() - mean_phi * mean_psi);
    }
    // Fit log|cov_k| = log C + k log rate on the numerically resolved entries.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t cnt = 0;
    for (std::size_t k = 1; k <= k_max; ++k) {
        if (std::abs(out.cov[k]) < 1e-15) continue;
        const double x = static_cast<double>(k), y = std::log(std::abs(out.cov[k]));
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++cnt;
    }
    if (cnt >= 2) {
        const double denom = static_cast<double>(cnt) * sxx - sx * sx;
        if (std::abs(denom) > 1e-12)
            out.fitted_rate = std::exp((static_cast<double>(cnt) * sxy - sx * sy) / denom);
    }
    out.lambda2 = slem(op);
    return out;
}

// ---------------------------------------------------------------------------
// Martingale decomposition.
// ---------------------------------------------------------------------------

// psi = u - w o T held as the pair (u, w); the composition by T never needs
// to be materialized because P(w o T) = w exactly.
struct MartingalePair {
    std::vector<double> u;  // phi_m + h_m
    std::vector<double> w;  // h_{m+1}
    double residual_sup = 0.0;  // ||P psi||_inf, recomputed from branch geometry
};

struct MartingaleDecomposition {
    std::vector<std::vector<double>> h;  // h_0 = 0, h_1, ..., h_n
    std::vector<MartingalePair> psi;     // psi_0 .. psi_{n-1}
    double max_residual_sup = 0.0;
};

// P u recomputed from the branch inverses and the measure CDF, independent of
// the stored matrix entries; used for honest residuals.
inline std::vector<double> transfer_apply_geometric(const UlamOperator& op,
                                                    std::span<const double> u) {
    const std::size_t nb = op.bins();
    if (u.size() != nb) throw validation_error("bin-vector length mismatch");
    std::vector<kahan_sum> acc(nb);
    for (const Branch& br : op.system.branches) {
        for (std::size_t j = 0; j < nb; ++j) {
            double a = (op.edges[j] - br.intercept) / br.slope;
            double b = (op.edges[j + 1] - br.intercept) / br.slope;
            if (a > b) std::swap(a, b);
            a = std::max(a, br.a);
            b = std::min(b, br.b);
            if (b <= a) continue;
            std::size_t i = detail::edge_bin(op.edges, a);
            while (i < nb && op.edges[i] < b) {
                const double lo = std::max(a, op.edges[i]);
                const double hi = std::min(b, op.edges[i + 1]);
                if (hi > lo) acc[j].add(u[i] * interval_measure(op.measure, lo, hi));
                ++i;
            }
        }
    }
    std::vector<double> out(nb);
    for (std::size_t j = 0; j < nb; ++j) out[j] = acc[j].value() / op.mass[j];
    return out;
}

inline MartingaleDecomposition martingale_decomposition(
    const UlamOperator& op, std::span<const std::vector<double>> phis, std::size_t n) {
    if (!op.exact)
        throw alignment_error(
            "martingale decomposition is defined on Markov-aligned operators only");
    if (phis.size() < n)
        throw validation_error("martingale decomposition needs n observables, got " +
                               std::to_string(phis.size()));
    const std::size_t nb = op.bins();
    for (const auto& phi : phis)
        if (phi.size() != nb) throw validation_error("observable length mismatch");

    MartingaleDecomposition out;
    out.h.reserve(n + 1);
    out.h.emplace_back(nb, 0.0);  // h_0 = 0
    for (std::size_t m = 0; m < n; ++m) {
        // h_{m+1} = P(phi_m + h_m): Horner form of Sum_k P^k phi_{m-k}.
        std::vector<double> u(nb);
        for (std::size_t i = 0; i < nb; ++i) u[i] = phis[m][i] + out.h[m][i];
        out.h.push_back(transfer_apply(op, u));

        MartingalePair pair;
        pair.u = std::move(u);
        pair.w = out.h[m + 1];
        const auto pu = transfer_apply_geometric(op, pair.u);
        for (std::size_t j = 0; j < nb; ++j)
            pair.residual_sup = std::max(pair.residual_sup, std::abs(pu[j] - pair.w[j]));
        out.max_residual_sup = std::max(out.max_residual_sup, pair.residual_sup);
        out.psi.push_back(std::move(pair));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Green-Kubo variance.
// ---------------------------------------------------------------------------

struct GreenKubo {
    double value = 0.0;       // Var(phi) + 2 Sum_{k=1}^{k_max} Cov(phi, phi o T^k)
    double tail_bound = 0.0;  // geometric bound on the truncated tail
    double lambda2 = 0.0;
    std::vector<double> cov;
};

inline GreenKubo green_kubo_variance(const UlamOperator& op, std::span<const double> phi,
                                     std::size_t k_max) {
    const double mean = integrate(op, phi);
    if (std::abs(mean) > 1e-12)
        throw validation_error("Green-Kubo observable must be centered (mean " +
                               std::to_string(mean) + ")");
    GreenKubo out;
    auto cd = correlation_decay(op, phi, phi, k_max);
    out.cov = std::move(cd.cov);
    out.lambda2 = cd.lambda2;
    kahan_sum acc;
    acc.add(out.cov[0]);
    for (std::size_t k = 1; k <= k_max; ++k) acc.add(2.0 * out.cov[k]);
    out.value = acc.value();
    if (out.lambda2 > 1e-14 && out.lambda2 < 1.0) {
        double c = 0.0;
        for (std::size_t k = 1; k <= k_max; ++k)
            c = std::max(c, std::abs(out.cov[k]) / std::pow(out.lambda2, static_cast<double>(k)));
        if (c == 0.0) c = std::abs(out.cov[0]);
        out.tail_bound = 2.0 * c * std::pow(out.lambda2, static_cast<double>(k_max + 1)) /
                         (1.0 - out.lambda2);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hoelder envelope of a ball indicator.
// ---------------------------------------------------------------------------

// g(z) = min(1, dist(z, complement of B(c, r+eps)) / eps): a 1/eps-Lipschitz
// function squeezed between the indicators of B(c,r) and B(c,r+eps).
struct HolderEnvelope {
    Space space = Space::circle;
    Point center;
    double r = 0.0;
    double eps = 0.0;

    double operator()(const Point& z) const {
        const double d = space_distance(space, z, center);
        return std::min(1.0, std::max(0.0, (r + eps - d) / eps));
    }

    double lipschitz() const { return 1.0 / eps; }
};

inline HolderEnvelope holder_envelope(const MapSystem& s, const Point& center, double r,
                                      double eps) {
    if (!(eps > 0.0)) throw domain_error("envelope width eps must be positive");
    if (!(r >= 0.0)) throw domain_error("negative ball radius");
    HolderEnvelope g;
    g.space = space_of(s.kind);
    g.center = center;
    g.r = r;
    g.eps = eps;
    return g;
}

// ---------------------------------------------------------------------------
// Exports.
// ---------------------------------------------------------------------------

inline std::string matrix_csv(const UlamOperator& op) {
    std::string out;
    char buf[32];
    const std::size_t nb = op.bins();
    for (std::size_t i = 0; i < nb; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", op.entry(i, j));
            out += buf;
            out += (j + 1 < nb) ? ',' : '\n';
        }
    }
    return out;
}

inline json spectra_json(const UlamOperator& op) {
    json j;
    j["bins"] = op.bins();
    j["exact"] = op.exact;
    j["lambda2"] = slem(op);
    j["stationary"] = stationary_distribution(op);
    j["mass"] = op.mass;
    return j;
}

}  // namespace reclab
