#pragma once

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <optional>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "nli4d/constellation.hpp"
#include "nli4d/integrate.hpp"
#include "nli4d/link.hpp"

namespace nli4d {

struct LabelingError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// What the SNR formula needs from the NLI side: the accumulated coefficient at
// the link's span count, its single-span value and the coherence exponent.
struct NliCoefficients {
    double eta_ss = 0.0;    // 1/W^2, both polarizations, n_spans spans
    double eta_tilde = 0.0; // single span
    double eps = 0.0;
    int n_spans = 1;

    // Power-law extrapolation to another span count.
    NliCoefficients at(int ns) const
    {
        return {eta_tilde * std::pow(double(ns), 1.0 + eps), eta_tilde, eps, ns};
    }
    static NliCoefficients from_fit(double eta1, double eps, int ns)
    {
        return NliCoefficients{eta1, eta1, eps, 1}.at(ns);
    }
};

struct SnrPoint {
    int n_spans = 0;
    double distance_km = 0.0;
    double power_w = 0.0;
    double snr_eff_db = 0.0;
    double sigma2_ase_total = 0.0; // Ns * sigma2_ASE
    double sigma2_ss = 0.0;
    double sigma2_sn = 0.0;
    double xi = 0.0;
    bool with_sn = true;
};

inline SnrPoint effective_snr(const NliCoefficients& eta, const LinkSpec& l, const WdmSpec& w, double P,
                              bool with_sn = true)
{
    if (!(P > 0.0))
        throw std::domain_error("effective_snr: launch power must be positive");
    if (eta.n_spans != l.n_spans)
        throw std::invalid_argument("effective_snr: NLI coefficients computed for a different span count");
    SnrPoint s;
    s.n_spans = l.n_spans;
    s.distance_km = l.n_spans * l.span_km;
    s.power_w = P;
    s.with_sn = with_sn;
    const double ase = ase_power(l, w);
    s.sigma2_ase_total = l.n_spans * ase;
    s.sigma2_ss = eta.eta_ss * P * P * P;
    s.xi = xi(l.n_spans, eta.eps).exact;
    s.sigma2_sn = with_sn ? 3.0 * s.xi * eta.eta_tilde * ase * P * P : 0.0;
    s.snr_eff_db = db10(P / (s.sigma2_ase_total + s.sigma2_ss + s.sigma2_sn));
    return s;
}

struct LaunchOptimum {
    double power_w;
    double snr_max_db;
};

inline LaunchOptimum optimal_launch_power(const NliCoefficients& eta, const LinkSpec& l, const WdmSpec& w,
                                          bool with_sn = true)
{
    if (!(eta.eta_ss > 0.0))
        throw std::domain_error("optimal_launch_power: eta must be positive");
    const double ase = l.n_spans * ase_power(l, w);
    if (!(ase > 0.0))
        throw std::domain_error("optimal_launch_power: no ASE, SNR grows without bound");
    // Bracket around the signal-signal-only optimum, in dBm.
    const double p0 = w_to_dbm(std::cbrt(ase / (2.0 * eta.eta_ss)));
    auto neg = [&](double dbm) { return -effective_snr(eta, l, w, dbm_to_w(dbm), with_sn).snr_eff_db; };
    // Brent's method: golden-section steps with parabolic acceleration.
    // 20 bits on a 40 dB bracket resolves well below 0.01 dB.
    auto r = boost::math::tools::brent_find_minima(neg, p0 - 20.0, p0 + 20.0, 20);
    return {dbm_to_w(r.first), -r.second};
}

// ---------------------------------------------------------------------------
// Bit-metric GMI over a 4D AWGN channel.

inline int bits_per_symbol(size_t M)
{
    if (M < 2 || (M & (M - 1)) != 0)
        throw LabelingError("GMI needs a power-of-two constellation size, got " + std::to_string(M));
    int m = 0;
    while ((size_t(1) << m) < M)
        ++m;
    return m;
}

inline void check_labels(const std::vector<unsigned>& labels, size_t M)
{
    const int m = bits_per_symbol(M);
    if (labels.size() != M)
        throw LabelingError("labeling size does not match the constellation");
    std::set<unsigned> seen;
    for (unsigned v : labels) {
        if (v >= (1u << m))
            throw LabelingError("label out of range for " + std::to_string(m) + " bits");
        if (!seen.insert(v).second)
            throw LabelingError("labeling is not a bijection");
    }
}

namespace detail {

// Shared bit-metric kernel: sum_k log2 P(b_k(i) | y) for the received y.
struct BitMetric {
    const Constellation4D& c;
    const std::vector<unsigned>& labels;
    int m;
    double inv2var;
    std::vector<double> logp, buf, sel;
    std::vector<std::vector<size_t>> subset; // [2k + bit] -> rows carrying that bit value

    BitMetric(const Constellation4D& cc, const std::vector<unsigned>& lab, double var)
        : c(cc), labels(lab), m(bits_per_symbol(cc.size())), inv2var(0.5 / var)
    {
        for (double p : c.probs)
            logp.push_back(p > 0 ? std::log(p) : -INFINITY);
        buf.resize(c.size());
        sel.resize(c.size());
        subset.resize(size_t(2 * m));
        for (int k = 0; k < m; ++k)
            for (size_t j = 0; j < c.size(); ++j)
                subset[size_t(2 * k + ((labels[j] >> k) & 1u))].push_back(j);
    }

    // Each exponential is taken once against the global maximum and reused by
    // every bit subset; a subset always holds row i, so its sum cannot underflow
    // at any node the Gauss-Hermite rule reaches.
    double operator()(size_t i, const std::array<double, 4>& y)
    {
        const size_t M = c.size();
        double mx = -INFINITY;
        for (size_t j = 0; j < M; ++j) {
            double d = 0.0;
            for (int q = 0; q < 4; ++q) {
                const double t = y[size_t(q)] - c.points[j][size_t(q)];
                d += t * t;
            }
            buf[j] = logp[j] - d * inv2var;
            mx = std::max(mx, buf[j]);
        }
        double all = 0.0;
        for (size_t j = 0; j < M; ++j) {
            const double t = buf[j] - mx;
            sel[j] = t > -700.0 ? std::exp(t) : 0.0;
            all += sel[j];
        }
        double acc = 0.0;
        for (int k = 0; k < m; ++k) {
            const auto& rows = subset[size_t(2 * k + ((labels[i] >> k) & 1u))];
            double sub = 0.0;
            for (size_t r : rows)
                sub += sel[r];
            acc += std::log(sub / all);
        }
        return acc / std::numbers::ln2;
    }
};

inline double bit_entropy(const Constellation4D& c, const std::vector<unsigned>& labels, int m)
{
    double h = 0.0;
    for (int k = 0; k < m; ++k) {
        double p1 = 0.0;
        for (size_t j = 0; j < c.size(); ++j)
            if ((labels[j] >> k) & 1u)
                p1 += c.probs[j];
        for (double p : {p1, 1.0 - p1})
            if (p > 0)
                h -= p * std::log2(p);
    }
    return h;
}

} // namespace detail

namespace detail {

// Bit-metric GMI with a tensor Gauss-Hermite rule over the first `dims` real
// dimensions; c must already be normalized and var is per real dimension.
inline double gmi_tensor(const Constellation4D& c, const std::vector<unsigned>& labels, double var, int order,
                         int dims)
{
    const auto gh = gauss_hermite(order);
    const int m = bits_per_symbol(c.size());
    BitMetric metric(c, labels, var);
    const double s = std::sqrt(2.0 * var);
    const double norm = std::pow(std::numbers::pi, -0.5 * dims);
    // The lightest nodes are dropped while their combined probability mass
    // stays below 1e-10; the per-node metric is bounded by a few hundred bits,
    // so the truncation error is far below 1e-6 bit.
    struct Node {
        std::array<double, 4> z;
        double w;
    };
    std::vector<Node> nodes;
    int total = 1;
    for (int d = 0; d < dims; ++d)
        total *= order;
    for (int n = 0; n < total; ++n) {
        Node nd{{0, 0, 0, 0}, norm};
        for (int d = 0, r = n; d < dims; ++d, r /= order) {
            nd.z[size_t(d)] = s * gh.x[size_t(r % order)];
            nd.w *= gh.w[size_t(r % order)];
        }
        nodes.push_back(nd);
    }
    std::sort(nodes.begin(), nodes.end(), [](const Node& p, const Node& q) { return p.w > q.w; });
    double dropped = 0.0;
    while (!nodes.empty() && dropped + nodes.back().w < 1e-10) {
        dropped += nodes.back().w;
        nodes.pop_back();
    }
    double acc = 0.0;
    for (size_t i = 0; i < c.size(); ++i) {
        if (c.probs[i] <= 0)
            continue;
        double ei = 0.0;
        for (const auto& nd : nodes) {
            std::array<double, 4> y = c.points[i];
            for (int q = 0; q < 4; ++q)
                y[size_t(q)] += nd.z[size_t(q)];
            ei += nd.w * metric(i, y);
        }
        acc += c.probs[i] * ei;
    }
    return std::max(0.0, bit_entropy(c, labels, m) + acc);
}

// A 4D set that is the Cartesian product of two 2D sets, with independent
// probabilities and every label bit tied to one polarization. Its bit-metric
// GMI is the sum of the two 2D ones, since the noise is independent per
// polarization.
struct ProductSplit {
    Constellation4D x, y; // 2D points stored in the first two coordinates
    std::vector<unsigned> lx, ly;
};

inline std::optional<ProductSplit> split_product(const Constellation4D& c, const std::vector<unsigned>& labels)
{
    const size_t M = c.size();
    const int m = bits_per_symbol(M);
    const double tol = 1e-9;
    auto index_of = [&](std::vector<cplx>& vals, cplx v) {
        for (size_t k = 0; k < vals.size(); ++k)
            if (std::abs(vals[k] - v) < tol)
                return k;
        vals.push_back(v);
        return vals.size() - 1;
    };
    std::vector<cplx> xs, ys;
    std::vector<size_t> ix(M), iy(M);
    for (size_t j = 0; j < M; ++j) {
        ix[j] = index_of(xs, c.ax(j));
        iy[j] = index_of(ys, c.ay(j));
    }
    if (xs.size() * ys.size() != M || xs.size() < 2 || ys.size() < 2)
        return std::nullopt;
    std::vector<long> row(M, -1);
    std::vector<double> px(xs.size(), 0.0), py(ys.size(), 0.0);
    for (size_t j = 0; j < M; ++j) {
        auto& slot = row[ix[j] * ys.size() + iy[j]];
        if (slot >= 0)
            return std::nullopt;
        slot = long(j);
        px[ix[j]] += c.probs[j];
        py[iy[j]] += c.probs[j];
    }
    for (size_t j = 0; j < M; ++j)
        if (std::abs(c.probs[j] - px[ix[j]] * py[iy[j]]) > 1e-12)
            return std::nullopt;
    // Which polarization drives each label bit.
    unsigned maskx = 0, masky = 0;
    for (int k = 0; k < m; ++k) {
        bool dep_x = true, dep_y = true; // bit constant along y (depends on x only), and vice versa
        for (size_t j = 0; j < M && (dep_x || dep_y); ++j) {
            const unsigned b = (labels[j] >> k) & 1u;
            if (((labels[size_t(row[ix[j] * ys.size()])] >> k) & 1u) != b)
                dep_x = false;
            if (((labels[size_t(row[iy[j]])] >> k) & 1u) != b)
                dep_y = false;
        }
        if (dep_x == dep_y)
            return std::nullopt;
        (dep_x ? maskx : masky) |= 1u << k;
    }
    auto compress = [](unsigned v, unsigned mask) {
        unsigned out = 0;
        int pos = 0;
        for (int k = 0; k < 32; ++k)
            if ((mask >> k) & 1u)
                out |= ((v >> k) & 1u) << pos++;
        return out;
    };
    ProductSplit sp;
    for (size_t a = 0; a < xs.size(); ++a) {
        sp.x.points.push_back({xs[a].real(), xs[a].imag(), 0.0, 0.0});
        sp.x.probs.push_back(px[a]);
        sp.lx.push_back(compress(labels[size_t(row[a * ys.size()])], maskx));
    }
    for (size_t b = 0; b < ys.size(); ++b) {
        sp.y.points.push_back({ys[b].real(), ys[b].imag(), 0.0, 0.0});
        sp.y.probs.push_back(py[b]);
        sp.ly.push_back(compress(labels[size_t(row[b])], masky));
    }
    if (size_t(1) << std::popcount(maskx) != xs.size() || size_t(1) << std::popcount(masky) != ys.size())
        return std::nullopt;
    try {
        check_labels(sp.lx, xs.size());
        check_labels(sp.ly, ys.size());
    } catch (const LabelingError&) {
        return std::nullopt;
    }
    return sp;
}

} // namespace detail

// snr_db is total signal power over total noise power across the four real
// dimensions; the constellation is normalized to unit energy first.
// Polarization-product formats are evaluated as two 2D rules, which is the
// same tensor rule factorized.
inline double gmi(const Constellation4D& c_in, const std::vector<unsigned>& labels, double snr_db, int order = 10)
{
    check_labels(labels, c_in.size());
    const auto c = normalize(c_in);
    const double var = 1.0 / (4.0 * undb10(snr_db));
    if (const auto sp = detail::split_product(c, labels))
        return detail::gmi_tensor(sp->x, sp->lx, var, order, 2) + detail::gmi_tensor(sp->y, sp->ly, var, order, 2);
    return detail::gmi_tensor(c, labels, var, order, 4);
}

// The plain 4D tensor rule, without the product shortcut.
inline double gmi_full_tensor(const Constellation4D& c_in, const std::vector<unsigned>& labels, double snr_db,
                              int order = 10)
{
    check_labels(labels, c_in.size());
    return detail::gmi_tensor(normalize(c_in), labels, 1.0 / (4.0 * undb10(snr_db)), order, 4);
}

// Plain Monte-Carlo estimate of the same quantity.
inline double gmi_monte_carlo(const Constellation4D& c_in, const std::vector<unsigned>& labels, double snr_db,
                              long draws, std::uint64_t seed = 1)
{
    check_labels(labels, c_in.size());
    const auto c = normalize(c_in);
    const double var = 1.0 / (4.0 * undb10(snr_db));
    const int m = bits_per_symbol(c.size());
    detail::BitMetric metric(c, labels, var);
    std::mt19937_64 rng(seed);
    std::discrete_distribution<size_t> pick(c.probs.begin(), c.probs.end());
    std::normal_distribution<double> nd(0.0, std::sqrt(var));
    double acc = 0.0;
    for (long n = 0; n < draws; ++n) {
        const size_t i = pick(rng);
        std::array<double, 4> y = c.points[i];
        for (auto& v : y)
            v += nd(rng);
        acc += metric(i, y);
    }
    return std::max(0.0, detail::bit_entropy(c, labels, m) + acc / double(draws));
}

inline double ngmi(double gmi_value, size_t M) { return gmi_value / bits_per_symbol(M); }

// Largest distance whose predicted NGMI stays at or above target. The NLI
// coefficient at each span count comes from eta_at.
inline double reach_at_ngmi(const Constellation4D& c, const std::vector<unsigned>& labels, LinkSpec l,
                            const WdmSpec& w, double P, double target,
                            const std::function<NliCoefficients(int)>& eta_at, bool with_sn = true,
                            int max_spans = 4096)
{
    if (!(target > 0.0 && target < 1.0))
        throw std::domain_error("reach_at_ngmi: target must lie in (0, 1)");
    auto ok = [&](int ns) {
        l.n_spans = ns;
        const auto s = effective_snr(eta_at(ns), l, w, P, with_sn);
        return ngmi(gmi(c, labels, s.snr_eff_db), c.size()) >= target;
    };
    if (!ok(1))
        return 0.0;
    int lo = 1, hi = 2;
    while (hi <= max_spans && ok(hi)) {
        lo = hi;
        hi *= 2;
    }
    if (hi > max_spans)
        return lo * l.span_km;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        (ok(mid) ? lo : hi) = mid;
    }
    return lo * l.span_km;
}

} // namespace nli4d
