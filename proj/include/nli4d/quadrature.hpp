#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "integrate.hpp"
#include "link.hpp"

// Frequencies below are normalized to the symbol rate (nu = f / Rs) and the
// beating triple follows nu3 = nu - nu1 + nu2, with nu2 the conjugated tone.
// A rectangular pulse is unity on [c*Delta - 1/2, c*Delta + 1/2] for channel c.

namespace nli4d {

struct ConvergenceError : std::runtime_error {
    double error_estimate;
    ConvergenceError(const std::string& what, double err) : std::runtime_error(what), error_estimate(err) {}
};

enum class QuadMethod { Factorized, Qmc };

struct QuadratureControl {
    double rel_tol = 1e-3;
    long max_evals = 20'000'000;
    std::uint64_t seed = 1;
    QuadMethod method = QuadMethod::Factorized;
    int outer_nodes = 34;
    double table_refine = 1.0;
    long qmc_points = 1 << 16;

    // Twice the resolution in every discretization knob.
    QuadratureControl doubled() const
    {
        QuadratureControl c = *this;
        c.rel_tol *= 0.5;
        c.outer_nodes *= 2;
        c.table_refine *= 2.0;
        c.qmc_points *= 2;
        return c;
    }
};

struct Win {
    double lo, hi;
    double len() const { return std::max(0.0, hi - lo); }
    bool empty() const { return !(hi > lo); }
    bool contains(double x) const { return x >= lo && x <= hi; }
};
inline Win operator&(Win a, Win b) { return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)}; }
inline Win operator+(Win a, double s) { return {a.lo + s, a.hi + s}; }
inline Win reflect(double s, Win a) { return {s - a.hi, s - a.lo}; } // { s - x : x in a }

// Cumulative integrals of the link function on a uniform grid in dbeta:
// G(d) = int_0^d |mu|^2 and H(d) = int_0^d mu. Values between nodes are
// completed by a short Gauss-Legendre rule, so lookups are exact to rounding.
class MuTable {
public:
    MuTable() = default;
    MuTable(double alpha, double L, int Ns, double smax, double refine = 1.0)
        : alpha_(alpha), L_(L), Ns_(Ns)
    {
        const double feature = std::min({2.0 * std::numbers::pi / (Ns * L), alpha, 2.0 * std::numbers::pi / L});
        step_ = feature / (24.0 * refine);
        const long n = long(std::ceil(std::max(smax, 10 * step_) / step_)) + 2;
        g_.assign(n, 0.0);
        h_.assign(n, 0.0);
        const auto& r = rule();
        for (long k = 1; k < n; ++k) {
            const double a = (k - 1) * step_;
            double gs = 0.0;
            cplx hs = 0.0;
            for (size_t i = 0; i < r.x.size(); ++i) {
                const cplx m = mu(a + 0.5 * step_ * (1.0 + r.x[i]));
                gs += r.w[i] * std::norm(m);
                hs += r.w[i] * m;
            }
            g_[k] = g_[k - 1] + 0.5 * step_ * gs;
            h_[k] = h_[k - 1] + 0.5 * step_ * hs;
        }
    }

    cplx mu(double s) const { return link_function(s, alpha_, L_, Ns_); }
    double step() const { return step_; }
    double smax() const { return (double(g_.size()) - 2) * step_; }

    double G(double d) const
    {
        if (d < 0)
            return -G(-d);
        const long k = locate(d);
        const double a = k * step_;
        const auto& r = rule();
        double s = 0.0;
        if (d > a) {
            for (size_t i = 0; i < r.x.size(); ++i)
                s += r.w[i] * std::norm(mu(a + 0.5 * (d - a) * (1.0 + r.x[i])));
            s *= 0.5 * (d - a);
        }
        return g_[k] + s;
    }

    cplx H(double d) const
    {
        if (d < 0)
            return -std::conj(H(-d));
        const long k = locate(d);
        const double a = k * step_;
        const auto& r = rule();
        cplx s = 0.0;
        if (d > a) {
            for (size_t i = 0; i < r.x.size(); ++i)
                s += r.w[i] * mu(a + 0.5 * (d - a) * (1.0 + r.x[i]));
            s *= 0.5 * (d - a);
        }
        return h_[k] + s;
    }

private:
    static const Rule& rule()
    {
        static const Rule r = gauss_legendre(6);
        return r;
    }
    long locate(double d) const
    {
        const long k = long(d / step_);
        if (k >= long(g_.size()) - 1)
            throw std::out_of_range("MuTable: argument " + std::to_string(d) + " beyond table range " +
                                    std::to_string(smax()));
        return k;
    }

    double alpha_ = 0, L_ = 0, step_ = 1;
    int Ns_ = 1;
    std::vector<double> g_;
    std::vector<cplx> h_;
};

enum class IslandKind { SCI, X1, X2, X3, X4, M1, M2, M3, M0 };

inline const char* to_string(IslandKind k)
{
    switch (k) {
    case IslandKind::SCI: return "SCI";
    case IslandKind::X1: return "X1";
    case IslandKind::X2: return "X2";
    case IslandKind::X3: return "X3";
    case IslandKind::X4: return "X4";
    case IslandKind::M1: return "M1";
    case IslandKind::M2: return "M2";
    case IslandKind::M3: return "M3";
    case IslandKind::M0: return "M0";
    }
    return "?";
}

// Channel triple (c1, c2, c3) hosting (nu1, nu2, nu3).
struct Island {
    IslandKind kind;
    int c1, c2, c3;

    int center() const { return c1 - c2 + c3; }
    // Number of chi terms attached to the island.
    int n_terms() const
    {
        if (kind == IslandKind::M0)
            return 1;
        return (kind == IslandKind::SCI || kind == IslandKind::X4) ? 11 : 3;
    }
    std::string name() const
    {
        return std::string(to_string(kind)) + "(" + std::to_string(c1) + "," + std::to_string(c2) + "," +
               std::to_string(c3) + ")";
    }
    bool operator<(const Island& o) const
    {
        return std::tie(kind, c1, c2, c3) < std::tie(o.kind, o.c1, o.c2, o.c3);
    }
    bool operator==(const Island& o) const
    {
        return kind == o.kind && c1 == o.c1 && c2 == o.c2 && c3 == o.c3;
    }
};

// Whether the island's support can reach the band of interest: all four
// frequencies lie within 1/2 of their centers.
inline bool reaches_coi(int c1, int c2, int c3, double delta)
{
    return std::abs((c1 - c2 + c3) * delta) < 2.0;
}

struct Classification {
    IslandKind kind;
    bool mirror; // (c3, c2, c1) ordering accounted for inside a coefficient
    Island primary;
};

// Maps any channel triple to the island that carries it. Mirror triples
// (c1 <-> c3 swapped) are folded into the coefficient of the primary island.
inline Classification classify(int c1, int c2, int c3)
{
    auto make = [](IslandKind k, bool m, int a, int b, int c) { return Classification{k, m, {k, a, b, c}}; };
    if (c1 == c2 && c2 == c3)
        return make(c1 == 0 ? IslandKind::SCI : IslandKind::X4, false, c1, c2, c3);
    if (c1 != c2 && c2 != c3 && c1 != c3)
        return make(IslandKind::M0, false, c1, c2, c3);
    if (c1 == c3) {
        // (a, b, a)
        if (c1 == 0)
            return make(IslandKind::X3, false, c1, c2, c3);
        return make(IslandKind::M3, false, c1, c2, c3);
    }
    // Exactly two equal and c1 != c3: either (b, a, a) or (a, a, b).
    const bool mirrored = (c1 == c2);
    const int single = mirrored ? c3 : c1;
    const int pair = mirrored ? c1 : c2;
    if (single == 0)
        return make(IslandKind::X1, mirrored, 0, pair, pair);
    if (pair == 0)
        return make(IslandKind::X2, mirrored, single, 0, 0);
    if (single == -1 && pair >= 1)
        return make(IslandKind::M1, mirrored, single, pair, pair);
    if (single == 1 && pair <= -1)
        return make(IslandKind::M1, mirrored, single, pair, pair);
    return make(IslandKind::M2, mirrored, single, pair, pair);
}

// Every primary island (both sides of the COI) whose support meets the COI.
inline std::vector<Island> enumerate_islands(const WdmSpec& w)
{
    const int H = w.half();
    const double d = w.spacing_norm();
    std::vector<Island> out;
    std::vector<Island> seen;
    for (int c1 = -H; c1 <= H; ++c1)
        for (int c2 = -H; c2 <= H; ++c2)
            for (int c3 = -H; c3 <= H; ++c3) {
                if (!reaches_coi(c1, c2, c3, d))
                    continue;
                const auto cl = classify(c1, c2, c3);
                if (std::find(out.begin(), out.end(), cl.primary) == out.end())
                    out.push_back(cl.primary);
            }
    std::sort(out.begin(), out.end());
    return out;
}

// Sign-flipped copy; its band-integrated chi values are identical.
inline Island flipped(const Island& i) { return {i.kind, -i.c1, -i.c2, -i.c3}; }

inline Island canonical(const Island& i)
{
    Island f = flipped(i);
    Island a = i;
    if (i.kind == IslandKind::M0) {
        // chi1 is symmetric under nu1 <-> nu3.
        if (a.c1 > a.c3)
            std::swap(a.c1, a.c3);
        if (f.c1 > f.c3)
            std::swap(f.c1, f.c3);
    }
    return std::min(a, f);
}

struct ChiValue {
    cplx value{};
    double error = 0.0;
    long evals = 0;
};

namespace detail {

inline int phase_panels(double tv_s, double ns_l)
{
    const double n = tv_s * ns_l / (4.0 * std::numbers::pi) + 1.0;
    return int(std::clamp(n, 1.0, 20000.0));
}

// Randomized Halton points (Cranley-Patterson rotation).
class Halton {
public:
    Halton(int dim, std::uint64_t seed) : dim_(dim), shift_(dim)
    {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& s : shift_)
            s = u(rng);
    }
    void point(long i, double* x) const
    {
        static constexpr int primes[] = {2, 3, 5, 7, 11, 13};
        for (int d = 0; d < dim_; ++d) {
            double f = 1.0, r = 0.0;
            long n = i + 1;
            const int b = primes[d];
            while (n > 0) {
                f /= b;
                r += f * (n % b);
                n /= b;
            }
            r += shift_[d];
            x[d] = r - std::floor(r);
        }
    }

private:
    int dim_;
    std::vector<double> shift_;
};

} // namespace detail

// Evaluates chi terms for one link / WDM grid. Band-integrated values are
// cached per (island, term), independent of the modulation format.
class ChiEngine {
public:
    ChiEngine(const LinkSpec& link, const WdmSpec& wdm, const QuadratureControl& ctrl = {})
        : link_(link), wdm_(wdm), ctrl_(ctrl)
    {
        validate(link_);
        validate(wdm_);
        kappa_ = kappa(link_, wdm_);
        delta_ = wdm_.spacing_norm();
        nsl_ = link_.n_spans * link_.span_km;
        const double R = wdm_.half() * delta_ + 1.0 + delta_;
        const double smax = std::abs(kappa_) * R * (2.0 * R) * 1.05 + 1.0;
        table_ = MuTable(link_.alpha, link_.span_km, link_.n_spans, smax, ctrl_.table_refine);
        scale_ = link_.n_spans * effective_length(link_);
    }

    const LinkSpec& link() const { return link_; }
    const WdmSpec& wdm() const { return wdm_; }
    const QuadratureControl& control() const { return ctrl_; }
    double kappa_norm() const { return kappa_; }
    double delta() const { return delta_; }
    const MuTable& table() const { return table_; }

    Win window(int c) const { return {c * delta_ - 0.5, c * delta_ + 0.5}; }

    cplx M(double s) const { return table_.mu(s); }

    // chi term (1-based) of an island at normalized frequency nu.
    ChiValue chi(const Island& is, int term, double nu) const
    {
        if (term < 1 || term > is.n_terms())
            throw std::domain_error("chi: term " + std::to_string(term) + " invalid for " + is.name());
        check_island(is);
        if (ctrl_.method == QuadMethod::Qmc || wdm_.pulse != Pulse::Rect || wdm_.rolloff > 0)
            return chi_qmc(is, term, nu);
        return chi_factorized(is, term, nu);
    }

    // Integral of a chi term over the COI band.
    ChiValue band_integral(const Island& is, int term) const
    {
        if ((is.kind == IslandKind::X3 || is.kind == IslandKind::M3) && term == 2)
            term = 1;
        const Island key = canonical(is);
        const auto k = std::make_pair(key, term);
        if (auto it = bank_.find(k); it != bank_.end())
            return it->second;
        const ChiValue v = band_integral_uncached(key, term);
        bank_.emplace(k, v);
        return v;
    }

    size_t cache_size() const { return bank_.size(); }

    // Outer support of chi(nu) within the COI band, split where the window
    // combinatorics change.
    std::vector<double> band_pieces(const Island& is) const
    {
        const double C = is.center() * delta_;
        double lo = std::max(-0.5, C - 1.5), hi = std::min(0.5, C + 1.5);
        std::vector<double> e;
        if (!(hi > lo))
            return e;
        e.push_back(lo);
        for (double b : {C - 0.5, C + 0.5, 0.0, C - 1.0, C + 1.0})
            if (b > lo + 1e-12 && b < hi - 1e-12)
                e.push_back(b);
        e.push_back(hi);
        std::sort(e.begin(), e.end());
        return e;
    }

    // --- Building blocks, exposed for testing. ---

    // int_w mu(p t + q) dt
    cplx lin_int(double p, double q, Win w) const
    {
        if (w.empty())
            return 0.0;
        if (std::abs(p) * w.len() <= table_.step())
            return gl_direct(w, [&](double t) { return M(p * t + q); });
        return (table_.H(p * w.hi + q) - table_.H(p * w.lo + q)) / p;
    }

    // int_w |mu(p t + q)|^2 dt
    double lin_int2(double p, double q, Win w) const
    {
        if (w.empty())
            return 0.0;
        if (std::abs(p) * w.len() <= table_.step())
            return gl_direct(w, [&](double t) { return cplx(std::norm(M(p * t + q))); }).real();
        return (table_.G(p * w.hi + q) - table_.G(p * w.lo + q)) / p;
    }

    // int_w mu(a2 t^2 + a1 t + a0) dt, adaptively.
    QuadResult quad_int(double a2, double a1, double a0, Win w, double abs_tol) const
    {
        QuadResult r;
        if (w.empty())
            return r;
        auto s = [&](double t) { return (a2 * t + a1) * t + a0; };
        double tv = std::abs(s(w.hi) - s(w.lo));
        std::vector<double> br;
        if (a2 != 0.0) {
            const double v = -a1 / (2 * a2);
            if (v > w.lo && v < w.hi) {
                tv = std::abs(s(w.lo) - s(v)) + std::abs(s(w.hi) - s(v));
                br.push_back(v);
            }
        }
        AdaptiveOptions o;
        o.rel_tol = inner_rel();
        o.abs_tol = abs_tol;
        o.max_evals = inner_budget();
        o.init_panels = detail::phase_panels(tv, nsl_);
        return integrate([&](double t) { return M(s(t)); }, w.lo, w.hi, o, br);
    }

private:
    double inner_rel() const { return ctrl_.rel_tol * 1e-2; }
    long inner_budget() const { return std::max<long>(2000, ctrl_.max_evals / 50); }
    double inner_abs(double width) const { return ctrl_.rel_tol * 1e-3 * scale_ * width * floor_; }

    template <class F>
    static cplx gl_direct(Win w, F&& f)
    {
        static const Rule r = gauss_legendre(8);
        cplx s = 0.0;
        const double c = 0.5 * (w.lo + w.hi), h = 0.5 * (w.hi - w.lo);
        for (size_t i = 0; i < r.x.size(); ++i)
            s += r.w[i] * cplx(f(c + h * r.x[i]));
        return s * h;
    }

    void check_island(const Island& is) const
    {
        const int H = wdm_.half();
        for (int c : {is.c1, is.c2, is.c3})
            if (std::abs(c) > H)
                throw std::domain_error("island " + is.name() + " references a channel outside the grid");
        const auto cl = classify(is.c1, is.c2, is.c3);
        if (cl.kind != is.kind || cl.mirror)
            throw std::domain_error("island " + is.name() + " is not a primary island of its kind");
    }

    // Outer adaptive integral with budget bookkeeping shared with inner calls.
    struct Tally {
        long evals = 0;
        double inner_err = 0.0;
        bool ok = true;
    };

    template <class F>
    ChiValue outer(F&& f, Win w, std::vector<double> br, Tally& t) const
    {
        ChiValue out;
        if (w.empty())
            return out;
        AdaptiveOptions o;
        o.rel_tol = ctrl_.rel_tol * 0.25;
        o.abs_tol = ctrl_.rel_tol * 1e-4 * scale_ * scale_ * floor_;
        o.max_evals = std::max<long>(3000, ctrl_.max_evals / 20);
        auto r = integrate(f, w.lo, w.hi, o, br);
        t.evals += r.evals;
        t.ok = t.ok && r.converged;
        out.value = r.value;
        out.error = r.error + t.inner_err;
        out.evals = t.evals;
        return out;
    }

    ChiValue finish(ChiValue v, const Tally& t, const Island& is, int term) const
    {
        v.evals = t.evals;
        if (!t.ok || v.evals > ctrl_.max_evals) {
            const double target = ctrl_.rel_tol * std::abs(v.value);
            if (v.error > 10 * target + 1e-300)
                throw ConvergenceError("chi term " + std::to_string(term) + " of " + is.name() +
                                           " did not converge within the evaluation budget",
                                       v.error);
        }
        return v;
    }

    // Two-tone (chi1-like) amplitude integrand at nu1 for windows (W1,W2,W3).
    Win inner2(int c2, int c3, double nu, double nu1) const { return window(c2) & (window(c3) + (nu1 - nu)); }

    ChiValue chi1(const Island& is, double nu, Tally& t) const
    {
        const Win w1 = window(is.c1) & Win{nu + (is.c2 - is.c3) * delta_ - 1, nu + (is.c2 - is.c3) * delta_ + 1};
        auto f = [&](double x) {
            ++t.evals;
            const double p = kappa_ * (nu - x);
            return lin_int2(p, -p * x, inner2(is.c2, is.c3, nu, x));
        };
        return outer(f, w1, {nu, nu + (is.c2 - is.c3) * delta_}, t);
    }

    // A(nu) = int int mu over the island support.
    ChiValue amp(const Island& is, double nu, Tally& t) const
    {
        const Win w1 = window(is.c1) & Win{nu + (is.c2 - is.c3) * delta_ - 1, nu + (is.c2 - is.c3) * delta_ + 1};
        auto f = [&](double x) {
            ++t.evals;
            const double p = kappa_ * (nu - x);
            return lin_int(p, -p * x, inner2(is.c2, is.c3, nu, x));
        };
        return outer(f, w1, {nu, nu + (is.c2 - is.c3) * delta_}, t);
    }

    // int |C(nu1)|^2 dnu1, C the inner amplitude over nu2.
    ChiValue ctype(const Island& is, double nu, Tally& t) const
    {
        const Win w1 = window(is.c1) & Win{nu + (is.c2 - is.c3) * delta_ - 1, nu + (is.c2 - is.c3) * delta_ + 1};
        auto f = [&](double x) {
            ++t.evals;
            const double p = kappa_ * (nu - x);
            return std::norm(lin_int(p, -p * x, inner2(is.c2, is.c3, nu, x)));
        };
        return outer(f, w1, {nu, nu + (is.c2 - is.c3) * delta_}, t);
    }

    // D(nu2) = int mu(kappa (nu - nu1)(nu2 - nu1)) dnu1 over W1 and nu3 in W3.
    QuadResult dfun(int c1, int c3, double nu, double nu2) const
    {
        const Win w = window(c1) & reflect(nu + nu2, window(c3));
        return quad_int(kappa_, -kappa_ * (nu + nu2), kappa_ * nu * nu2, w, inner_abs(1.0));
    }

    ChiValue dtype(const Island& is, double nu, Tally& t) const
    {
        const double sum = (is.c1 + is.c3) * delta_;
        const Win w2 = window(is.c2) & Win{sum - 1 - nu, sum + 1 - nu};
        auto f = [&](double x) {
            auto d = dfun(is.c1, is.c3, nu, x);
            t.evals += d.evals;
            t.inner_err = std::max(t.inner_err, d.error);
            t.ok = t.ok && d.converged;
            return std::norm(d.value);
        };
        return outer(f, w2, {sum - nu, nu}, t);
    }

    // Product of two link functions linear in nu2; `mirror_c` selects the
    // second argument form.
    ChiValue two_mu(const Island& is, double nu, bool mirror, Tally& t) const
    {
        const double c = is.c2 * delta_;
        const Win w1 = window(is.c1) & Win{nu + (is.c2 - is.c3) * delta_ - 1, nu + (is.c2 - is.c3) * delta_ + 1};
        auto f = [&](double x) -> cplx {
            const double p = kappa_ * (nu - x);
            Win w = inner2(is.c2, is.c3, nu, x);
            if (mirror)
                w = w & (window(is.c2) + (nu - x));
            if (w.empty())
                return 0.0;
            // Second mismatch: -p (nu2 + nu), or p (2c - nu2 - nu) for the mirror form.
            const double q2 = mirror ? p * (2 * c - nu) : -p * nu;
            auto g = [&](double y) { return M(p * (y - x)) * std::conj(M(-p * y + q2)); };
            AdaptiveOptions o;
            o.rel_tol = inner_rel();
            o.abs_tol = inner_abs(w.len()) * scale_;
            o.max_evals = inner_budget();
            o.init_panels = detail::phase_panels(2 * std::abs(p) * w.len(), nsl_);
            auto r = integrate(g, w.lo, w.hi, o);
            t.evals += r.evals;
            t.inner_err = std::max(t.inner_err, r.error);
            t.ok = t.ok && r.converged;
            return r.value;
        };
        return outer(f, w1, {nu, nu + (is.c2 - is.c3) * delta_}, t);
    }

    QuadResult bfun(double nu) const
    {
        // (nu - t)(-nu - t) = t^2 - nu^2
        return quad_int(kappa_, 0.0, -kappa_ * nu * nu, window(0), inner_abs(1.0));
    }

    // Self-channel terms on the base window, at (possibly shifted) nu.
    ChiValue sci_term(int term, double nu, Tally& t) const
    {
        const Island s{IslandKind::SCI, 0, 0, 0};
        const Win W = window(0);
        switch (term) {
        case 1:
            return chi1(s, nu, t);
        case 2:
            return two_mu(s, nu, false, t);
        case 3: {
            if (!W.contains(nu))
                return {};
            auto b = bfun(nu);
            t.evals += b.evals;
            return {std::norm(b.value), 2 * std::abs(b.value) * b.error, t.evals};
        }
        case 4: {
            auto f = [&](double u) {
                ++t.evals;
                const cplx i1 = lin_int(kappa_ * u, -kappa_ * u * nu, W & (W + u));
                const double p2 = kappa_ * (nu - u);
                const cplx i2 = lin_int(p2, -p2 * u, W & (W + (u - nu)));
                return i1 * std::conj(i2);
            };
            return outer(f, W & reflect(nu, W), {0.0, nu}, t);
        }
        case 5: {
            auto f = [&](double v) {
                const cplx i1 = lin_int(-kappa_ * v, kappa_ * v * nu, W & (W + (-v)));
                auto i2 = quad_int(kappa_, -kappa_ * (nu + v), kappa_ * nu * v, W & reflect(nu + v, W),
                                   inner_abs(1.0));
                t.evals += i2.evals;
                t.inner_err = std::max(t.inner_err, i2.error * std::abs(i1));
                t.ok = t.ok && i2.converged;
                return i1 * std::conj(i2.value);
            };
            return outer(f, W & (W + (-nu)), {0.0, nu, -nu}, t);
        }
        case 6: {
            auto f = [&](double x) {
                auto d = dfun(0, 0, nu, x);
                auto i2 = quad_int(kappa_, kappa_ * x, -kappa_ * nu * (nu + x), W & (W + (-x)), inner_abs(1.0));
                t.evals += d.evals + i2.evals;
                t.inner_err = std::max(t.inner_err, d.error * std::abs(i2.value) + i2.error * std::abs(d.value));
                t.ok = t.ok && d.converged && i2.converged;
                return d.value * std::conj(i2.value);
            };
            return outer(f, W & (W + (-nu)), {0.0, nu, -nu}, t);
        }
        case 7: {
            if (!W.contains(nu))
                return {};
            auto b = bfun(nu);
            t.evals += b.evals;
            auto a = amp(s, nu, t);
            return {b.value * std::conj(a.value), std::abs(b.value) * a.error + std::abs(a.value) * b.error,
                    t.evals};
        }
        case 8:
            return ctype(s, nu, t);
        case 9: {
            auto f = [&](double x) {
                const double p = kappa_ * (nu - x);
                const cplx c = lin_int(p, -p * x, W & (W + (x - nu)));
                auto e = quad_int(kappa_, kappa_ * (x - nu), -kappa_ * nu * x, W & reflect(nu - x, W),
                                  inner_abs(1.0));
                t.evals += e.evals;
                t.inner_err = std::max(t.inner_err, e.error * std::abs(c));
                t.ok = t.ok && e.converged;
                return c * std::conj(e.value);
            };
            return outer(f, W & Win{nu - 1, nu + 1}, {nu}, t);
        }
        case 10:
            return dtype(s, nu, t);
        case 11: {
            auto a = amp(s, nu, t);
            return {std::norm(a.value), 2 * std::abs(a.value) * a.error, t.evals};
        }
        }
        throw std::domain_error("sci_term: bad term");
    }

    ChiValue chi_factorized(const Island& is, int term, double nu) const
    {
        Tally t;
        ChiValue v;
        switch (is.kind) {
        case IslandKind::SCI:
            v = sci_term(term, nu, t);
            break;
        case IslandKind::X4:
            v = sci_term(term, nu - is.c1 * delta_, t);
            break;
        case IslandKind::M0:
            v = chi1(is, nu, t);
            break;
        case IslandKind::X1:
        case IslandKind::M1:
        case IslandKind::M2:
            v = term == 1 ? chi1(is, nu, t) : term == 2 ? two_mu(is, nu, true, t) : ctype(is, nu, t);
            break;
        case IslandKind::X2:
            v = term == 1 ? chi1(is, nu, t) : term == 2 ? two_mu(is, nu, false, t) : ctype(is, nu, t);
            break;
        case IslandKind::X3:
        case IslandKind::M3:
            // The second term equals the first: mu is symmetric under nu1 <-> nu3.
            v = term == 3 ? dtype(is, nu, t) : chi1(is, nu, t);
            break;
        }
        return finish(v, t, is, term);
    }

    // Peak |chi1| of the island relative to the self-channel scale. Absolute
    // tolerances shrink with it so weak islands are resolved relative to
    // themselves rather than to the SCI magnitude.
    double island_floor(const Island& is, const std::vector<double>& e) const
    {
        if (e.size() < 2)
            return 1.0;
        double peak = 0.0;
        for (double u : {0.2, 0.5, 0.8})
            peak = std::max(peak, std::abs(chi_factorized(is, 1, e.front() + u * (e.back() - e.front())).value));
        return std::clamp(peak / (scale_ * scale_), 1e-2, 1.0);
    }

    ChiValue band_integral_uncached(const Island& is, int term) const
    {
        ChiValue total;
        const auto e = band_pieces(is);
        struct Restore {
            double& f;
            ~Restore() { f = 1.0; }
        } restore{floor_};
        floor_ = 1.0;
        if (ctrl_.method == QuadMethod::Factorized && wdm_.pulse == Pulse::Rect && !(wdm_.rolloff > 0))
            floor_ = island_floor(is, e);
        // Terms built on B(nu) carry a phase kappa nu^2 over the whole link
        // and oscillate across the band; a fixed rule would alias them.
        const bool chirped = (is.kind == IslandKind::SCI || is.kind == IslandKind::X4) && (term == 3 || term == 7);
        if (chirped && ctrl_.method == QuadMethod::Factorized && wdm_.pulse == Pulse::Rect && !(wdm_.rolloff > 0)) {
            const double shift = is.kind == IslandKind::X4 ? is.c1 * delta_ : 0.0;
            for (size_t k = 0; k + 1 < e.size(); ++k) {
                const double a = e[k] - shift, b = e[k + 1] - shift;
                double pt_err = 0.0;
                auto f = [&](double nu) {
                    const ChiValue v = chi(is, term, nu);
                    total.evals += v.evals;
                    pt_err = std::max(pt_err, v.error);
                    return v.value;
                };
                AdaptiveOptions o;
                o.rel_tol = ctrl_.rel_tol * 0.25;
                o.abs_tol = ctrl_.rel_tol * 1e-4 * scale_ * scale_ * floor_;
                o.max_evals = std::max<long>(3000, ctrl_.max_evals / 20);
                o.init_panels = std::max(ctrl_.outer_nodes / 8,
                                         detail::phase_panels(std::abs(kappa_ * (b * b - a * a)), nsl_));
                const auto r = integrate(f, e[k], e[k + 1], o, {shift});
                total.value += r.value;
                total.error += r.error + pt_err * (e[k + 1] - e[k]);
                if (!r.converged && r.error > 10 * ctrl_.rel_tol * std::abs(r.value))
                    throw ConvergenceError("chi term " + std::to_string(term) + " of " + is.name() +
                                               " did not converge over the band",
                                           r.error);
            }
            return total;
        }
        const Rule r = gauss_legendre(ctrl_.outer_nodes);
        for (size_t k = 0; k + 1 < e.size(); ++k) {
            int panels = 1;
            if (chirped) {
                const double shift = is.kind == IslandKind::X4 ? is.c1 * delta_ : 0.0;
                const double a = e[k] - shift, b = e[k + 1] - shift;
                panels = detail::phase_panels(std::abs(kappa_ * (b * b - a * a)), nsl_);
            }
            const double step = (e[k + 1] - e[k]) / panels;
            for (int j = 0; j < panels; ++j) {
                const double c = e[k] + (j + 0.5) * step, h = 0.5 * step;
                for (size_t i = 0; i < r.x.size(); ++i) {
                    const ChiValue v = chi(is, term, c + h * r.x[i]);
                    total.value += h * r.w[i] * v.value;
                    total.error += h * r.w[i] * v.error;
                    total.evals += v.evals;
                }
            }
        }
        return total;
    }

public:
    // Literal integrand of a chi term at table variables x (f1, f2, f2', f4).
    cplx literal_integrand(const Island& is, int term, double nu, const double* x) const
    {
        auto P = [&](int c, double f) { return pulse(f - c * delta_); };
        auto mu3 = [&](double f1, double f2, double f) { return M(kappa_ * (f - f1) * (f2 - f1)); };
        const bool sci = is.kind == IslandKind::SCI || is.kind == IslandKind::X4;
        if (sci) {
            const double f = nu - is.c1 * delta_;
            auto Q = [&](double y) { return P(0, y); };
            const double f1 = x[0], f2 = x[1], g = x[2], f4 = x[3];
            switch (term) {
            case 1:
                return std::norm(Q(f1) * Q(f2) * Q(f - f1 + f2)) * std::norm(mu3(f1, f2, f));
            case 2:
                return std::norm(Q(f1) * Q(f2) * Q(f - f1 + f2)) * mu3(f1, f2, f) *
                       std::conj(mu3(f1, f1 - f2 - f, f));
            case 3:
                return std::norm(Q(f) * Q(f1) * Q(f2)) * mu3(f1, -f, f) * std::conj(mu3(f2, -f, f));
            case 4:
                return Q(f1) * Q(f2) * Q(f - f1 + f2) * Q(f1 - f2) * Q(g) * Q(f - f1 + f2 + g) * mu3(f1, f2, f) *
                       std::conj(mu3(f1 - f2, g, f));
            case 5:
                return Q(f1) * Q(f2) * Q(f - f1 + f2) * Q(f2 - f1) * Q(g) * Q(f - f1 + f2 - g) * mu3(f1, f2, f) *
                       std::conj(mu3(g, f2 - f1, f));
            case 6:
                return Q(f1) * Q(f2) * Q(f - f1 + f2) * Q(f + f2) * Q(g) * Q(f2 + g) * mu3(f1, f2, f) *
                       std::conj(mu3(g, -f - f2, f));
            case 7:
                return Q(f) * std::norm(Q(f1)) * Q(f2) * Q(g) * Q(f - f2 + g) * mu3(f1, -f, f) *
                       std::conj(mu3(f2, g, f));
            case 8:
                return std::norm(Q(f1)) * Q(f2) * Q(f - f1 + f2) * Q(g) * Q(f - f1 + g) * mu3(f1, f2, f) *
                       std::conj(mu3(f1, g, f));
            case 9:
                return std::norm(Q(f1)) * Q(f2) * Q(f - f1 + f2) * Q(g) * Q(f - f1 - g) * mu3(f1, f2, f) *
                       std::conj(mu3(g, -f1, f));
            case 10:
                return Q(f1) * std::norm(Q(f2)) * Q(f - f1 + f2) * Q(g) * Q(f + f2 - g) * mu3(f1, f2, f) *
                       std::conj(mu3(g, f2, f));
            case 11:
                return Q(f1) * Q(f2) * Q(f - f1 + f2) * Q(g) * Q(f4) * Q(f - g + f4) * mu3(f1, f2, f) *
                       std::conj(mu3(g, f4, f));
            }
        }
        const double f = nu, f1 = x[0], f2 = x[1], g = x[2];
        const int a = is.c1, b = is.c2, c = is.c3;
        const double n1 = std::norm(P(a, f1));
        switch (term) {
        case 1:
            return n1 * std::norm(P(b, f2)) * std::norm(P(c, f - f1 + f2)) * std::norm(mu3(f1, f2, f));
        case 2:
            if (is.kind == IslandKind::X3 || is.kind == IslandKind::M3)
                return n1 * std::norm(P(b, f2)) * std::norm(P(c, f - f1 + f2)) * mu3(f1, f2, f) *
                       std::conj(mu3(f - f1 + f2, f2, f));
            if (is.kind == IslandKind::X2)
                return n1 * std::norm(P(b, f2)) * std::norm(P(c, f - f1 + f2)) * mu3(f1, f2, f) *
                       std::conj(mu3(f1, f1 - f2 - f, f));
            {
                const double cc = b * delta_;
                return n1 * P(b, f2) * P(b, f - f1 - f2 + 2 * cc) * P(c, f - f1 + f2) * P(b, 2 * cc - f2) *
                       mu3(f1, f2, f) * std::conj(mu3(f1, f1 - f2 - f + 2 * cc, f));
            }
        case 3:
            if (is.kind == IslandKind::X3 || is.kind == IslandKind::M3)
                return P(a, f1) * std::norm(P(b, f2)) * P(c, f - f1 + f2) * P(a, g) * P(c, f - g + f2) *
                       mu3(f1, f2, f) * std::conj(mu3(g, f2, f));
            return n1 * P(b, f2) * P(b, g) * P(c, f - f1 + f2) * P(c, f - f1 + g) * mu3(f1, f2, f) *
                   std::conj(mu3(f1, g, f));
        }
        throw std::domain_error("literal_integrand: bad term");
    }

    // Integration box of the literal integrand (one window per variable).
    std::vector<Win> literal_box(const Island& is, int term) const
    {
        const bool sci = is.kind == IslandKind::SCI || is.kind == IslandKind::X4;
        const double half = 0.5 * (1.0 + wdm_.rolloff);
        auto win = [&](int c) { return Win{c * delta_ - half, c * delta_ + half}; };
        if (sci) {
            const Win W{-half, half};
            const int dim = (term <= 3) ? 2 : (term == 11 ? 4 : 3);
            return std::vector<Win>(dim, W);
        }
        std::vector<Win> box{win(is.c1), win(is.c2)};
        if (term == 3)
            box.push_back((is.kind == IslandKind::X3 || is.kind == IslandKind::M3) ? win(is.c1) : win(is.c2));
        return box;
    }

    // Spectral shape on the normalized axis (unit height in band).
    double pulse(double x) const
    {
        const double r = wdm_.rolloff;
        const double ax = std::abs(x);
        if (wdm_.pulse == Pulse::Rect || r == 0.0)
            return ax <= 0.5 ? 1.0 : 0.0;
        if (ax <= 0.5 * (1 - r))
            return 1.0;
        if (ax > 0.5 * (1 + r))
            return 0.0;
        // Root-raised-cosine amplitude.
        return std::sqrt(0.5 * (1 + std::cos(std::numbers::pi / r * (ax - 0.5 * (1 - r)))));
    }

    // Randomized quasi-Monte-Carlo estimate with two independent replicas.
    ChiValue chi_qmc(const Island& is, int term, double nu) const
    {
        const auto box = literal_box(is, term);
        const int dim = int(box.size());
        double vol = 1.0;
        for (auto& w : box)
            vol *= w.len();
        const long n = std::max<long>(1024, ctrl_.qmc_points);
        cplx est[2];
        std::vector<double> u(dim), x(4, 0.0);
        for (int rep = 0; rep < 2; ++rep) {
            detail::Halton h(dim, ctrl_.seed * 7919 + 104729 * rep + 31 * term + 1009 * is.c2);
            cplx s = 0.0;
            for (long i = 0; i < n; ++i) {
                h.point(i, u.data());
                for (int d = 0; d < dim; ++d)
                    x[d] = box[d].lo + u[d] * box[d].len();
                s += literal_integrand(is, term, nu, x.data());
            }
            est[rep] = s * (vol / double(n));
        }
        return {0.5 * (est[0] + est[1]), 0.5 * std::abs(est[0] - est[1]), 2 * n};
    }

private:
    LinkSpec link_;
    WdmSpec wdm_;
    QuadratureControl ctrl_;
    double kappa_ = 0, delta_ = 1, nsl_ = 1, scale_ = 1;
    mutable double floor_ = 1.0;
    MuTable table_;
    mutable std::map<std::pair<Island, int>, ChiValue> bank_;
};

struct ChiSet {
    std::vector<ChiValue> terms; // index 0 holds term 1
    Island island{};
};

inline ChiSet chi_set(const ChiEngine& e, const Island& is, double nu)
{
    ChiSet s;
    s.island = is;
    for (int t = 1; t <= is.n_terms(); ++t)
        s.terms.push_back(e.chi(is, t, nu));
    return s;
}

inline ChiSet chi_sci(const ChiEngine& e, double nu) { return chi_set(e, {IslandKind::SCI, 0, 0, 0}, nu); }

// X1, X2 and X3 terms for interfering channel h (empty islands are skipped).
inline std::vector<ChiSet> chi_xci(const ChiEngine& e, int h, double nu)
{
    if (h == 0 || std::abs(h) > e.wdm().half())
        throw std::domain_error("chi_xci: invalid interfering channel index");
    std::vector<ChiSet> out;
    const double d = e.delta();
    for (Island is : {Island{IslandKind::X1, 0, h, h}, Island{IslandKind::X2, h, 0, 0}, Island{IslandKind::X3, 0, h, 0}})
        if (reaches_coi(is.c1, is.c2, is.c3, d))
            out.push_back(chi_set(e, is, nu));
    return out;
}

inline ChiSet chi_mci(const ChiEngine& e, const Island& is, double nu)
{
    if (is.kind != IslandKind::M1 && is.kind != IslandKind::M2 && is.kind != IslandKind::M3)
        throw std::domain_error("chi_mci: island kind must be M1, M2 or M3");
    return chi_set(e, is, nu);
}

} // namespace nli4d
