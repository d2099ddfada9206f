#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <queue>
#include <stdexcept>
#include <vector>

namespace nli4d {

using cplx = std::complex<double>;

struct Rule {
    std::vector<double> x;
    std::vector<double> w;
};

// Gauss-Legendre nodes on [-1, 1] by Newton iteration on P_n.
inline Rule gauss_legendre(int n)
{
    if (n < 1)
        throw std::invalid_argument("gauss_legendre: n must be positive");
    Rule r;
    r.x.resize(n);
    r.w.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) < 1e-15)
                break;
        }
        r.x[i] = -z;
        r.x[n - 1 - i] = z;
        r.w[i] = r.w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
    return r;
}

// Gauss-Hermite nodes for weight exp(-x^2).
inline Rule gauss_hermite(int n)
{
    if (n < 1)
        throw std::invalid_argument("gauss_hermite: n must be positive");
    Rule r;
    r.x.resize(n);
    r.w.resize(n);
    const double pim4 = std::pow(std::numbers::pi, -0.25);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        else if (i == 1)
            z -= 1.14 * std::pow(double(n), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * r.x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * r.x[1];
        else
            z = 2.0 * z - r.x[i - 2];
        double pp = 0.0;
        for (int it = 0; it < 200; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(double(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) < 1e-14)
                break;
        }
        r.x[i] = z;
        r.x[n - 1 - i] = -z;
        r.w[i] = r.w[n - 1 - i] = 2.0 / (pp * pp);
    }
    std::reverse(r.x.begin(), r.x.end());
    std::reverse(r.w.begin(), r.w.end());
    return r;
}

struct QuadResult {
    cplx value{};
    double error = 0.0;
    long evals = 0;
    bool converged = true;
};

struct AdaptiveOptions {
    double rel_tol = 1e-6;
    double abs_tol = 0.0;
    long max_evals = 2'000'000;
    int init_panels = 1;
};

namespace detail {

// 7-point Gauss / 15-point Kronrod pair.
inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a, b;
    cplx value;
    double error;
    bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gk15(F& f, double a, double b)
{
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const cplx fc = cplx(f(c));
    cplx resk = fc * kWgk[7];
    cplx resg = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        const cplx f1 = cplx(f(c - dx)), f2 = cplx(f(c + dx));
        resk += kWgk[j] * (f1 + f2);
        if (j % 2 == 1)
            resg += kWg[j / 2] * (f1 + f2);
    }
    return {a, b, resk * h, std::abs((resk - resg) * h)};
}

} // namespace detail

// Globally adaptive Gauss-Kronrod integration of a real- or complex-valued
// function. Breakpoints (if any inside (a,b)) always become panel edges.
template <class F>
QuadResult integrate(F&& f, double a, double b, const AdaptiveOptions& opt = {},
                     const std::vector<double>& breaks = {})
{
    QuadResult out;
    if (!(b > a))
        return out;
    std::vector<double> edges;
    const int n0 = std::max(1, opt.init_panels);
    for (int i = 0; i <= n0; ++i)
        edges.push_back(a + (b - a) * i / n0);
    for (double x : breaks)
        if (x > a && x < b)
            edges.push_back(x);
    std::sort(edges.begin(), edges.end());
    std::priority_queue<detail::Panel> heap;
    cplx total{};
    double err = 0.0;
    for (size_t i = 0; i + 1 < edges.size(); ++i) {
        if (!(edges[i + 1] > edges[i]))
            continue;
        auto p = detail::gk15(f, edges[i], edges[i + 1]);
        out.evals += 15;
        total += p.value;
        err += p.error;
        heap.push(p);
    }
    while (!heap.empty()) {
        const double target = std::max(opt.abs_tol, opt.rel_tol * std::abs(total));
        if (err <= target)
            break;
        if (out.evals + 30 > opt.max_evals) {
            out.converged = false;
            break;
        }
        auto p = heap.top();
        const double m = 0.5 * (p.a + p.b);
        if (!(m > p.a && m < p.b)) {
            out.converged = false;
            break;
        }
        heap.pop();
        auto l = detail::gk15(f, p.a, m);
        auto r = detail::gk15(f, m, p.b);
        out.evals += 30;
        total += l.value + r.value - p.value;
        err += l.error + r.error - p.error;
        heap.push(l);
        heap.push(r);
    }
    // Recompute from scratch to avoid drift from incremental updates.
    total = 0.0;
    err = 0.0;
    while (!heap.empty()) {
        total += heap.top().value;
        err += heap.top().error;
        heap.pop();
    }
    out.value = total;
    out.error = err;
    return out;
}

} // namespace nli4d
