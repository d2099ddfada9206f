#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nli4d {

using cplx = std::complex<double>;

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One 4D symbol per row: (Re a_x, Im a_x, Re a_y, Im a_y).
struct Constellation4D {
    std::vector<std::array<double, 4>> points;
    std::vector<double> probs;
    std::string label;

    size_t size() const { return points.size(); }
    cplx ax(size_t i) const { return {points[i][0], points[i][1]}; }
    cplx ay(size_t i) const { return {points[i][2], points[i][3]}; }
};

enum class RowFormat { Auto, Rows4, Rows4Prob };

inline Constellation4D parse_constellation(std::istream& in, RowFormat fmt = RowFormat::Auto,
                                           const std::string& label = "")
{
    Constellation4D c;
    c.label = label;
    std::string line;
    int lineno = 0;
    bool any_prob = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos)
            line.erase(pos);
        std::istringstream ss(line);
        std::vector<double> v;
        std::string tok;
        while (ss >> tok) {
            size_t used = 0;
            double d;
            try {
                d = std::stod(tok, &used);
            } catch (const std::exception&) {
                throw ParseError("line " + std::to_string(lineno) + ": not a number: '" + tok + "'");
            }
            if (used != tok.size() || !std::isfinite(d))
                throw ParseError("line " + std::to_string(lineno) + ": bad field '" + tok + "'");
            v.push_back(d);
        }
        if (v.empty())
            continue;
        const bool ok = (fmt == RowFormat::Rows4 && v.size() == 4) ||
                        (fmt == RowFormat::Rows4Prob && v.size() == 5) ||
                        (fmt == RowFormat::Auto && (v.size() == 4 || v.size() == 5));
        if (!ok)
            throw ParseError("line " + std::to_string(lineno) + ": expected " +
                             (fmt == RowFormat::Rows4Prob ? "5" : fmt == RowFormat::Rows4 ? "4" : "4 or 5") +
                             " fields, got " + std::to_string(v.size()));
        c.points.push_back({v[0], v[1], v[2], v[3]});
        if (v.size() == 5) {
            if (v[4] < 0)
                throw ParseError("line " + std::to_string(lineno) + ": negative probability");
            any_prob = true;
            c.probs.push_back(v[4]);
        } else {
            c.probs.push_back(-1.0);
        }
    }
    if (c.points.empty())
        throw ParseError("empty constellation");
    const double M = double(c.points.size());
    if (!any_prob) {
        for (auto& p : c.probs)
            p = 1.0 / M;
    } else {
        double s = 0.0;
        for (auto p : c.probs) {
            if (p < 0)
                throw ParseError("probability column present on some rows only");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-6)
            throw ParseError("probabilities sum to " + std::to_string(s) + ", expected 1");
        for (auto& p : c.probs)
            p /= s;
    }
    return c;
}

inline Constellation4D load(const std::string& path, RowFormat fmt = RowFormat::Auto)
{
    std::ifstream f(path);
    if (!f)
        throw ParseError("cannot open constellation file: " + path);
    auto slash = path.find_last_of('/');
    std::string label = path.substr(slash == std::string::npos ? 0 : slash + 1);
    if (auto dot = label.rfind('.'); dot != std::string::npos)
        label.erase(dot);
    return parse_constellation(f, fmt, label);
}

inline double mean_power(const Constellation4D& c)
{
    double e = 0.0;
    for (size_t i = 0; i < c.size(); ++i)
        e += c.probs[i] * (std::norm(c.ax(i)) + std::norm(c.ay(i)));
    return e;
}

inline Constellation4D normalize(const Constellation4D& c)
{
    const double e = mean_power(c);
    if (!(e > 0.0))
        throw std::domain_error("normalize: constellation has zero power");
    Constellation4D out = c;
    const double s = 1.0 / std::sqrt(e);
    for (auto& p : out.points)
        for (auto& v : p)
            v *= s;
    return out;
}

struct ValidationReport {
    std::vector<std::string> warnings;
    double power_x = 0.0, power_y = 0.0;
};

// Throws on nonzero mean; unequal polarization powers only produce a warning.
inline ValidationReport validate(const Constellation4D& c, double mean_tol = 1e-9)
{
    ValidationReport r;
    cplx mx{}, my{};
    for (size_t i = 0; i < c.size(); ++i) {
        mx += c.probs[i] * c.ax(i);
        my += c.probs[i] * c.ay(i);
        r.power_x += c.probs[i] * std::norm(c.ax(i));
        r.power_y += c.probs[i] * std::norm(c.ay(i));
    }
    const double scale = std::sqrt(std::max(r.power_x + r.power_y, 1e-300));
    if (std::abs(mx) > mean_tol * scale || std::abs(my) > mean_tol * scale)
        throw std::domain_error("constellation '" + c.label + "' has nonzero mean (|E{a_x}|=" +
                                std::to_string(std::abs(mx)) + ", |E{a_y}|=" +
                                std::to_string(std::abs(my)) + ")");
    if (std::abs(r.power_x - r.power_y) > 1e-9 * (r.power_x + r.power_y))
        r.warnings.push_back("polarization powers differ: x=" + std::to_string(r.power_x) +
                             " y=" + std::to_string(r.power_y));
    return r;
}

inline Constellation4D swap_polarizations(const Constellation4D& c)
{
    Constellation4D out = c;
    for (auto& p : out.points) {
        std::swap(p[0], p[2]);
        std::swap(p[1], p[3]);
    }
    return out;
}

// Applies the same phase rotation to both polarizations.
inline Constellation4D rotate(const Constellation4D& c, double theta)
{
    Constellation4D out = c;
    const cplx r = std::polar(1.0, theta);
    for (size_t i = 0; i < c.size(); ++i) {
        const cplx x = c.ax(i) * r, y = c.ay(i) * r;
        out.points[i] = {x.real(), x.imag(), y.real(), y.imag()};
    }
    return out;
}

// Expectations E{a_x^p (a_x^*)^q a_y^r (a_y^*)^s} for p+q+r+s <= 6.
class MomentSet {
public:
    static constexpr int kMax = 6;

    cplx operator()(int p, int q, int r, int s) const
    {
        check(p, q, r, s);
        return m_[idx(p, q, r, s)];
    }
    void set(int p, int q, int r, int s, cplx v)
    {
        check(p, q, r, s);
        m_[idx(p, q, r, s)] = v;
    }

    // Named second-order moments.
    double px() const { return (*this)(1, 1, 0, 0).real(); }
    double py() const { return (*this)(0, 0, 1, 1).real(); }
    cplx ex2() const { return (*this)(2, 0, 0, 0); }
    cplx ey2() const { return (*this)(0, 0, 2, 0); }
    cplx exy() const { return (*this)(1, 0, 1, 0); }
    cplx exyc() const { return (*this)(1, 0, 0, 1); }
    cplx excy() const { return (*this)(0, 1, 1, 0); }

    MomentSet swapped() const
    {
        MomentSet o;
        for (int p = 0; p <= kMax; ++p)
            for (int q = 0; p + q <= kMax; ++q)
                for (int r = 0; p + q + r <= kMax; ++r)
                    for (int s = 0; p + q + r + s <= kMax; ++s)
                        o.set(r, s, p, q, (*this)(p, q, r, s));
        return o;
    }

    // Zeroes every moment that mixes the two polarizations and is not a pure
    // magnitude product such as E{|a_x|^2 |a_y|^2}.
    MomentSet without_cross_terms() const
    {
        MomentSet o = *this;
        for (int p = 0; p <= kMax; ++p)
            for (int q = 0; p + q <= kMax; ++q)
                for (int r = 0; p + q + r <= kMax; ++r)
                    for (int s = 0; p + q + r + s <= kMax; ++s)
                        if (p + q > 0 && r + s > 0 && !(p == q && r == s))
                            o.set(p, q, r, s, 0.0);
        return o;
    }

private:
    static int idx(int p, int q, int r, int s) { return ((p * 7 + q) * 7 + r) * 7 + s; }
    static void check(int p, int q, int r, int s)
    {
        if (p < 0 || q < 0 || r < 0 || s < 0 || p + q + r + s > kMax)
            throw std::out_of_range("moment order out of range");
    }
    std::array<cplx, 7 * 7 * 7 * 7> m_{};
};

inline cplx ipow(cplx z, int n)
{
    cplx r = 1.0;
    for (int i = 0; i < n; ++i)
        r *= z;
    return r;
}

inline MomentSet moments(const Constellation4D& c)
{
    MomentSet m;
    for (int p = 0; p <= 6; ++p)
        for (int q = 0; p + q <= 6; ++q)
            for (int r = 0; p + q + r <= 6; ++r)
                for (int s = 0; p + q + r + s <= 6; ++s) {
                    cplx acc{};
                    for (size_t i = 0; i < c.size(); ++i) {
                        const cplx x = c.ax(i), y = c.ay(i);
                        // x-part times y-part as one product keeps the
                        // polarization swap bit-exact.
                        const cplx tx = ipow(x, p) * ipow(std::conj(x), q);
                        const cplx ty = ipow(y, r) * ipow(std::conj(y), s);
                        acc += c.probs[i] * (tx * ty);
                    }
                    m.set(p, q, r, s, acc);
                }
    return m;
}

inline double factorial(int n)
{
    double f = 1.0;
    for (int i = 2; i <= n; ++i)
        f *= i;
    return f;
}

// Independent circular complex Gaussians with powers sx2 and sy2.
inline MomentSet gaussian_moments(double sx2, double sy2)
{
    MomentSet m;
    for (int p = 0; p <= 3; ++p)
        for (int r = 0; 2 * p + 2 * r <= 6; ++r)
            m.set(p, p, r, r, factorial(p) * std::pow(sx2, p) * factorial(r) * std::pow(sy2, r));
    return m;
}

enum class Orientation { X, Y };

// Table entries are 1-indexed: phi[1..6], psi[1..7], lambda[1..9].
struct CoefficientSet {
    std::array<cplx, 7> phi{};
    std::array<cplx, 8> psi{};
    std::array<cplx, 10> lambda{};
    cplx xi1{};
    Orientation orientation = Orientation::X;
};

namespace detail {

inline double sq(double v) { return v * v; }
inline double n2(cplx v) { return std::norm(v); }

} // namespace detail

// Self-channel coefficients (phi 1-3, psi 1-4, lambda 1-6, xi 1) for one
// polarization orientation. The y view is the x formula on swapped labels.
inline CoefficientSet coefficients(const MomentSet& mom, Orientation o)
{
    using detail::n2;
    const MomentSet m = (o == Orientation::X) ? mom : mom.swapped();
    auto E = [&](int p, int q, int r, int s) { return m(p, q, r, s); };
    const double Px = m.px(), Py = m.py();
    const cplx Ex2 = m.ex2(), Ey2 = m.ey2(), Exy = m.exy(), Exyc = m.exyc(), Excy = m.excy();
    const double X4 = E(2, 2, 0, 0).real(), Y4 = E(0, 0, 2, 2).real(), XY = E(1, 1, 1, 1).real();
    const double X6 = E(3, 3, 0, 0).real();

    CoefficientSet c;
    c.orientation = o;

    c.phi[1] = 2 * Px * Px * Px + 4 * Px * n2(Exyc) + Px * Py * Py + n2(Exyc) * Py;
    c.phi[2] = 4 * Px * n2(Ex2) + Px * n2(Ey2) + 4 * Px * n2(Exy) + n2(Exy) * Py +
               2 * std::real(Exy * Excy * std::conj(Ey2) + 2.0 * std::conj(Ex2) * Exy * Exyc);
    c.phi[3] = Px * n2(Ex2) + n2(Exy) * Py + 2 * std::real(Ex2 * std::conj(Exy) * Excy);

    c.psi[1] = 4 * n2(E(2, 1, 0, 0)) + 4 * n2(E(1, 1, 1, 0)) + E(1, 1, 1, 0) * E(0, 0, 1, 2) +
               E(1, 1, 0, 1) * E(0, 0, 2, 1) + n2(E(1, 0, 1, 1)) + n2(E(0, 1, 2, 0)) +
               2 * std::real(E(1, 2, 0, 0) * E(1, 0, 1, 1));
    c.psi[2] = 2 * n2(E(2, 1, 0, 0)) + 2 * n2(E(1, 1, 1, 0)) + E(1, 1, 0, 1) * E(0, 0, 2, 1) +
               n2(E(1, 0, 1, 1));
    c.psi[3] = E(1, 2, 0, 0) * E(1, 0, 1, 1) + n2(E(2, 0, 0, 1));
    c.psi[4] = n2(E(3, 0, 0, 0)) + 2 * n2(E(2, 0, 1, 0)) + n2(E(1, 0, 2, 0));

    c.lambda[1] = -3 * Px * n2(Ex2) + std::conj(E(3, 1, 0, 0)) * Ex2 - n2(Ex2) * Py -
                  2 * n2(Exy) * Py + Ex2 * std::conj(E(2, 0, 1, 1)) -
                  2.0 * Ex2 * std::conj(Exy) * Excy + Exy * std::conj(E(1, 0, 2, 1)) -
                  Exy * Excy * std::conj(Ey2);
    c.lambda[2] = -2 * Px * n2(Exy) + Exy * std::conj(E(2, 1, 1, 0)) - Ex2 * std::conj(Exy) * Excy;
    // The published row prints a garbled factor next to E{|a_x|^2 |a_y|^2}; it is
    // read as E{|a_x|^2}, the only reading that vanishes for Gaussian inputs.
    c.lambda[3] = 4 * X4 * Px - 4 * Px * n2(Ex2) - 8 * Px * Px * Px + 4 * Px * XY -
                  12 * Px * n2(Exyc) - 4 * Px * n2(Exy) - 4 * Px * Px * Py - 3 * Px * Py * Py -
                  Px * n2(Ey2) + XY * Py + Px * Y4 - 5 * n2(Exyc) * Py - n2(Exy) * Py +
                  2 * std::real(2.0 * Exyc * E(1, 2, 1, 0) - Exy * Excy * std::conj(Ey2) +
                                Excy * E(1, 0, 1, 2) - 2.0 * std::conj(Ex2) * Exy * Exyc);
    c.lambda[4] = -6 * Px * n2(Ex2) + 2.0 * std::conj(E(3, 1, 0, 0)) * Ex2 + 4 * Px * n2(Exy) -
                  Px * n2(Ey2) + std::conj(E(1, 1, 2, 0)) * Ey2 + 2.0 * Exy * std::conj(E(2, 1, 1, 0)) -
                  2 * n2(Exy) * Py - 2.0 * std::conj(Ex2) * Exy * Exyc +
                  Exy * std::conj(E(1, 0, 2, 1)) - std::conj(Exy) * Exyc * Ey2 -
                  2 * std::real(std::conj(Exy) * Exyc * Ey2);
    c.lambda[5] = -2 * Px * n2(Exy) + Exy * std::conj(E(2, 1, 1, 0)) - n2(Ex2) * Py -
                  std::conj(Ex2) * Exy * Exyc - 2 * std::real(Ex2 * std::conj(Exy) * Excy);
    c.lambda[6] = -2 * Px * Px * Px + X4 * Px - Px * n2(Ex2) - 4 * Px * n2(Exyc) - Px * Py * Py +
                  XY * Py - n2(Exyc) * Py - n2(Exy) * Py +
                  2 * std::real(Exyc * E(1, 2, 1, 0) - Ex2 * std::conj(Exy) * Excy);

    // Two published monomials are repaired: the garbled "a_{a_y} a_x 2^2" factor
    // is E{a_x^* a_y |a_x|^2}, and E{a_x|a_x|^2}E{a_x|a_y|^2} (net phase 2) is
    // E{a_x^*|a_x|^2}E{a_x|a_y|^2} as in the psi rows.
    c.xi1 = X6 - 9 * X4 * Px + 12 * Px * Px * Px - 2 * X4 * Py + E(1, 1, 2, 2).real() -
            8 * Px * XY - 4 * XY * Py + 2 * E(2, 2, 1, 1).real() - Px * Y4 + 4 * Px * Py * Py +
            8 * Px * Px * Py + 18 * Px * n2(Ex2) - n2(E(3, 0, 0, 0)) - 9 * n2(E(2, 1, 0, 0)) +
            2 * Px * n2(Ey2) - 4 * n2(E(1, 0, 1, 1)) - 8 * n2(E(1, 1, 1, 0)) + 8 * n2(Exyc) * Py +
            8 * n2(Exy) * Py - n2(E(1, 0, 2, 0)) - n2(E(0, 1, 2, 0)) + 16 * Px * n2(Exyc) -
            2 * n2(E(2, 0, 0, 1)) + 16 * Px * n2(Exy) + 4 * n2(Ex2) * Py - 2 * n2(E(2, 0, 1, 0)) +
            2 * std::real(4.0 * Exy * Excy * std::conj(Ey2) - 3.0 * E(3, 1, 0, 0) * std::conj(Ex2) -
                          2.0 * E(1, 1, 1, 0) * E(0, 0, 1, 2) - E(1, 1, 2, 0) * std::conj(Ey2) -
                          2.0 * Exy * std::conj(E(1, 0, 2, 1)) - Exyc * E(0, 1, 2, 1) -
                          2.0 * Ex2 * std::conj(E(2, 0, 1, 1)) - E(1, 2, 0, 0) * E(1, 0, 1, 1) -
                          4.0 * Exyc * E(1, 2, 1, 0) - 4.0 * Exy * std::conj(E(2, 1, 1, 0)) +
                          8.0 * Ex2 * std::conj(Exy) * Excy);
    return c;
}

// Cross-channel coefficients (phi 4-6, psi 5-7, lambda 7-9). Moments of the
// channel holding the a-symbols go in `a`, the other channel in `b`.
inline CoefficientSet xci_coefficients(const MomentSet& a_in, const MomentSet& b_in, Orientation o)
{
    using detail::n2;
    const MomentSet a = (o == Orientation::X) ? a_in : a_in.swapped();
    const MomentSet b = (o == Orientation::X) ? b_in : b_in.swapped();
    const double Pax = a.px(), Pay = a.py(), Pbx = b.px(), Pby = b.py();
    const cplx Ea_x2 = a.ex2(), Ea_y2 = a.ey2(), Ea_xy = a.exy(), Ea_xyc = a.exyc(), Ea_xcy = a.excy();
    const cplx Eb_x2 = b.ex2(), Eb_y2 = b.ey2(), Eb_xy = b.exy(), Eb_xyc = b.exyc(), Eb_xcy = b.excy();
    const double Xa4 = a(2, 2, 0, 0).real(), Ya4 = a(0, 0, 2, 2).real(), XYa = a(1, 1, 1, 1).real();
    const double Xb4 = b(2, 2, 0, 0).real(), Yb4 = b(0, 0, 2, 2).real(), XYb = b(1, 1, 1, 1).real();

    CoefficientSet c;
    c.orientation = o;

    c.phi[4] = 4 * Pax * Pbx * Pbx + Pay * Pbx * Pby + 4 * Pax * n2(Eb_xcy) + Pax * Pby * Pby +
               2 * std::real(2.0 * Ea_xyc * Pbx * Eb_xcy + Ea_xyc * Pby * Eb_xcy);
    c.phi[5] = 4 * Pax * n2(Eb_xy) + Pay * n2(Eb_xy) + 4 * Pax * n2(Eb_x2) + Pax * n2(Eb_y2) +
               2 * std::real(2.0 * Ea_xyc * std::conj(Eb_x2) * Eb_xy + Ea_xyc * Eb_y2 * std::conj(Eb_xy));
    c.phi[6] = 4 * Pax * Xb4 - 8 * Pax * Pbx * Pbx - 4 * Pax * n2(Eb_x2) - Pay * n2(Eb_xyc) -
               Pay * n2(Eb_xy) + Pax * Yb4 - 2 * Pax * Pby * Pby - Pax * n2(Eb_y2) -
               2 * Pax * n2(Eb_xcy) - 2 * Pax * n2(Eb_xyc) - 4 * Pax * n2(Eb_xy) + 4 * Pax * XYb +
               Pay * XYb - 4 * Pax * Pbx * Pby - Pay * Pbx * Pby +
               2 * std::real(-2.0 * Ea_xyc * Eb_xy * std::conj(Eb_x2) -
                             Ea_xyc * Eb_y2 * std::conj(Eb_xy) - 2.0 * Ea_xyc * Pbx * Eb_xcy -
                             Ea_xyc * Pby * Eb_xcy);

    c.psi[5] = 4 * Pbx * Pax * Pax + 4 * Pbx * n2(Ea_xcy) + Pby * Pax * Pay + Pbx * Pay * Pay +
               2 * std::real(2.0 * Eb_xyc * Pax * Ea_xcy + Eb_xyc * Pay * Ea_xcy);
    c.psi[6] = 4 * Pbx * n2(Ea_x2) + 4 * Pbx * n2(Ea_xy) + Pby * n2(Ea_xy) + Pbx * n2(Ea_y2) +
               2 * std::real(2.0 * Eb_xyc * std::conj(Ea_x2) * Ea_xy + Eb_xyc * Ea_y2 * std::conj(Ea_xy));
    // The last magnitude term is printed with factor 4; its mirror in the phi_6
    // row and the Gaussian limit both require factor 1.
    c.psi[7] = 4 * Pbx * Xa4 - 8 * Pbx * Pax * Pax - 4 * Pbx * n2(Ea_x2) - Pby * n2(Ea_xyc) -
               Pby * n2(Ea_xy) + Pbx * Ya4 - 2 * Pbx * Pay * Pay - Pbx * n2(Ea_y2) -
               2 * Pbx * n2(Ea_xcy) - 2 * Pbx * n2(Ea_xyc) - 4 * Pbx * n2(Ea_xy) + 4 * Pbx * XYa +
               Pby * XYa - 4 * Pbx * Pax * Pay - 1 * Pby * Pax * Pay +
               2 * std::real(-2.0 * Eb_xyc * Ea_xy * std::conj(Ea_x2) - 2.0 * Eb_xyc * Pax * Ea_xcy -
                             Eb_xyc * Pay * Ea_xcy - Eb_xyc * Ea_y2 * std::conj(Ea_xy));

    c.lambda[7] = Pbx * Pax * Pax + Pby * Pax * Pay + 2 * std::real(Eb_xcy * Pax * Ea_xyc);
    c.lambda[8] = Pbx * Pax * Pax + Pby * n2(Ea_xcy) + 2 * std::real(Eb_xcy * Pax * Ea_xyc);
    c.lambda[9] = Pbx * Xa4 - 2 * Pbx * Pax * Pax - Pbx * n2(Ea_x2) - Pby * n2(Ea_xy) -
                  Pby * n2(Ea_xcy) + Pby * XYa - Pby * Pax * Pay +
                  2 * std::real(-Eb_xcy * Ea_x2 * std::conj(Ea_xy) - Eb_xcy * Pax * Ea_xyc);
    return c;
}

// Bit labels: one bit-string per row, most significant bit first.
inline std::vector<unsigned> load_labels(const std::string& path, size_t M)
{
    std::ifstream f(path);
    if (!f)
        throw ParseError("cannot open labeling file: " + path);
    std::vector<unsigned> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos)
            line.erase(pos);
        std::istringstream ss(line);
        std::string tok;
        if (!(ss >> tok))
            continue;
        unsigned v = 0;
        for (char ch : tok) {
            if (ch != '0' && ch != '1')
                throw ParseError("labeling line " + std::to_string(lineno) + ": not a bit string");
            v = (v << 1) | unsigned(ch - '0');
        }
        out.push_back(v);
    }
    if (out.size() != M)
        throw ParseError("labeling has " + std::to_string(out.size()) + " rows, constellation has " +
                         std::to_string(M));
    return out;
}

inline std::vector<unsigned> natural_labels(size_t M)
{
    std::vector<unsigned> v(M);
    for (size_t i = 0; i < M; ++i)
        v[i] = unsigned(i);
    return v;
}

} // namespace nli4d
