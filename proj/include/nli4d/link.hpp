#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nli4d {

using cplx = std::complex<double>;

namespace phys {
inline constexpr double c = 299792458.0;          // m/s
inline constexpr double h = 6.62607015e-34;       // J s
inline constexpr double lambda_ref = 1550e-9;     // m, for D -> beta2
inline constexpr double nu_ref = 193.41e12;       // Hz, for ASE photon energy
} // namespace phys

enum class Amplifier { Ideal, Edfa };

struct LinkSpec {
    double alpha = 0.2 / (10.0 * std::numbers::log10e); // 1/km (power)
    double beta2 = -21.668;                            // ps^2/km
    double gamma = 1.3;                                // 1/(W km)
    double span_km = 80.0;
    int n_spans = 1;
    double nf_db = 5.0;
    Amplifier amp = Amplifier::Edfa;

    double alpha_db() const { return alpha * 10.0 * std::numbers::log10e; }
    double beta2_s2_per_km() const { return beta2 * 1e-24; }
    double span_loss_db() const { return alpha_db() * span_km; }
};

inline double alpha_from_db(double db_per_km) { return db_per_km / (10.0 * std::numbers::log10e); }

// D in ps/(nm km) to beta2 in ps^2/km at the reference wavelength.
inline double beta2_from_dispersion(double D)
{
    const double D_si = D * 1e-6; // s/m^2
    const double b2 = -D_si * phys::lambda_ref * phys::lambda_ref / (2.0 * std::numbers::pi * phys::c); // s^2/m
    return b2 * 1e3 * 1e24;
}

inline LinkSpec from_fiber(double alpha_db_per_km, double D_ps_nm_km, double gamma, double span_km,
                           int n_spans, double nf_db, Amplifier amp = Amplifier::Edfa)
{
    LinkSpec l;
    l.alpha = alpha_from_db(alpha_db_per_km);
    l.beta2 = beta2_from_dispersion(D_ps_nm_km);
    l.gamma = gamma;
    l.span_km = span_km;
    l.n_spans = n_spans;
    l.nf_db = nf_db;
    l.amp = amp;
    return l;
}

inline void validate(const LinkSpec& l)
{
    if (!(l.alpha > 0.0))
        throw std::invalid_argument("link.alpha must be positive");
    if (!(l.span_km > 0.0))
        throw std::invalid_argument("link.span_km must be positive");
    if (l.n_spans < 1)
        throw std::invalid_argument("link.n_spans must be at least 1");
    if (!(l.gamma >= 0.0))
        throw std::invalid_argument("link.gamma must be nonnegative");
    if (!std::isfinite(l.beta2))
        throw std::invalid_argument("link.beta2 must be finite");
}

enum class Pulse { Rect, Rrc };

struct WdmSpec {
    double rs = 45e9;       // Hz
    int n_channels = 1;
    double spacing = 50e9;  // Hz
    double rolloff = 0.0;
    Pulse pulse = Pulse::Rect;

    int half() const { return (n_channels - 1) / 2; }
    double spacing_norm() const { return spacing / rs; }
};

inline void validate(const WdmSpec& w)
{
    if (!(w.rs > 0.0))
        throw std::invalid_argument("wdm.rs must be positive");
    if (w.n_channels < 1 || w.n_channels % 2 == 0)
        throw std::invalid_argument("wdm.n_channels must be a positive odd number");
    if (w.n_channels > 1 && w.spacing < w.rs * (1.0 + w.rolloff))
        throw std::invalid_argument("wdm.spacing must be at least the occupied channel bandwidth");
    if (w.rolloff < 0.0 || w.rolloff >= 1.0)
        throw std::invalid_argument("wdm.rolloff must lie in [0, 1)");
}

// Phase-mismatch scale: dbeta = kappa * (nu - nu1) * (nu2 - nu1) in 1/km when
// frequencies are expressed in units of the symbol rate.
inline double kappa(const LinkSpec& l, const WdmSpec& w)
{
    return 4.0 * std::numbers::pi * std::numbers::pi * l.beta2_s2_per_km() * w.rs * w.rs;
}

// Phased-array factor sum_{l=1}^{N} exp(j (l-1) theta).
inline cplx array_factor(double theta, int N)
{
    const double s = std::sin(0.5 * theta);
    if (std::abs(s) < 1e-9)
        return double(N);
    return std::polar(std::sin(0.5 * N * theta) / s, 0.5 * (N - 1) * theta);
}

// Link function as a function of the phase mismatch dbeta (1/km); result in km.
inline cplx link_function(double dbeta, double alpha, double L, int Ns)
{
    const cplx num = 1.0 - std::exp(-alpha * L) * std::polar(1.0, dbeta * L);
    const cplx den(alpha, -dbeta);
    return num / den * array_factor(dbeta * L, Ns);
}

inline cplx link_function(double dbeta, const LinkSpec& l)
{
    return link_function(dbeta, l.alpha, l.span_km, l.n_spans);
}

// mu(f1, f2, f) with absolute frequencies in Hz.
inline cplx mu(double f1, double f2, double f, const LinkSpec& l)
{
    const double db = 4.0 * std::numbers::pi * std::numbers::pi * l.beta2_s2_per_km() * (f - f1) * (f2 - f1);
    return link_function(db, l);
}

inline double effective_length(const LinkSpec& l)
{
    return (1.0 - std::exp(-l.alpha * l.span_km)) / l.alpha;
}

struct XiValue {
    double exact;
    double approx;
};

inline XiValue xi(int Ns, double eps)
{
    if (Ns < 1)
        throw std::invalid_argument("xi: Ns must be at least 1");
    double s = 0.0;
    for (int n = 1; n <= Ns; ++n)
        s += std::pow(double(n), 1.0 + eps);
    const double N = Ns;
    return {s, std::pow(N, 2.0 + eps) / (2.0 + eps) + std::pow(N, 1.0 + eps) / 2.0};
}

// Coherence exponent from the single- and two-span signal-signal coefficients.
inline double epsilon_from_eta(double eta1, double eta2)
{
    if (!(eta1 > 0.0) || !(eta2 > 0.0))
        throw std::domain_error("epsilon: eta values must be positive");
    return std::log2(eta2 / eta1) - 1.0;
}

// ASE power per span over the symbol-rate bandwidth, both polarizations.
inline double ase_power(const LinkSpec& l, const WdmSpec& w)
{
    if (l.amp == Amplifier::Ideal)
        return 0.0;
    const double G = std::pow(10.0, l.span_loss_db() / 10.0);
    const double F = std::pow(10.0, l.nf_db / 10.0);
    return (G - 1.0) * phys::h * phys::nu_ref * F * w.rs;
}

inline double db10(double x) { return 10.0 * std::log10(x); }
inline double undb10(double x) { return std::pow(10.0, x / 10.0); }
inline double dbm_to_w(double dbm) { return 1e-3 * undb10(dbm); }
inline double w_to_dbm(double w) { return db10(w / 1e-3); }

} // namespace nli4d
