#pragma once

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nli4d/constellation.hpp"
#include "nli4d/link.hpp"

namespace nli4d {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InstabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimRun {
    std::uint64_t seed = 1;
    int n_symbols = 1 << 14;
    int samples_per_symbol = 4;
    double step_km = 0.25;
    WdmSpec wdm;
    LinkSpec link;
    // One entry shared by all channels, or one per channel ordered from the
    // lowest frequency upwards.
    std::vector<Constellation4D> formats;
    double power_w = 1e-5; // per channel, both polarizations
    bool noise_on = false;

    const Constellation4D& format(int h) const
    {
        return formats.size() == 1 ? formats[0] : formats.at(size_t(h + wdm.half()));
    }
    long n_samples() const { return long(n_symbols) * samples_per_symbol * wdm.n_channels; }
    double sample_rate() const { return wdm.rs * samples_per_symbol * wdm.n_channels; }
};

inline void validate(const SimRun& r)
{
    validate(r.wdm);
    validate(r.link);
    if (r.n_symbols < 2 || r.n_symbols % 2 != 0)
        throw ConfigError("ssfm.n_symbols must be an even number >= 2");
    if (r.samples_per_symbol < 1)
        throw ConfigError("ssfm.samples_per_symbol must be positive");
    if (!(r.step_km > 0.0))
        throw ConfigError("ssfm.step_km must be positive");
    if (!(r.power_w > 0.0))
        throw ConfigError("ssfm.power_w must be positive");
    if (r.formats.size() != 1 && int(r.formats.size()) != r.wdm.n_channels)
        throw ConfigError("ssfm: need one constellation or one per channel");
    const double occupied = (r.wdm.n_channels - 1) * r.wdm.spacing + r.wdm.rs * (1.0 + r.wdm.rolloff);
    if (occupied > r.sample_rate())
        throw ConfigError("ssfm: WDM band of " + std::to_string(occupied * 1e-9) +
                          " GHz exceeds the simulation bandwidth of " +
                          std::to_string(r.sample_rate() * 1e-9) + " GHz; raise samples_per_symbol");
}

// Thin RAII wrapper around an in-place FFTW plan pair.
class Fft {
public:
    explicit Fft(long n) : n_(n), buf_(fftw_alloc_complex(size_t(n)))
    {
        if (!buf_)
            throw std::bad_alloc();
        fwd_ = fftw_plan_dft_1d(int(n), buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(int(n), buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~Fft()
    {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(buf_);
    }
    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;

    long size() const { return n_; }
    void forward(std::vector<cplx>& v) { run(fwd_, v); }
    // Unnormalized inverse.
    void backward(std::vector<cplx>& v) { run(bwd_, v); }

private:
    void run(fftw_plan p, std::vector<cplx>& v)
    {
        if (long(v.size()) != n_)
            throw std::invalid_argument("Fft: size mismatch");
        auto* b = reinterpret_cast<cplx*>(buf_);
        std::copy(v.begin(), v.end(), b);
        fftw_execute(p);
        std::copy(b, b + n_, v.begin());
    }

    long n_;
    fftw_complex* buf_;
    fftw_plan fwd_{}, bwd_{};
};

struct Field {
    std::vector<cplx> x, y;
    double fs = 0.0;
};

struct Transmitted {
    Field field;
    std::vector<std::vector<int>> symbols; // [channel index][symbol] -> constellation row
    std::vector<long> offset_bins;         // channel centre in FFT bins
};

namespace detail {

inline long signed_bin(long k, long n) { return k < n / 2 ? k : k - n; }
inline long wrap(long k, long n) { return ((k % n) + n) % n; }

// Root-raised-cosine amplitude at normalized frequency v = f/Rs, scaled so that
// the folded |H|^2 sums to one.
inline double rrc_amplitude(double v, double r)
{
    const double a = std::abs(v);
    if (r <= 0.0)
        return a < 0.5 ? 1.0 : (a == 0.5 ? std::sqrt(0.5) : 0.0);
    if (a <= 0.5 * (1 - r))
        return 1.0;
    if (a > 0.5 * (1 + r))
        return 0.0;
    return std::sqrt(0.5 * (1.0 + std::cos(std::numbers::pi / r * (a - 0.5 * (1 - r)))));
}

inline std::vector<double> shaping(const SimRun& r, long& half_width)
{
    const long N = r.n_symbols;
    if (r.wdm.pulse == Pulse::Rect) {
        half_width = N / 2;
        std::vector<double> h(size_t(N), 1.0);
        return h;
    }
    half_width = long(std::ceil(0.5 * (1.0 + r.wdm.rolloff) * N));
    std::vector<double> h(size_t(2 * half_width + 1));
    for (long k = -half_width; k <= half_width; ++k)
        h[size_t(k + half_width)] = rrc_amplitude(double(k) / N, r.wdm.rolloff);
    return h;
}

inline std::mt19937_64 channel_rng(std::uint64_t seed, int h, std::uint64_t stream)
{
    std::seed_seq s{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(h + 4096),
                    std::uint32_t(stream)};
    return std::mt19937_64(s);
}

} // namespace detail

inline Transmitted generate(const SimRun& r)
{
    validate(r);
    const long N = r.n_symbols, Nt = r.n_samples();
    const int H = r.wdm.half();
    const double df = r.wdm.rs / N;
    Transmitted tx;
    tx.field.fs = r.sample_rate();
    std::vector<cplx> X(static_cast<size_t>(Nt)), Y(static_cast<size_t>(Nt));
    Fft small(N);
    long hw = 0;
    const auto shape = detail::shaping(r, hw);
    for (int h = -H; h <= H; ++h) {
        const auto& c = r.format(h);
        const double scale = std::sqrt(r.power_w / mean_power(c));
        auto rng = detail::channel_rng(r.seed, h, 0);
        std::discrete_distribution<int> pick(c.probs.begin(), c.probs.end());
        std::vector<int> idx(static_cast<size_t>(N));
        std::vector<cplx> ax(static_cast<size_t>(N)), ay(static_cast<size_t>(N));
        for (long n = 0; n < N; ++n) {
            idx[size_t(n)] = pick(rng);
            ax[size_t(n)] = scale * c.ax(size_t(idx[size_t(n)]));
            ay[size_t(n)] = scale * c.ay(size_t(idx[size_t(n)]));
        }
        small.forward(ax);
        small.forward(ay);
        const long off = std::lround(h * r.wdm.spacing / df);
        tx.offset_bins.push_back(off);
        if (r.wdm.pulse == Pulse::Rect) {
            for (long k = -N / 2; k < N / 2; ++k) {
                const long src = detail::wrap(k, N), dst = detail::wrap(off + k, Nt);
                X[size_t(dst)] += ax[size_t(src)];
                Y[size_t(dst)] += ay[size_t(src)];
            }
        } else {
            for (long k = -hw; k <= hw; ++k) {
                const double g = shape[size_t(k + hw)];
                const long src = detail::wrap(k, N), dst = detail::wrap(off + k, Nt);
                X[size_t(dst)] += g * ax[size_t(src)];
                Y[size_t(dst)] += g * ay[size_t(src)];
            }
        }
        tx.symbols.push_back(std::move(idx));
    }
    Fft big(Nt);
    big.backward(X);
    big.backward(Y);
    for (long m = 0; m < Nt; ++m) {
        X[size_t(m)] /= double(N);
        Y[size_t(m)] /= double(N);
    }
    tx.field.x = std::move(X);
    tx.field.y = std::move(Y);
    return tx;
}

// Manakov nonlinear rotation; phase_per_watt multiplies |Ex|^2 + |Ey|^2.
inline void nonlinear_step(Field& f, double phase_per_watt)
{
    for (size_t m = 0; m < f.x.size(); ++m) {
        const double p = std::norm(f.x[m]) + std::norm(f.y[m]);
        const cplx rot = std::polar(1.0, phase_per_watt * p);
        f.x[m] *= rot;
        f.y[m] *= rot;
    }
}

inline double energy(const Field& f)
{
    double e = 0.0;
    for (size_t m = 0; m < f.x.size(); ++m)
        e += std::norm(f.x[m]) + std::norm(f.y[m]);
    return e;
}

class Propagator {
public:
    Propagator(const SimRun& r) : run_(r), fft_(r.n_samples())
    {
        const long Nt = r.n_samples();
        omega2_.resize(static_cast<size_t>(Nt));
        const double df = r.sample_rate() / Nt;
        for (long k = 0; k < Nt; ++k) {
            const double w = 2.0 * std::numbers::pi * df * detail::signed_bin(k, Nt);
            omega2_[size_t(k)] = w * w;
        }
    }

    // Dispersion and loss over dz km, applied in the frequency domain.
    void linear(Field& f, double dz)
    {
        const double b2 = run_.link.beta2_s2_per_km();
        const double att = std::exp(-0.5 * run_.link.alpha * dz);
        const long Nt = fft_.size();
        fft_.forward(f.x);
        fft_.forward(f.y);
        for (long k = 0; k < Nt; ++k) {
            const cplx op = att / double(Nt) * std::polar(1.0, 0.5 * b2 * omega2_[size_t(k)] * dz);
            f.x[size_t(k)] *= op;
            f.y[size_t(k)] *= op;
        }
        fft_.backward(f.x);
        fft_.backward(f.y);
    }

    void span(Field& f, std::mt19937_64* noise_rng)
    {
        const auto& l = run_.link;
        const int steps = std::max(1, int(std::ceil(l.span_km / run_.step_km - 1e-9)));
        const double h = l.span_km / steps;
        // Effective length of a step centred on its midpoint, where the power
        // sits after the preceding half-step of loss.
        const double leff = l.alpha > 0 ? 2.0 * std::sinh(0.5 * l.alpha * h) / l.alpha : h;
        const double phase = (8.0 / 9.0) * l.gamma * leff;
        linear(f, 0.5 * h);
        for (int s = 0; s < steps; ++s) {
            nonlinear_step(f, phase);
            linear(f, s + 1 < steps ? h : 0.5 * h);
        }
        const double g = std::exp(0.5 * l.alpha * l.span_km);
        for (size_t m = 0; m < f.x.size(); ++m) {
            f.x[m] *= g;
            f.y[m] *= g;
        }
        if (noise_rng && run_.noise_on && l.amp == Amplifier::Edfa) {
            // Per-polarization ASE PSD times the simulation bandwidth.
            WdmSpec unit = run_.wdm;
            unit.rs = f.fs;
            const double var = 0.5 * ase_power(l, unit);
            std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * var));
            for (size_t m = 0; m < f.x.size(); ++m) {
                f.x[m] += cplx(nd(*noise_rng), nd(*noise_rng));
                f.y[m] += cplx(nd(*noise_rng), nd(*noise_rng));
            }
        }
        const double e = energy(f);
        if (!std::isfinite(e))
            throw InstabilityError("ssfm: field diverged; use a smaller step_km");
    }

private:
    const SimRun& run_;
    Fft fft_;
    std::vector<double> omega2_;
};

inline Field propagate(Field f, const SimRun& r)
{
    if (!(r.step_km > 0.0))
        throw ConfigError("ssfm.step_km must be positive");
    Propagator p(r);
    auto rng = detail::channel_rng(r.seed, 0, 1);
    for (int s = 0; s < r.link.n_spans; ++s)
        p.span(f, &rng);
    return f;
}

struct Received {
    std::vector<cplx> x, y;
    double phase_x = 0.0, phase_y = 0.0;
};

// Select channel h, matched filter, full CD compensation, symbol sampling and
// a data-aided constant phase per polarization. total_km is the accumulated
// dispersion length to undo (0 for back-to-back).
inline Received receive(const Field& f, const SimRun& r, const Transmitted& tx, int h, double total_km)
{
    const long N = r.n_symbols, Nt = long(f.x.size());
    const int H = r.wdm.half();
    if (h < -H || h > H)
        throw std::out_of_range("receive: no such channel");
    Fft big(Nt), small(N);
    std::vector<cplx> X = f.x, Y = f.y;
    big.forward(X);
    big.forward(Y);
    const long off = tx.offset_bins[size_t(h + H)];
    const double df = f.fs / Nt;
    const double b2 = r.link.beta2_s2_per_km();
    long hw = 0;
    const auto shape = detail::shaping(r, hw);
    std::vector<cplx> ax(static_cast<size_t>(N)), ay(static_cast<size_t>(N));
    const long lo = r.wdm.pulse == Pulse::Rect ? -N / 2 : -hw;
    const long hi = r.wdm.pulse == Pulse::Rect ? N / 2 - 1 : hw;
    for (long k = lo; k <= hi; ++k) {
        const long kk = off + k;
        const double w = 2.0 * std::numbers::pi * df * kk;
        const double g = r.wdm.pulse == Pulse::Rect ? 1.0 : shape[size_t(k + hw)];
        const cplx cd = g * double(N) / double(Nt) * std::polar(1.0, -0.5 * b2 * w * w * total_km);
        const long src = detail::wrap(kk, Nt), dst = detail::wrap(k, N);
        ax[size_t(dst)] += cd * X[size_t(src)];
        ay[size_t(dst)] += cd * Y[size_t(src)];
    }
    small.backward(ax);
    small.backward(ay);
    Received rx;
    const auto& c = r.format(h);
    const double scale = std::sqrt(r.power_w / mean_power(c));
    const auto& idx = tx.symbols[size_t(h + H)];
    cplx cx{}, cy{};
    for (long n = 0; n < N; ++n) {
        ax[size_t(n)] /= double(N);
        ay[size_t(n)] /= double(N);
        cx += ax[size_t(n)] * std::conj(scale * c.ax(size_t(idx[size_t(n)])));
        cy += ay[size_t(n)] * std::conj(scale * c.ay(size_t(idx[size_t(n)])));
    }
    rx.phase_x = std::abs(cx) > 0 ? std::arg(cx) : 0.0;
    rx.phase_y = std::abs(cy) > 0 ? std::arg(cy) : 0.0;
    const cplx rotx = std::polar(1.0, -rx.phase_x), roty = std::polar(1.0, -rx.phase_y);
    for (long n = 0; n < N; ++n) {
        ax[size_t(n)] *= rotx;
        ay[size_t(n)] *= roty;
    }
    rx.x = std::move(ax);
    rx.y = std::move(ay);
    return rx;
}

struct SnrEstimate {
    double snr_x = 0.0, snr_y = 0.0; // linear
    long min_count = 0;
    bool insufficient = false;
    double rel_error = 0.0; // one-sigma relative error of the noise variance
};

// Conditional-mean SNR: ratio of the probability-weighted conditional-mean
// powers to the weighted conditional variances, per polarization.
inline SnrEstimate estimate_snr(const Constellation4D& c, const std::vector<int>& idx, const Received& rx)
{
    const size_t M = c.size(), N = idx.size();
    if (rx.x.size() != N || rx.y.size() != N)
        throw std::invalid_argument("estimate_snr: length mismatch");
    std::vector<long> cnt(M, 0);
    std::vector<cplx> mx(M), my(M);
    for (size_t n = 0; n < N; ++n) {
        const auto j = size_t(idx[n]);
        ++cnt[j];
        mx[j] += rx.x[n];
        my[j] += rx.y[n];
    }
    std::vector<double> vx(M, 0.0), vy(M, 0.0);
    for (size_t j = 0; j < M; ++j)
        if (cnt[j] > 0) {
            mx[j] /= double(cnt[j]);
            my[j] /= double(cnt[j]);
        }
    for (size_t n = 0; n < N; ++n) {
        const auto j = size_t(idx[n]);
        vx[j] += std::norm(rx.x[n] - mx[j]);
        vy[j] += std::norm(rx.y[n] - my[j]);
    }
    SnrEstimate out;
    out.min_count = long(N);
    double sx = 0, sy = 0, nx = 0, ny = 0;
    long dof = 0;
    for (size_t j = 0; j < M; ++j) {
        if (c.probs[j] <= 0.0)
            continue;
        out.min_count = std::min(out.min_count, cnt[j]);
        if (cnt[j] < 2)
            continue;
        const double p = c.probs[j];
        sx += p * std::norm(mx[j]);
        sy += p * std::norm(my[j]);
        nx += p * vx[j] / double(cnt[j] - 1);
        ny += p * vy[j] / double(cnt[j] - 1);
        dof += cnt[j] - 1;
    }
    out.snr_x = sx / nx;
    out.snr_y = sy / ny;
    // Complex Gaussian variance estimate: relative std 1/sqrt(dof).
    out.rel_error = dof > 0 ? 1.0 / std::sqrt(double(dof)) : 1.0;
    if (out.min_count < 50) {
        out.insufficient = true;
        out.rel_error *= std::sqrt(50.0 / double(std::max<long>(out.min_count, 1)));
    }
    return out;
}

struct EtaEstimate {
    double eta_x = 0.0, eta_y = 0.0;         // 1/W^2
    double sci_x = 0.0, sci_y = 0.0;         // single-channel companion, if run
    double err_db = 0.0;
    bool insufficient = false;
    double seconds = 0.0;

    double total() const { return eta_x + eta_y; }
    double non_sci_x() const { return eta_x - sci_x; }
    double non_sci_y() const { return eta_y - sci_y; }
};

inline std::array<double, 2> eta_from_snr(const SnrEstimate& s, const Constellation4D& c, double P)
{
    double px = 0, py = 0;
    for (size_t j = 0; j < c.size(); ++j) {
        px += c.probs[j] * std::norm(c.ax(j));
        py += c.probs[j] * std::norm(c.ay(j));
    }
    const double tot = px + py;
    px *= P / tot;
    py *= P / tot;
    return {px / (s.snr_x * P * P * P), py / (s.snr_y * P * P * P)};
}

struct SimResult {
    Transmitted tx;
    Field out;
    Received rx; // centre channel
    SnrEstimate snr;
};

inline SimResult simulate(const SimRun& r)
{
    SimResult s;
    s.tx = generate(r);
    s.out = propagate(s.tx.field, r);
    s.rx = receive(s.out, r, s.tx, 0, r.link.span_km * r.link.n_spans);
    s.snr = estimate_snr(r.format(0), s.tx.symbols[size_t(r.wdm.half())], s.rx);
    return s;
}

// eta of the centre channel from a noiseless run. With remove_sci a
// single-channel companion run (same centre-channel symbols) is also made.
inline EtaEstimate estimate_eta(SimRun r, bool remove_sci = false)
{
    r.noise_on = false;
    EtaEstimate e;
    auto s = simulate(r);
    const auto eta = eta_from_snr(s.snr, r.format(0), r.power_w);
    e.eta_x = eta[0];
    e.eta_y = eta[1];
    e.insufficient = s.snr.insufficient;
    e.err_db = 10.0 * std::log10(1.0 + s.snr.rel_error);
    if (remove_sci && r.wdm.n_channels > 1) {
        SimRun one = r;
        one.formats = {r.format(0)};
        one.wdm.n_channels = 1;
        auto s1 = simulate(one);
        const auto e1 = eta_from_snr(s1.snr, one.format(0), one.power_w);
        e.sci_x = e1[0];
        e.sci_y = e1[1];
    }
    return e;
}

// Debug dump: little-endian float64 interleaved ExRe, ExIm, EyRe, EyIm.
static_assert(std::endian::native == std::endian::little, "field dumps are written in host byte order");

inline void dump_field(const Field& f, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write " + path);
    for (size_t m = 0; m < f.x.size(); ++m) {
        const double v[4] = {f.x[m].real(), f.x[m].imag(), f.y[m].real(), f.y[m].imag()};
        os.write(reinterpret_cast<const char*>(v), sizeof v);
    }
}

inline Field load_field(const std::string& path, double fs)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot read " + path);
    Field f;
    f.fs = fs;
    double v[4];
    while (is.read(reinterpret_cast<char*>(v), sizeof v)) {
        f.x.emplace_back(v[0], v[1]);
        f.y.emplace_back(v[2], v[3]);
    }
    return f;
}

} // namespace nli4d
