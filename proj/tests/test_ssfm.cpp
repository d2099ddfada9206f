#include <gtest/gtest.h>

#include <filesystem>

#include "nli4d/nli.hpp"
#include "nli4d/ssfm.hpp"

using namespace nli4d;

namespace {

std::string corpus(const std::string& name) { return std::string(NLI4D_DATA_DIR) + "/constellations/" + name; }

Constellation4D format(const std::string& name) { return normalize(load(corpus(name + ".txt"))); }

SimRun base(const std::string& fmt, int nch, int ns, double p_dbm)
{
    SimRun r;
    r.seed = 21;
    r.n_symbols = 1 << 12;
    r.samples_per_symbol = 4;
    r.step_km = 0.5;
    r.wdm.n_channels = nch;
    r.link = from_fiber(0.2, 17.0, 1.3, 80.0, ns, 5.0, Amplifier::Ideal);
    r.formats = {format(fmt)};
    r.power_w = dbm_to_w(p_dbm);
    return r;
}

double db(double v) { return 10 * std::log10(v); }

} // namespace

TEST(Ssfm, BackToBackIsNoiseless)
{
    auto r = base("pm_16qam", 3, 1, 0.0);
    const auto tx = generate(r);
    const auto rx = receive(tx.field, r, tx, 0, 0.0);
    const auto s = estimate_snr(r.format(0), tx.symbols[1], rx);
    EXPECT_GT(db(s.snr_x), 100);
    EXPECT_GT(db(s.snr_y), 100);
}

TEST(Ssfm, LinearPropagationCompensatesExactly)
{
    auto r = base("pm_16qam", 3, 3, 0.0);
    r.link.gamma = 0;
    const auto s = simulate(r).snr;
    EXPECT_GT(db(s.snr_x), 60);
    EXPECT_GT(db(s.snr_y), 60);
}

// Dispersion and the Manakov rotation are unitary and the amplifier gain
// undoes the span loss exactly, so a noiseless span keeps the energy.
TEST(Ssfm, NoiselessSpanConservesEnergy)
{
    auto r = base("voronoi4_32", 3, 1, 5.0);
    auto f = generate(r).field;
    const double e0 = energy(f);
    Propagator p(r);
    p.span(f, nullptr);
    p.span(f, nullptr);
    EXPECT_NEAR(energy(f), e0, 1e-10 * e0);
}

TEST(Ssfm, NonlinearStepIsPerSampleRotation)
{
    Field f;
    f.x = {{1, 0}, {0, 2}, {0.3, -0.4}};
    f.y = {{0, 0}, {1, 1}, {-1, 0.5}};
    auto g = f;
    nonlinear_step(g, 0.7);
    for (size_t m = 0; m < 3; ++m) {
        const double p = std::norm(f.x[m]) + std::norm(f.y[m]);
        EXPECT_NEAR(std::abs(g.x[m] - f.x[m] * std::polar(1.0, 0.7 * p)), 0.0, 1e-15);
        EXPECT_NEAR(std::abs(g.y[m] - f.y[m] * std::polar(1.0, 0.7 * p)), 0.0, 1e-15);
    }
}

TEST(Ssfm, SeedDeterminesOutputBitForBit)
{
    auto r = base("pm_qpsk", 3, 1, 0.0);
    r.step_km = 2.0;
    const auto a = simulate(r), b = simulate(r);
    EXPECT_EQ(a.out.x, b.out.x);
    EXPECT_EQ(a.out.y, b.out.y);
    r.seed = 22;
    EXPECT_NE(simulate(r).out.x, a.out.x);
}

TEST(Ssfm, LaunchPowerSplitsEvenlyOverPolarizations)
{
    auto r = base("pm_qpsk", 1, 1, 0.0);
    const auto tx = generate(r);
    double px = 0, py = 0;
    for (size_t m = 0; m < tx.field.x.size(); ++m) {
        px += std::norm(tx.field.x[m]);
        py += std::norm(tx.field.y[m]);
    }
    px /= double(tx.field.x.size());
    py /= double(tx.field.y.size());
    // Rect pulses: mean sample power equals mean symbol power.
    EXPECT_NEAR(px, r.power_w / 2, 1e-12 * r.power_w);
    EXPECT_NEAR(py, r.power_w / 2, 1e-12 * r.power_w);

    auto r16 = base("pm_16qam", 1, 1, 0.0);
    r16.n_symbols = 1 << 14;
    const auto t16 = generate(r16);
    double p16 = 0;
    for (size_t m = 0; m < t16.field.x.size(); ++m)
        p16 += std::norm(t16.field.x[m]);
    EXPECT_NEAR(p16 / double(t16.field.x.size()), r16.power_w / 2, 0.03 * r16.power_w / 2);
}

TEST(Ssfm, SpectrumPeaksAtChannelOffsets)
{
    auto r = base("pm_qpsk", 5, 1, 0.0);
    auto tx = generate(r);
    const long Nt = r.n_samples();
    Fft fft(Nt);
    auto X = tx.field.x;
    fft.forward(X);
    const double df = r.sample_rate() / double(Nt);
    auto band_power = [&](double centre) {
        double acc = 0;
        for (long k = 0; k < Nt; ++k) {
            const double f = df * double(k < Nt / 2 ? k : k - Nt);
            if (std::abs(f - centre) < 0.4 * r.wdm.rs)
                acc += std::norm(X[size_t(k)]);
        }
        return acc;
    };
    const double on = band_power(0.0);
    for (int h = -2; h <= 2; ++h)
        EXPECT_NEAR(band_power(h * r.wdm.spacing) / on, 1.0, 0.1) << h;
    // Guard band between rect channels is empty.
    const double gap = 0.5 * (r.wdm.spacing - r.wdm.rs) - 2 * df;
    double guard = 0;
    for (long k = 0; k < Nt; ++k) {
        const double f = df * double(k < Nt / 2 ? k : k - Nt);
        if (std::abs(f - 0.5 * r.wdm.spacing) < gap)
            guard += std::norm(X[size_t(k)]);
    }
    EXPECT_LT(guard, 1e-20 * on);
    EXPECT_EQ(tx.offset_bins[3] - tx.offset_bins[2], std::lround(r.wdm.spacing / df));
}

TEST(Ssfm, EstimatorRecoversKnownAwgnSnr)
{
    const auto c = format("pm_16qam");
    const long N = 1 << 16;
    std::mt19937_64 g(3);
    std::discrete_distribution<int> pick(c.probs.begin(), c.probs.end());
    const double snr = std::pow(10.0, 1.5);
    // Per polarization signal power is 1/2.
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5 / snr / 2));
    std::vector<int> idx(N);
    Received rx;
    for (long n = 0; n < N; ++n) {
        idx[size_t(n)] = pick(g);
        rx.x.push_back(c.ax(size_t(idx[size_t(n)])) + cplx(nd(g), nd(g)));
        rx.y.push_back(c.ay(size_t(idx[size_t(n)])) + cplx(nd(g), nd(g)));
    }
    const auto s = estimate_snr(c, idx, rx);
    EXPECT_NEAR(db(s.snr_x), 15.0, 0.05);
    EXPECT_NEAR(db(s.snr_y), 15.0, 0.05);
    EXPECT_FALSE(s.insufficient);
    EXPECT_LT(s.rel_error, 0.01);
}

TEST(Ssfm, AmplifierNoiseOnlyMatchesLinearSnr)
{
    auto r = base("pm_qpsk", 3, 4, 0.0);
    r.link.amp = Amplifier::Edfa;
    r.link.gamma = 0;
    r.noise_on = true;
    r.n_symbols = 1 << 14;
    const auto s = simulate(r).snr;
    const double want = db(r.power_w / (4 * ase_power(r.link, r.wdm)));
    EXPECT_NEAR(db(s.snr_x), want, 0.1);
    EXPECT_NEAR(db(s.snr_y), want, 0.1);
}

TEST(Ssfm, HalvingStepChangesEtaLittle)
{
    auto r = base("pm_qpsk", 1, 2, 0.0);
    r.step_km = 0.5;
    const auto a = estimate_eta(r);
    r.step_km = 0.25;
    const auto b = estimate_eta(r);
    EXPECT_LT(std::abs(db(a.total()) - db(b.total())), 0.05);
}

TEST(Ssfm, PolarizationSwapExchangesEstimates)
{
    auto r = base("voronoi4_32", 1, 2, 0.0);
    r.step_km = 1.0;
    const auto a = estimate_eta(r);
    r.formats = {swap_polarizations(r.formats[0])};
    const auto b = estimate_eta(r);
    EXPECT_NEAR(db(a.eta_x), db(b.eta_y), 0.05);
    EXPECT_NEAR(db(a.eta_y), db(b.eta_x), 0.05);
}

// The scheme is norm preserving, so only an overflowing field can trip the
// non-finite check.
TEST(Ssfm, DivergenceIsReported)
{
    auto r = base("pm_qpsk", 1, 1, 0.0);
    r.power_w = 1e305;
    r.step_km = 40.0;
    EXPECT_THROW(simulate(r), InstabilityError);
}

TEST(Ssfm, BandwidthTooSmallIsAConfigError)
{
    auto r = base("pm_qpsk", 3, 1, 0.0);
    r.samples_per_symbol = 1;
    r.wdm.spacing = 100e9;
    EXPECT_THROW(generate(r), ConfigError);
    r = base("pm_qpsk", 1, 1, 0.0);
    r.n_symbols = 3;
    EXPECT_THROW(generate(r), ConfigError);
}

TEST(Ssfm, FieldDumpRoundTrips)
{
    auto r = base("pm_qpsk", 1, 1, 0.0);
    r.n_symbols = 64;
    const auto tx = generate(r);
    const auto path = (std::filesystem::temp_directory_path() / "nli4d_field_roundtrip.bin").string();
    dump_field(tx.field, path);
    const auto back = load_field(path, tx.field.fs);
    std::filesystem::remove(path);
    EXPECT_EQ(back.x, tx.field.x);
    EXPECT_EQ(back.y, tx.field.y);
    EXPECT_EQ(std::filesystem::exists(path), false);
}

// Model against split-step on a 64-point product format: three channels,
// four spans, weak launch so the perturbation picture holds.
TEST(Ssfm, AgreesWithModelForPm64Qam)
{
    auto r = base("pm_64qam", 3, 4, -20.0);
    r.n_symbols = 1 << 14;
    r.seed = 3;
    const auto sim = estimate_eta(r);
    ChiEngine e(r.link, r.wdm);
    const auto model = eta_total(ChannelPlan::uniform(moments(r.formats[0]), 3), e);
    EXPECT_NEAR(db(sim.eta_x), db(model.total_x()), 0.2);
    EXPECT_NEAR(db(sim.eta_y), db(model.total_y()), 0.2);
}
