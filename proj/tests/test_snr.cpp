#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "nli4d/nli.hpp"
#include "nli4d/snr.hpp"

using namespace nli4d;

namespace {

std::string corpus(const std::string& name) { return std::string(NLI4D_DATA_DIR) + "/constellations/" + name; }

Constellation4D format(const std::string& name) { return normalize(load(corpus(name + ".txt"))); }

std::vector<unsigned> labels_for(const std::string& name, size_t M)
{
    const auto p = corpus(name + ".labels");
    return std::filesystem::exists(p) ? load_labels(p, M) : natural_labels(M);
}

LinkSpec smf(int ns) { return from_fiber(0.2, 17.0, 1.3, 80.0, ns, 5.0); }

// Binary antipodal input on one real dimension, amplitude a, noise variance
// v; trapezoid rule on a wide grid. Independent of the library's quadrature.
double bpsk_capacity(double a, double v)
{
    const double s = std::sqrt(v);
    const int n = 200001;
    const double lo = a - 12 * s, hi = a + 12 * s, h = (hi - lo) / (n - 1);
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        const double y = lo + i * h;
        const double pdf = std::exp(-(y - a) * (y - a) / (2 * v)) / std::sqrt(2 * std::numbers::pi * v);
        const double wgt = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        acc += wgt * pdf * std::log2(1 + std::exp(-2 * a * y / v));
    }
    return 1 - acc * h;
}

} // namespace

TEST(EffectiveSnr, IdentitiesAsComposed)
{
    const auto l = smf(20);
    WdmSpec w;
    const NliCoefficients k = NliCoefficients::from_fit(300.0, 0.12, 20);
    const double P = 1e-3;
    const auto s = effective_snr(k, l, w, P, true);
    const double ase = ase_power(l, w);
    EXPECT_DOUBLE_EQ(s.sigma2_ss, k.eta_ss * P * P * P);
    EXPECT_NEAR(s.sigma2_sn / (ase * P * P), 3 * xi(20, 0.12).exact * 300.0, 1e-9);
    EXPECT_NEAR(s.sigma2_ase_total, 20 * ase, 1e-24);
    EXPECT_NEAR(s.snr_eff_db, 10 * std::log10(P / (s.sigma2_ase_total + s.sigma2_ss + s.sigma2_sn)), 1e-12);
    EXPECT_DOUBLE_EQ(s.distance_km, 1600.0);
    EXPECT_EQ(effective_snr(k, l, w, P, false).sigma2_sn, 0.0);
}

TEST(EffectiveSnr, LinearRegimeLimit)
{
    const auto l = smf(10);
    WdmSpec w;
    const auto k = NliCoefficients::from_fit(300.0, 0.1, 10);
    const double P = 1e-9;
    EXPECT_NEAR(effective_snr(k, l, w, P).snr_eff_db, 10 * std::log10(P / (10 * ase_power(l, w))), 1e-6);
}

TEST(EffectiveSnr, DecreasesWithDistance)
{
    WdmSpec w;
    double prev = INFINITY;
    for (int ns = 1; ns <= 60; ns += 7) {
        const double s = effective_snr(NliCoefficients::from_fit(300, 0.1, ns), smf(ns), w, 1e-3).snr_eff_db;
        EXPECT_LT(s, prev);
        prev = s;
    }
}

TEST(EffectiveSnr, RejectsBadInput)
{
    WdmSpec w;
    const auto k = NliCoefficients::from_fit(300, 0.1, 5);
    EXPECT_THROW(effective_snr(k, smf(5), w, 0.0), std::domain_error);
    EXPECT_THROW(effective_snr(k, smf(5), w, -1.0), std::domain_error);
    EXPECT_THROW(effective_snr(k, smf(6), w, 1e-3), std::invalid_argument);
}

TEST(LaunchPower, MatchesClosedFormWithoutSignalAseTerm)
{
    const auto l = smf(20);
    WdmSpec w;
    const auto k = NliCoefficients::from_fit(300.0, 0.1, 20);
    const auto opt = optimal_launch_power(k, l, w, false);
    const double closed = std::cbrt(20 * ase_power(l, w) / (2 * k.eta_ss));
    EXPECT_NEAR(w_to_dbm(opt.power_w), w_to_dbm(closed), 0.01);
    EXPECT_NEAR(opt.snr_max_db, effective_snr(k, l, w, closed, false).snr_eff_db, 1e-4);

    auto k2 = k;
    k2.eta_ss *= 2;
    k2.eta_tilde *= 2;
    const auto opt2 = optimal_launch_power(k2, l, w, false);
    EXPECT_NEAR(w_to_dbm(opt.power_w) - w_to_dbm(opt2.power_w), 10 * std::log10(std::cbrt(2.0)), 0.01);
    EXPECT_NEAR(w_to_dbm(opt.power_w) - w_to_dbm(opt2.power_w), 1.0, 0.01);

    const auto with_sn = optimal_launch_power(k, l, w, true);
    EXPECT_LT(with_sn.power_w, opt.power_w);
    EXPECT_LT(with_sn.snr_max_db, opt.snr_max_db);
}

// Signal-signal over signal-ASE NLI at 0.5 dBm on a single SMF channel. The
// ratio is close to (2 + eps) P / (3 Ns sigma2_ASE): its drop from 1600 km to
// 7500 km barely depends on eps, its level does.
TEST(EffectiveSnr, SignalAseGapShrinksWithDistance)
{
    WdmSpec w;
    const auto plan = ChannelPlan::uniform(moments(format("4d_prs64")), 1);
    const auto fit = epsilon(plan, smf(1), w);
    const double P = dbm_to_w(0.5);
    auto gap = [&](int ns, double eps) {
        const auto s = effective_snr(NliCoefficients::from_fit(fit.eta1, eps, ns), smf(ns), w, P);
        return 10 * std::log10(s.sigma2_ss / s.sigma2_sn);
    };
    EXPECT_NEAR(gap(20, fit.eps) - gap(94, fit.eps), 17.2 - 10.6, 0.15);
    // At the weak coherence of long links the level matches as well.
    EXPECT_NEAR(gap(20, 0.09), 17.2, 0.1);
    EXPECT_NEAR(gap(94, 0.09), 10.6, 0.15);
    double prev = INFINITY;
    for (int ns = 5; ns <= 100; ns += 5) {
        EXPECT_LT(gap(ns, fit.eps), prev);
        prev = gap(ns, fit.eps);
    }
}

TEST(Gmi, QpskIsFourBinaryChannels)
{
    const auto c = format("pm_qpsk");
    const auto lab = labels_for("pm_qpsk", 16);
    for (double snr_db : {-3.0, 0.0, 6.0}) {
        // Per real dimension: amplitude 1/2, noise variance 1/(4 SNR).
        const double want = 4 * bpsk_capacity(0.5, 1.0 / (4 * std::pow(10.0, snr_db / 10)));
        EXPECT_NEAR(gmi(c, lab, snr_db), want, 1e-3) << snr_db;
        EXPECT_NEAR(gmi(c, lab, snr_db, 30), want, 1e-4) << snr_db;
        EXPECT_NEAR(gmi_monte_carlo(c, lab, snr_db, 1000000, 9), want, 0.01) << snr_db;
    }
    EXPECT_NEAR(gmi(c, lab, 0.0), 2 * 0.9718, 2e-3);
}

TEST(Gmi, Limits)
{
    for (const char* f : {"l4_8", "cube4_16", "4d_os128"}) {
        const auto c = format(f);
        const auto lab = labels_for(f, c.size());
        const double m = std::log2(double(c.size()));
        EXPECT_NEAR(gmi(c, lab, 40.0), m, 1e-6) << f;
        EXPECT_LT(gmi(c, lab, -25.0), 0.02 * m) << f;
        EXPECT_NEAR(ngmi(gmi(c, lab, 40.0), c.size()), 1.0, 1e-6);
    }
}

TEST(Gmi, NondecreasingInSnr)
{
    const auto c = format("l4_8");
    const auto lab = labels_for("l4_8", 8);
    double prev = -1;
    for (int i = 0; i < 20; ++i) {
        const double g = gmi(c, lab, -5.0 + i);
        EXPECT_GE(g, prev - 1e-9);
        prev = g;
    }
}

TEST(Gmi, GaussHermiteAgreesWithMonteCarlo)
{
    for (const char* f : {"l4_8", "4d_os128", "pm_16qam"})
        for (double snr : {4.0, 10.0}) {
            const auto c = format(f);
            const auto lab = labels_for(f, c.size());
            EXPECT_NEAR(gmi(c, lab, snr), gmi_monte_carlo(c, lab, snr, 1000000, 5), 0.01) << f << " " << snr;
        }
}

TEST(Gmi, ProductShortcutMatchesFullTensorRule)
{
    for (const char* f : {"pm_qpsk", "cube4_16", "pm_16qam"}) {
        const auto c = format(f);
        const auto lab = labels_for(f, c.size());
        for (double snr : {0.0, 10.0})
            EXPECT_NEAR(gmi(c, lab, snr), gmi_full_tensor(c, lab, snr), 1e-7) << f;
    }
    // A relabeling that mixes polarizations falls back to the 4D rule.
    const auto c = format("pm_qpsk");
    std::vector<unsigned> mixed = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 15, 14};
    EXPECT_FALSE(detail::split_product(c, mixed).has_value());
    EXPECT_NEAR(gmi(c, mixed, 5.0), gmi_full_tensor(c, mixed, 5.0), 1e-12);
}

// The bit metric has kinks where decision regions meet, so the tensor rule
// converges slowly and not monotonically. Ten nodes reach 5 mbit for most of
// the corpus; three formats need more, and fourteen against twenty settles all.
TEST(Gmi, GaussHermiteConvergesForCorpus)
{
    const std::set<std::string> slow = {"pm_8qam", "voronoi4_32", "w4_256"};
    for (const char* f : {"pm_qpsk", "cube4_16", "l4_8", "voronoi4_32", "pm_8qam", "4d_prs64", "4d_os128",
                          "pm_16qam", "w4_256", "pm_64qam"}) {
        const auto c = format(f);
        const auto lab = labels_for(f, c.size());
        const double g10 = gmi(c, lab, 10.0, 10), g14 = gmi(c, lab, 10.0, 14);
        EXPECT_LT(std::abs(g10 - g14), slow.count(f) ? 0.015 : 0.005) << f;
        if (c.size() <= 128)
            EXPECT_LT(std::abs(g14 - gmi(c, lab, 10.0, 20)), 0.005) << f;
    }
}

TEST(Gmi, LabelingErrors)
{
    Constellation4D three;
    three.points = {{1, 0, 0, 0}, {-1, 0, 0, 0}, {0, 1, 0, 0}};
    three.probs = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    EXPECT_THROW(gmi(three, {0, 1, 2}, 5.0), LabelingError);
    const auto c = format("l4_8");
    EXPECT_THROW(gmi(c, {0, 1, 2, 3, 4, 5, 6, 6}, 5.0), LabelingError);
    EXPECT_THROW(gmi(c, {0, 1, 2, 3}, 5.0), LabelingError);
}

TEST(Reach, MonotoneInTargetAndBounded)
{
    const auto c = format("l4_8");
    const auto lab = labels_for("l4_8", 8);
    WdmSpec w;
    auto eta_at = [](int ns) { return NliCoefficients::from_fit(400.0, 0.1, ns); };
    const double P = dbm_to_w(0.0);
    double prev = INFINITY;
    for (double target : {0.5, 0.7, 0.8, 0.9, 0.95}) {
        const double r = reach_at_ngmi(c, lab, smf(1), w, P, target, eta_at);
        EXPECT_LE(r, prev);
        EXPECT_EQ(std::fmod(r, 80.0), 0.0);
        prev = r;
    }
    EXPECT_THROW(reach_at_ngmi(c, lab, smf(1), w, P, 1.0, eta_at), std::domain_error);
    EXPECT_THROW(reach_at_ngmi(c, lab, smf(1), w, P, 0.0, eta_at), std::domain_error);
    // Unreachable at one span.
    EXPECT_EQ(reach_at_ngmi(c, lab, smf(1), w, dbm_to_w(-40), 0.99, eta_at), 0.0);
    // The signal-ASE term can only shorten the reach.
    EXPECT_LE(reach_at_ngmi(c, lab, smf(1), w, P, 0.8, eta_at, true),
              reach_at_ngmi(c, lab, smf(1), w, P, 0.8, eta_at, false));
}
