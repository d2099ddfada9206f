#include <gtest/gtest.h>

#include <numbers>

#include "nli4d/link.hpp"
#include "nli4d/nli.hpp"

using namespace nli4d;

namespace {

LinkSpec smf(int ns = 1) { return from_fiber(0.2, 17.0, 1.3, 80.0, ns, 5.0); }

// The defining expression with the span sum done one term at a time.
cplx mu_by_spans(double f1, double f2, double f, const LinkSpec& l)
{
    const double db = 4 * std::numbers::pi * std::numbers::pi * l.beta2 * 1e-24 * (f - f1) * (f2 - f1);
    const cplx one = (1.0 - std::exp(-l.alpha * l.span_km) * std::exp(cplx(0, db * l.span_km))) / cplx(l.alpha, -db);
    cplx s{};
    for (int n = 1; n <= l.n_spans; ++n)
        s += std::exp(cplx(0, (n - 1) * db * l.span_km));
    return one * s;
}

} // namespace

TEST(LinkFunction, ZeroDispersionIsCoherentEffectiveLength)
{
    auto l = smf(5);
    l.beta2 = 0.0;
    const cplx v = mu(30e9, -7e9, 11e9, l);
    EXPECT_NEAR(v.real(), 5 * (1 - std::exp(-l.alpha * 80)) / l.alpha, 1e-9);
    EXPECT_NEAR(v.imag(), 0.0, 1e-12);
}

TEST(LinkFunction, ResonanceLineEqualsZeroDispersionValue)
{
    auto l = smf(3);
    auto l0 = l;
    l0.beta2 = 0;
    EXPECT_NEAR(std::abs(mu(12e9, -20e9, 12e9, l) - mu(12e9, -20e9, 12e9, l0)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(mu(12e9, 12e9, -3e9, l) - mu(12e9, 12e9, -3e9, l0)), 0.0, 1e-12);
}

TEST(LinkFunction, ClosedFormMatchesTermByTermSum)
{
    for (int ns : {1, 2, 5, 20}) {
        const auto l = smf(ns);
        for (auto [f1, f2, f] : {std::array<double, 3>{1e9, -1e9, 0.0}, {20e9, 3e9, -15e9}, {-40e9, 22e9, 5e9}}) {
            const cplx a = mu(f1, f2, f, l), b = mu_by_spans(f1, f2, f, l);
            EXPECT_NEAR(std::abs(a - b), 0.0, 1e-12 * std::abs(b)) << ns;
        }
    }
}

TEST(LinkFunction, MultiSpanIsPhasedSumOfSingleSpan)
{
    for (int ns : {1, 2, 5}) {
        const auto l = smf(ns);
        const auto one = smf(1);
        const double f1 = 17e9, f2 = -9e9, f = 4e9;
        const double db = 4 * std::numbers::pi * std::numbers::pi * l.beta2 * 1e-24 * (f - f1) * (f2 - f1);
        cplx s{};
        for (int n = 0; n < ns; ++n)
            s += mu(f1, f2, f, one) * std::exp(cplx(0, n * db * l.span_km));
        EXPECT_NEAR(std::abs(mu(f1, f2, f, l) - s), 0.0, 1e-12 * std::abs(s));
    }
}

TEST(LinkFunction, MaximalOnResonanceLines)
{
    const auto l = smf(4);
    const double peak = std::abs(mu(0, 0, 0, l));
    double worst = 0;
    for (double f1 = -60e9; f1 <= 60e9; f1 += 3e9)
        for (double f2 = -60e9; f2 <= 60e9; f2 += 3e9)
            for (double f : {-20e9, 0.0, 20e9})
                worst = std::max(worst, std::abs(mu(f1, f2, f, l)));
    EXPECT_LE(worst, peak * (1 + 1e-12));
    EXPECT_NEAR(std::abs(mu(10e9, -30e9, 10e9, l)), peak, 1e-9 * peak);
}

TEST(Dispersion, SmfConversion)
{
    // -D lambda^2 / (2 pi c) at 1550 nm.
    const double want = -17e-6 * 1550e-9 * 1550e-9 / (2 * std::numbers::pi * 299792458.0) * 1e3 * 1e24;
    EXPECT_NEAR(beta2_from_dispersion(17.0), want, 1e-12);
    EXPECT_NEAR(beta2_from_dispersion(17.0), -21.68, 0.01);
    EXPECT_GT(beta2_from_dispersion(-1.8), 0.0);
}

TEST(Xi, ExactSumAndApproximation)
{
    EXPECT_DOUBLE_EQ(xi(1, 0.3).exact, 1.0);
    EXPECT_NEAR(xi(20, 0.0).exact, 210.0, 1e-12);
    const auto v = xi(20, 0.1);
    EXPECT_NEAR(v.approx / v.exact, 1.0, 0.02);
    for (int ns : {1, 3, 20, 80})
        for (double eps : {0.0, 0.05, 0.3}) {
            const auto x = xi(ns, eps);
            EXPECT_GE(x.exact, ns);
            EXPECT_GE(x.exact, std::pow(ns, 2 + eps) / (2 + eps));
        }
}

TEST(Ase, HandCalculation)
{
    const auto l = smf(1);
    WdmSpec w;
    const double G = std::pow(10.0, 16.0 / 10);
    const double F = std::pow(10.0, 0.5);
    const double want = (G - 1) * 6.62607015e-34 * 193.41e12 * F * 45e9;
    EXPECT_NEAR(ase_power(l, w), want, 1e-12 * want);
    auto w2 = w;
    w2.rs *= 2;
    EXPECT_NEAR(ase_power(l, w2), 2 * want, 1e-12 * want);
    auto zero = l;
    zero.span_km = 0;
    EXPECT_EQ(ase_power(zero, w), 0.0);
    auto ideal = l;
    ideal.amp = Amplifier::Ideal;
    EXPECT_EQ(ase_power(ideal, w), 0.0);
}

// Two-point fit between one and two spans. With Gaussian statistics the
// exponent is in the usual range; QPSK loses a larger share of its single-span
// NLI to the fourth-order correction, which steepens the early growth.
TEST(Epsilon, TwoPointFitOnSmfSingleChannel)
{
    Constellation4D c;
    for (int i = 0; i < 16; ++i) {
        c.points.push_back({(i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0, (i & 8) ? 1.0 : -1.0});
        c.probs.push_back(1.0 / 16);
    }
    const auto plan = ChannelPlan::uniform(moments(normalize(c)), 1);
    const auto gauss = ChannelPlan::uniform(gaussian_moments(0.5, 0.5), 1);
    WdmSpec w;
    const auto g = epsilon(gauss, smf(1), w);
    EXPECT_GT(g.eps, 0.0);
    EXPECT_LT(g.eps, 0.3);
    const auto fit = epsilon(plan, smf(1), w);
    EXPECT_GT(fit.eps, 0.0);
    EXPECT_LT(fit.eps, 1.0);
    // Regression anchors for this configuration.
    EXPECT_NEAR(g.eps, 0.2212, 0.005);
    EXPECT_NEAR(fit.eps, 0.6623, 0.005);

    // Stronger dispersion decorrelates the spans.
    auto strong = smf(1);
    strong.beta2 *= 20;
    const auto fs = epsilon(gauss, strong, w);
    EXPECT_LT(fs.eps, g.eps);
    EXPECT_GT(fs.eps, 0.0);
}

TEST(Epsilon, RejectsNonpositiveEta)
{
    EXPECT_THROW(epsilon_from_eta(0.0, 1.0), std::domain_error);
    EXPECT_THROW(epsilon_from_eta(1.0, -1.0), std::domain_error);
    EXPECT_DOUBLE_EQ(epsilon_from_eta(1.0, 2.0), 0.0);
}
