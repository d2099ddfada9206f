#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "constellation.hpp"
#include "link.hpp"
#include "quadrature.hpp"

namespace nli4d {

// Moments of every channel on the grid, indexed by channel number -H..H.
class ChannelPlan {
public:
    ChannelPlan() = default;
    explicit ChannelPlan(std::vector<MomentSet> by_index) : m_(std::move(by_index))
    {
        if (m_.empty() || m_.size() % 2 == 0)
            throw std::invalid_argument("ChannelPlan needs an odd number of channels");
    }
    static ChannelPlan uniform(const MomentSet& m, int n_channels)
    {
        return ChannelPlan(std::vector<MomentSet>(size_t(n_channels), m));
    }
    // COI moments plus the interferers ordered -H..-1, 1..H.
    static ChannelPlan from_coi(const MomentSet& coi, const std::vector<MomentSet>& ints)
    {
        if (ints.size() % 2 != 0)
            throw std::invalid_argument("interfering channel list must have an even length");
        std::vector<MomentSet> all;
        const size_t H = ints.size() / 2;
        for (size_t i = 0; i < H; ++i)
            all.push_back(ints[i]);
        all.push_back(coi);
        for (size_t i = H; i < ints.size(); ++i)
            all.push_back(ints[i]);
        return ChannelPlan(std::move(all));
    }

    int half() const { return int(m_.size() / 2); }
    int n_channels() const { return int(m_.size()); }
    const MomentSet& at(int c) const { return m_.at(size_t(c + half())); }

    ChannelPlan swapped() const
    {
        std::vector<MomentSet> s;
        for (auto& m : m_)
            s.push_back(m.swapped());
        return ChannelPlan(std::move(s));
    }
    ChannelPlan without_cross_terms() const
    {
        std::vector<MomentSet> s;
        for (auto& m : m_)
            s.push_back(m.without_cross_terms());
        return ChannelPlan(std::move(s));
    }

private:
    std::vector<MomentSet> m_;
};

// One coefficient x chi product, band-integrated, before the (8/9)^2 gamma^2
// prefactor is applied.
struct TermContribution {
    std::string region;      // SCI, X1..X4, M0..M3
    std::string island;      // e.g. X1(0,2,2)
    std::string coefficient; // e.g. Phi4
    int channel = 0;         // interfering channel h (0 for SCI / MCI)
    int pol = 0;             // 0 = x, 1 = y
    double value = 0.0;      // 1/W^2 after the prefactor
    double error = 0.0;
};

struct EtaParts {
    double sci = 0, x1 = 0, x2 = 0, x3 = 0, x4 = 0, m0 = 0, m1 = 0, m2 = 0, m3 = 0;
    double error = 0;

    double xci() const { return x1 + x2 + x3 + x4; }
    double mci() const { return m0 + m1 + m2 + m3; }
    double total() const { return sci + xci() + mci(); }
    double& slot(const std::string& r)
    {
        static const std::map<std::string, double EtaParts::*> idx{
            {"SCI", &EtaParts::sci}, {"X1", &EtaParts::x1}, {"X2", &EtaParts::x2}, {"X3", &EtaParts::x3},
            {"X4", &EtaParts::x4},   {"M0", &EtaParts::m0}, {"M1", &EtaParts::m1}, {"M2", &EtaParts::m2},
            {"M3", &EtaParts::m3}};
        return this->*idx.at(r);
    }
};

struct NliBreakdown {
    std::array<EtaParts, 2> pol;                       // x, y
    std::map<int, std::array<EtaParts, 2>> by_channel; // XCI parts per interferer
    std::vector<TermContribution> terms;
    int n_spans = 0;
    std::string config_hash;

    double total() const { return pol[0].total() + pol[1].total(); }
    double total_x() const { return pol[0].total(); }
    double total_y() const { return pol[1].total(); }
};

struct NliOptions {
    bool sci = true;
    bool xci = true;
    bool mci = true;
    double coeff_cutoff = 1e-14; // skip chi terms whose coefficient is below this
};

namespace detail {

inline double prefactor(const LinkSpec& l) { return (64.0 / 81.0) * l.gamma * l.gamma; }

struct Acc {
    const ChiEngine& e;
    double cutoff;
    double pref;
    int pol;
    std::vector<TermContribution>& out;

    ChiValue X(const Island& is, int t) const { return e.band_integral(is, t); }

    // coef * chi (real part)
    void lin(const Island& is, const std::string& region, int ch, const char* name, cplx coef, int t)
    {
        if (std::abs(coef) <= cutoff)
            return;
        const ChiValue v = X(is, t);
        push(is, region, ch, name, (coef * v.value).real(), std::abs(coef) * v.error);
    }
    // 2 Re{ c1 chi + c2 chi^* }
    void pair(const Island& is, const std::string& region, int ch, const char* n1, cplx c1, const char* n2,
              cplx c2, int t)
    {
        if (std::abs(c1) <= cutoff && std::abs(c2) <= cutoff)
            return;
        const ChiValue v = X(is, t);
        if (std::abs(c1) > cutoff)
            push(is, region, ch, n1, 2 * (c1 * v.value).real(), 2 * std::abs(c1) * v.error);
        if (std::abs(c2) > cutoff)
            push(is, region, ch, n2, 2 * (c2 * std::conj(v.value)).real(), 2 * std::abs(c2) * v.error);
    }
    void push(const Island& is, const std::string& region, int ch, const char* name, double val, double err)
    {
        out.push_back({region, is.name(), name, ch, pol, pref * val, pref * err});
    }

    // Self-channel block (also used for X4 with the interferer's coefficients).
    void sci_block(const Island& is, const std::string& region, int ch, const CoefficientSet& c)
    {
        lin(is, region, ch, "Phi1", c.phi[1], 1);
        lin(is, region, ch, "Phi2", c.phi[2], 2);
        lin(is, region, ch, "Phi3", c.phi[3], 3);
        lin(is, region, ch, "Psi1", c.psi[1], 4);
        pair(is, region, ch, "Psi2", c.psi[2], "Psi3", c.psi[3], 5);
        lin(is, region, ch, "Psi4", c.psi[4], 6);
        pair(is, region, ch, "Lambda1", c.lambda[1], "Lambda2", c.lambda[2], 7);
        lin(is, region, ch, "Lambda3", c.lambda[3], 8);
        pair(is, region, ch, "Lambda4", c.lambda[4], "Lambda5", c.lambda[5], 9);
        lin(is, region, ch, "Lambda6", c.lambda[6], 10);
        lin(is, region, ch, "Xi1", c.xi1, 11);
    }
};

} // namespace detail

// Per-term contributions for one polarization. Moments of the y view are
// obtained by swapping polarization labels on every channel.
inline std::vector<TermContribution> eta_terms(const ChannelPlan& plan, const ChiEngine& e, int pol,
                                               const NliOptions& opt = {})
{
    if (plan.n_channels() != e.wdm().n_channels)
        throw std::invalid_argument("channel plan does not match the WDM grid");
    const Orientation o = pol == 0 ? Orientation::X : Orientation::Y;
    std::vector<TermContribution> out;
    detail::Acc acc{e, opt.coeff_cutoff, detail::prefactor(e.link()), pol, out};
    if (e.link().gamma == 0.0)
        return out;

    for (const Island& is : enumerate_islands(e.wdm())) {
        switch (is.kind) {
        case IslandKind::SCI:
            if (opt.sci)
                acc.sci_block(is, "SCI", 0, coefficients(plan.at(0), o));
            break;
        case IslandKind::X4:
            if (opt.xci)
                acc.sci_block(is, "X4", is.c1, coefficients(plan.at(is.c1), o));
            break;
        case IslandKind::X1:
            if (opt.xci) {
                const auto c = xci_coefficients(plan.at(0), plan.at(is.c2), o);
                acc.lin(is, "X1", is.c2, "Phi4", c.phi[4], 1);
                acc.lin(is, "X1", is.c2, "Phi5", c.phi[5], 2);
                acc.lin(is, "X1", is.c2, "Phi6", c.phi[6], 3);
            }
            break;
        case IslandKind::X2:
            if (opt.xci) {
                const auto c = xci_coefficients(plan.at(0), plan.at(is.c1), o);
                acc.lin(is, "X2", is.c1, "Psi5", c.psi[5], 1);
                acc.lin(is, "X2", is.c1, "Psi6", c.psi[6], 2);
                acc.lin(is, "X2", is.c1, "Psi7", c.psi[7], 3);
            }
            break;
        case IslandKind::X3:
            if (opt.xci) {
                const auto c = xci_coefficients(plan.at(0), plan.at(is.c2), o);
                acc.lin(is, "X3", is.c2, "Lambda7", c.lambda[7], 1);
                acc.lin(is, "X3", is.c2, "Lambda8", c.lambda[8], 2);
                acc.lin(is, "X3", is.c2, "Lambda9", c.lambda[9], 3);
            }
            break;
        case IslandKind::M1:
        case IslandKind::M2:
            if (opt.mci) {
                const std::string r = is.kind == IslandKind::M1 ? "M1" : "M2";
                const auto c = xci_coefficients(plan.at(is.c1), plan.at(is.c2), o);
                acc.lin(is, r, 0, "Phi4", c.phi[4], 1);
                acc.lin(is, r, 0, "Phi5", c.phi[5], 2);
                acc.lin(is, r, 0, "Phi6", c.phi[6], 3);
            }
            break;
        case IslandKind::M3:
            if (opt.mci) {
                const auto c = xci_coefficients(plan.at(is.c1), plan.at(is.c2), o);
                acc.lin(is, "M3", 0, "Lambda7", c.lambda[7], 1);
                acc.lin(is, "M3", 0, "Lambda8", c.lambda[8], 2);
                acc.lin(is, "M3", 0, "Lambda9", c.lambda[9], 3);
            }
            break;
        case IslandKind::M0:
            if (opt.mci) {
                // Gaussian-statistics weight of a nondegenerate triple; each
                // ordered (c1, c3) pair is visited twice, hence the 1/2.
                const MomentSet& m1 = plan.at(is.c1);
                const MomentSet& m2 = plan.at(is.c2);
                const MomentSet& m3 = plan.at(is.c3);
                auto px = [&](const MomentSet& m) { return pol == 0 ? m.px() : m.py(); };
                auto py = [&](const MomentSet& m) { return pol == 0 ? m.py() : m.px(); };
                const double w = 0.5 * (4 * px(m1) * px(m2) * px(m3) + py(m1) * py(m2) * px(m3) +
                                        px(m1) * py(m2) * py(m3));
                acc.lin(is, "M0", 0, "GN", w, 1);
            }
            break;
        }
    }
    return out;
}

inline NliBreakdown assemble(std::vector<TermContribution> terms, int n_spans)
{
    NliBreakdown b;
    b.n_spans = n_spans;
    for (const auto& t : terms) {
        b.pol[t.pol].slot(t.region) += t.value;
        b.pol[t.pol].error += t.error;
        if (t.region[0] == 'X')
            b.by_channel[t.channel][t.pol].slot(t.region) += t.value;
    }
    b.terms = std::move(terms);
    return b;
}

inline NliBreakdown eta_total(const ChannelPlan& plan, const ChiEngine& e, const NliOptions& opt = {})
{
    auto tx = eta_terms(plan, e, 0, opt);
    auto ty = eta_terms(plan, e, 1, opt);
    tx.insert(tx.end(), ty.begin(), ty.end());
    return assemble(std::move(tx), e.link().n_spans);
}

// (eta_x, eta_y) of individual model parts.
inline std::array<double, 2> eta_sci(const MomentSet& m, const ChiEngine& e)
{
    if (e.wdm().n_channels != 1) {
        NliOptions o;
        o.xci = o.mci = false;
        auto b = eta_total(ChannelPlan::uniform(m, e.wdm().n_channels), e, o);
        return {b.pol[0].sci, b.pol[1].sci};
    }
    auto b = eta_total(ChannelPlan::uniform(m, 1), e);
    return {b.pol[0].sci, b.pol[1].sci};
}

inline std::map<int, std::array<double, 2>> eta_xci(const ChannelPlan& plan, const ChiEngine& e)
{
    NliOptions o;
    o.sci = o.mci = false;
    auto b = eta_total(plan, e, o);
    std::map<int, std::array<double, 2>> out;
    for (auto& [h, p] : b.by_channel)
        out[h] = {p[0].xci(), p[1].xci()};
    return out;
}

inline std::array<double, 2> eta_mci(const ChannelPlan& plan, const ChiEngine& e)
{
    if (plan.n_channels() < 3)
        return {0.0, 0.0};
    NliOptions o;
    o.sci = o.xci = false;
    auto b = eta_total(plan, e, o);
    return {b.pol[0].mci(), b.pol[1].mci()};
}

// Total signal-signal coefficient (both polarizations) for a span count.
inline double eta_for_spans(const ChannelPlan& plan, LinkSpec link, const WdmSpec& wdm, int n_spans,
                            const QuadratureControl& ctrl = {})
{
    link.n_spans = n_spans;
    ChiEngine e(link, wdm, ctrl);
    return eta_total(plan, e).total();
}

struct EpsilonFit {
    double eps;
    double eta1;  // single span (eta tilde)
    double eta2;
};

inline EpsilonFit epsilon(const ChannelPlan& plan, const LinkSpec& link, const WdmSpec& wdm,
                          const QuadratureControl& ctrl = {})
{
    const double e1 = eta_for_spans(plan, link, wdm, 1, ctrl);
    const double e2 = eta_for_spans(plan, link, wdm, 2, ctrl);
    return {epsilon_from_eta(e1, e2), e1, e2};
}

inline double to_db(double eta) { return eta > 0 ? 10.0 * std::log10(eta) : -INFINITY; }

inline nlohmann::json to_json(const NliBreakdown& b)
{
    nlohmann::json j;
    j["n_spans"] = b.n_spans;
    j["config_hash"] = b.config_hash;
    const char* pn[2] = {"x", "y"};
    for (int p = 0; p < 2; ++p) {
        const auto& e = b.pol[p];
        j["eta"][pn[p]] = {{"sci", e.sci}, {"x1", e.x1},       {"x2", e.x2},       {"x3", e.x3},
                           {"x4", e.x4},   {"m0", e.m0},       {"m1", e.m1},       {"m2", e.m2},
                           {"m3", e.m3},   {"xci", e.xci()},   {"mci", e.mci()},   {"total", e.total()},
                           {"error_bound", e.error}, {"total_db", to_db(e.total())}};
    }
    for (auto& [h, p] : b.by_channel)
        for (int q = 0; q < 2; ++q)
            j["xci_by_channel"][std::to_string(h)][pn[q]] = {
                {"x1", p[q].x1}, {"x2", p[q].x2}, {"x3", p[q].x3}, {"x4", p[q].x4}, {"xci", p[q].xci()}};
    for (auto& t : b.terms)
        j["terms"].push_back({{"region", t.region},
                              {"island", t.island},
                              {"coefficient", t.coefficient},
                              {"channel", t.channel},
                              {"pol", pn[t.pol]},
                              {"value", t.value},
                              {"error", t.error}});
    return j;
}

// CSV columns: contribution, polarization, eta_linear, eta_dB, error_bound.
inline std::string to_csv(const NliBreakdown& b)
{
    std::ostringstream os;
    os.precision(17);
    os << "# config_hash=" << b.config_hash << " n_spans=" << b.n_spans << "\n";
    os << "contribution,polarization,eta_linear,eta_dB,error_bound\n";
    const char* pn[2] = {"x", "y"};
    for (int p = 0; p < 2; ++p) {
        const auto& e = b.pol[p];
        const std::pair<const char*, double> rows[] = {
            {"sci", e.sci}, {"x1", e.x1}, {"x2", e.x2},   {"x3", e.x3},   {"x4", e.x4},       {"m0", e.m0},
            {"m1", e.m1},   {"m2", e.m2}, {"m3", e.m3},   {"xci", e.xci()}, {"mci", e.mci()}, {"total", e.total()}};
        for (auto& [name, v] : rows)
            os << name << "," << pn[p] << "," << v << "," << to_db(v) << "," << e.error << "\n";
    }
    return os.str();
}

} // namespace nli4d
