#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "nli4d/config.hpp"
#include "nli4d/io.hpp"
#include "nli4d/nli.hpp"
#include "nli4d/snr.hpp"
#include "nli4d/ssfm.hpp"

using namespace nli4d;
namespace fs = std::filesystem;

namespace {

enum Exit { Ok = 0, BadConfig = 1, NoConvergence = 2, ValidationFailed = 3, Failure = 4 };

struct Common {
    std::string config;
    std::string preset;
    std::string out_dir = ".";
    std::string format = "csv";
    long seed = -1;
};

RunConfig load(const Common& o)
{
    auto c = load_config(o.config, o.preset);
    if (o.seed >= 0) {
        c.quad.seed = std::uint64_t(o.seed);
        c.ssfm.seed = std::uint64_t(o.seed);
        c.raw["seed_override"] = o.seed;
    }
    return c;
}

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void emit(const Common& o, const std::string& stem, const std::string& csv, const nlohmann::json& js)
{
    const fs::path dir(o.out_dir);
    if (o.format == "json") {
        write_atomic(dir / (stem + ".json"), js.dump(2) + "\n");
        std::cout << (dir / (stem + ".json")).string() << "\n";
    } else {
        write_atomic(dir / (stem + ".csv"), csv);
        std::cout << (dir / (stem + ".csv")).string() << "\n";
    }
}

int cmd_moments(const Common& o)
{
    const auto cfg = load(o);
    const auto cs = load_constellations(cfg);
    std::ostringstream csv;
    csv.precision(17);
    csv << "# config_hash=" << cfg.hash() << "\n";
    csv << "channel,orientation,name,real,imag\n";
    nlohmann::json js;
    js["config_hash"] = cfg.hash();
    for (size_t k = 0; k < cs.size(); ++k) {
        const auto m = moments(cs[k]);
        for (auto w : validate(cs[k]).warnings)
            std::cerr << "warning: " << cfg.constellations[k] << ": " << w << "\n";
        const int ch = cs.size() == 1 ? 0 : int(k) - cfg.wdm.half();
        for (auto orient : {Orientation::X, Orientation::Y}) {
            const auto co = coefficients(m, orient);
            const auto xo = xci_coefficients(m, m, orient);
            const char* on = orient == Orientation::X ? "x" : "y";
            auto row = [&](const std::string& name, cplx v) {
                csv << ch << "," << on << "," << name << "," << v.real() << "," << v.imag() << "\n";
                js["channels"][std::to_string(ch)][on][name] = {v.real(), v.imag()};
            };
            for (int i = 1; i <= 3; ++i)
                row("Phi" + std::to_string(i), co.phi[size_t(i)]);
            for (int i = 4; i <= 6; ++i)
                row("Phi" + std::to_string(i), xo.phi[size_t(i)]);
            for (int i = 1; i <= 4; ++i)
                row("Psi" + std::to_string(i), co.psi[size_t(i)]);
            for (int i = 5; i <= 7; ++i)
                row("Psi" + std::to_string(i), xo.psi[size_t(i)]);
            for (int i = 1; i <= 6; ++i)
                row("Lambda" + std::to_string(i), co.lambda[size_t(i)]);
            for (int i = 7; i <= 9; ++i)
                row("Lambda" + std::to_string(i), xo.lambda[size_t(i)]);
            row("Xi1", co.xi1);
        }
        auto mrow = [&](const std::string& name, cplx v) {
            csv << ch << ",-," << name << "," << v.real() << "," << v.imag() << "\n";
            js["channels"][std::to_string(ch)]["moments"][name] = {v.real(), v.imag()};
        };
        mrow("E|ax|^2", m.px());
        mrow("E|ay|^2", m.py());
        mrow("E{ax^2}", m.ex2());
        mrow("E{ay^2}", m.ey2());
        mrow("E{ax ay}", m.exy());
        mrow("E{ax ay*}", m.exyc());
        mrow("E|ax|^4", m(2, 2, 0, 0));
        mrow("E|ay|^4", m(0, 0, 2, 2));
        mrow("E|ax|^2|ay|^2", m(1, 1, 1, 1));
        mrow("E|ax|^6", m(3, 3, 0, 0));
    }
    emit(o, "moments", csv.str(), js);
    return Ok;
}

NliBreakdown run_nli(const RunConfig& cfg, const ChannelPlan& plan, LinkSpec link)
{
    ChiEngine e(link, cfg.wdm, cfg.quad);
    auto b = eta_total(plan, e, cfg.nli);
    b.config_hash = cfg.hash();
    return b;
}

int cmd_nli(const Common& o)
{
    const auto cfg = load(o);
    const auto cs = load_constellations(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const auto b = run_nli(cfg, channel_plan(cfg, cs), cfg.link);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto js = to_json(b);
    js["seconds"] = secs;
    emit(o, "nli", to_csv(b), js);
    std::cerr << "eta_x = " << to_db(b.total_x()) << " dB, eta_y = " << to_db(b.total_y()) << " dB ("
              << secs << " s)\n";
    return Ok;
}

int cmd_snr_sweep(const Common& o, bool exact)
{
    const auto cfg = load(o);
    const auto cs = load_constellations(cfg);
    const auto plan = channel_plan(cfg, cs);
    const auto fit = epsilon(plan, cfg.link, cfg.wdm, cfg.quad);
    std::vector<int> spans = cfg.sweep.spans;
    if (spans.empty())
        for (int n = 1; n <= cfg.link.n_spans; ++n)
            spans.push_back(n);
    std::vector<unsigned> labels;
    if (!cfg.labels.empty())
        labels = load_labels(cfg.labels, cs[0].size());
    const double P = dbm_to_w(cfg.power_dbm);
    std::ostringstream csv;
    csv.precision(12);
    csv << "# config_hash=" << cfg.hash() << " eps=" << fit.eps << " eta_tilde=" << fit.eta1
        << " power_dbm=" << cfg.power_dbm << "\n";
    csv << "distance_km,snr_model_ss,snr_model_sn,ngmi,sigma2_ase,sigma2_ss,sigma2_sn\n";
    nlohmann::json js;
    js["config_hash"] = cfg.hash();
    js["eps"] = fit.eps;
    js["eta_tilde"] = fit.eta1;
    for (int ns : spans) {
        auto l = cfg.link;
        l.n_spans = ns;
        NliCoefficients k = NliCoefficients::from_fit(fit.eta1, fit.eps, ns);
        if (exact)
            k.eta_ss = run_nli(cfg, plan, l).total();
        const auto ss = effective_snr(k, l, cfg.wdm, P, false);
        const auto sn = effective_snr(k, l, cfg.wdm, P, true);
        std::string ng;
        if (!labels.empty())
            ng = fmt(ngmi(gmi(cs[0], labels, sn.snr_eff_db), cs[0].size()));
        csv << sn.distance_km << "," << fmt(ss.snr_eff_db) << "," << fmt(sn.snr_eff_db) << "," << ng << ","
            << fmt(sn.sigma2_ase_total) << "," << fmt(sn.sigma2_ss) << "," << fmt(sn.sigma2_sn) << "\n";
        js["points"].push_back({{"distance_km", sn.distance_km},
                                {"snr_model_ss", ss.snr_eff_db},
                                {"snr_model_sn", sn.snr_eff_db},
                                {"ngmi", ng.empty() ? nlohmann::json() : nlohmann::json(std::stod(ng))},
                                {"sigma2_ase", sn.sigma2_ase_total},
                                {"sigma2_ss", sn.sigma2_ss},
                                {"sigma2_sn", sn.sigma2_sn}});
    }
    emit(o, "snr_sweep", csv.str(), js);
    return Ok;
}

int cmd_gmi(const Common& o, int order)
{
    const auto cfg = load(o);
    const auto cs = load_constellations(cfg);
    const auto labels = cfg.labels.empty() ? natural_labels(cs[0].size()) : load_labels(cfg.labels, cs[0].size());
    if (cfg.labels.empty())
        std::cerr << "warning: no labeling given, using natural binary labels\n";
    auto grid = cfg.sweep.snr_db;
    if (grid.empty())
        for (int s = 0; s <= 20; ++s)
            grid.push_back(s);
    std::ostringstream csv;
    csv.precision(12);
    csv << "# config_hash=" << cfg.hash() << "\n";
    csv << "snr_db,gmi,ngmi\n";
    nlohmann::json js;
    js["config_hash"] = cfg.hash();
    for (double s : grid) {
        const double g = gmi(cs[0], labels, s, order);
        csv << fmt(s) << "," << fmt(g) << "," << fmt(ngmi(g, cs[0].size())) << "\n";
        js["points"].push_back({{"snr_db", s}, {"gmi", g}, {"ngmi", ngmi(g, cs[0].size())}});
    }
    emit(o, "gmi", csv.str(), js);
    return Ok;
}

nlohmann::json ssfm_json(const EtaEstimate& e, const SimResult* s)
{
    nlohmann::json j = {{"eta_x", e.eta_x},     {"eta_y", e.eta_y},     {"eta_x_db", to_db(e.eta_x)},
                        {"eta_y_db", to_db(e.eta_y)}, {"err_db", e.err_db}, {"insufficient_statistics", e.insufficient},
                        {"seconds", e.seconds}};
    if (e.sci_x > 0) {
        j["sci_x"] = e.sci_x;
        j["sci_y"] = e.sci_y;
        j["non_sci_x_db"] = to_db(e.non_sci_x());
        j["non_sci_y_db"] = to_db(e.non_sci_y());
    }
    if (s) {
        j["snr_x_db"] = db10(s->snr.snr_x);
        j["snr_y_db"] = db10(s->snr.snr_y);
    }
    return j;
}

int cmd_ssfm(const Common& o, const std::string& dump)
{
    const auto cfg = load(o);
    const auto cs = load_constellations(cfg);
    const auto run = sim_run(cfg, cs);
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = simulate(run);
    EtaEstimate e;
    const auto eta = eta_from_snr(s.snr, run.format(0), run.power_w);
    e.eta_x = eta[0];
    e.eta_y = eta[1];
    e.insufficient = s.snr.insufficient;
    e.err_db = 10.0 * std::log10(1.0 + s.snr.rel_error);
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (e.insufficient)
        std::cerr << "warning: fewer than 50 symbols on some constellation point (min " << s.snr.min_count
                  << "); error bars inflated\n";
    if (!dump.empty())
        dump_field(s.out, dump);
    auto js = ssfm_json(e, &s);
    js["config_hash"] = cfg.hash();
    js["manifest"] = cfg.raw;
    std::ostringstream csv;
    csv.precision(12);
    csv << "# config_hash=" << cfg.hash() << "\n";
    csv << "polarization,snr_db,eta_linear,eta_dB,err_db\n";
    csv << "x," << fmt(db10(s.snr.snr_x)) << "," << fmt(e.eta_x) << "," << fmt(to_db(e.eta_x)) << "," << e.err_db
        << "\n";
    csv << "y," << fmt(db10(s.snr.snr_y)) << "," << fmt(e.eta_y) << "," << fmt(to_db(e.eta_y)) << "," << e.err_db
        << "\n";
    emit(o, "ssfm", csv.str(), js);
    return Ok;
}

int cmd_validate(const Common& o, double tolerance_db)
{
    const auto cfg = load(o);
    const auto cs = load_constellations(cfg);
    const auto plan = channel_plan(cfg, cs);
    const auto b = run_nli(cfg, plan, cfg.link);
    auto run = sim_run(cfg, cs);
    const auto t0 = std::chrono::steady_clock::now();
    auto e = estimate_eta(run, cfg.ssfm.remove_sci);
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    struct Row {
        std::string name;
        double model, ssfm;
    };
    std::vector<Row> rows = {{"eta_x", b.total_x(), e.eta_x}, {"eta_y", b.total_y(), e.eta_y}};
    if (cfg.ssfm.remove_sci && cfg.wdm.n_channels > 1)
        rows.push_back({"eta_x_non_sci", b.pol[0].xci() + b.pol[0].mci(), e.non_sci_x()}),
            rows.push_back({"eta_y_non_sci", b.pol[1].xci() + b.pol[1].mci(), e.non_sci_y()});
    std::ostringstream csv;
    csv.precision(12);
    csv << "# config_hash=" << cfg.hash() << " ssfm_err_db=" << e.err_db << "\n";
    csv << "quantity,model_db,ssfm_db,delta_db,abs_delta_db\n";
    nlohmann::json js;
    js["config_hash"] = cfg.hash();
    js["ssfm"] = ssfm_json(e, nullptr);
    bool ok = true;
    for (const auto& r : rows) {
        const double d = to_db(r.model) - to_db(r.ssfm);
        ok = ok && std::abs(d) <= tolerance_db;
        csv << r.name << "," << fmt(to_db(r.model)) << "," << fmt(to_db(r.ssfm)) << "," << fmt(d) << ","
            << fmt(std::abs(d)) << "\n";
        js["rows"].push_back({{"quantity", r.name},
                              {"model_db", to_db(r.model)},
                              {"ssfm_db", to_db(r.ssfm)},
                              {"delta_db", d}});
        std::cerr << r.name << ": model " << to_db(r.model) << " dB, ssfm " << to_db(r.ssfm) << " dB, delta "
                  << d << " dB\n";
    }
    js["tolerance_db"] = tolerance_db;
    js["pass"] = ok;
    emit(o, "validate", csv.str(), js);
    return ok ? Ok : ValidationFailed;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"NLI and effective-SNR engine for dual-polarization 4D formats"};
    app.require_subcommand(1);
    Common o;
    auto add_common = [&](CLI::App* s) {
        s->add_option("--config", o.config, "JSON run configuration");
        s->add_option("--preset", o.preset, "Fiber preset applied under the config")
            ->check(CLI::IsMember({"smf", "nzdsf", "ldf"}));
        s->add_option("--out-dir", o.out_dir, "Directory for output files");
        s->add_option("--seed", o.seed, "Override quadrature and simulation seeds");
        s->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    };
    auto* moments_cmd = app.add_subcommand("moments", "Moments and modulation-dependent coefficients");
    auto* nli_cmd = app.add_subcommand("nli", "NLI coefficient breakdown");
    auto* sweep_cmd = app.add_subcommand("snr-sweep", "Effective SNR versus distance");
    auto* gmi_cmd = app.add_subcommand("gmi", "GMI and NGMI over an SNR grid");
    auto* ssfm_cmd = app.add_subcommand("ssfm", "Split-step simulation of the configured link");
    auto* val_cmd = app.add_subcommand("validate", "Model versus simulation report");
    for (auto* s : {moments_cmd, nli_cmd, sweep_cmd, gmi_cmd, ssfm_cmd, val_cmd})
        add_common(s);
    bool exact = false;
    sweep_cmd->add_flag("--exact-eta", exact, "Integrate eta at every span count instead of the power-law fit");
    int order = 10;
    gmi_cmd->add_option("--order", order, "Gauss-Hermite nodes per dimension")->check(CLI::Range(2, 40));
    std::string dump;
    ssfm_cmd->add_option("--dump-field", dump, "Write the output field as interleaved float64");
    double tol = 0.3;
    val_cmd->add_option("--tolerance-db", tol, "Largest accepted |model - ssfm| in dB");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*moments_cmd)
            return cmd_moments(o);
        if (*nli_cmd)
            return cmd_nli(o);
        if (*sweep_cmd)
            return cmd_snr_sweep(o, exact);
        if (*gmi_cmd)
            return cmd_gmi(o, order);
        if (*ssfm_cmd)
            return cmd_ssfm(o, dump);
        if (*val_cmd)
            return cmd_validate(o, tol);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return BadConfig;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return BadConfig;
    } catch (const std::domain_error& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return BadConfig;
    } catch (const LabelingError& e) {
        std::cerr << "labeling error: " << e.what() << "\n";
        return BadConfig;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence failure: " << e.what() << " (error estimate " << e.error_estimate << ")\n";
        return NoConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Failure;
    }
    return Ok;
}
