#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nli4d/constellation.hpp"
#include "nli4d/link.hpp"
#include "nli4d/nli.hpp"
#include "nli4d/quadrature.hpp"
#include "nli4d/ssfm.hpp"

#ifndef NLI4D_DATA_DIR
#define NLI4D_DATA_DIR "data"
#endif

namespace nli4d {

struct SsfmOptions {
    int n_symbols = 1 << 14;
    int samples_per_symbol = 4;
    double step_km = 0.25;
    bool noise = false;
    bool remove_sci = false;
    std::uint64_t seed = 1;
};

struct SweepOptions {
    std::vector<int> spans;
    std::vector<double> snr_db;
    double target_ngmi = 0.8;
    bool with_sn = true;
};

struct RunConfig {
    LinkSpec link;
    WdmSpec wdm;
    std::vector<std::string> constellations; // resolved paths, 1 or n_channels
    std::string labels;                      // resolved path or empty
    double power_dbm = -20.0;
    QuadratureControl quad;
    NliOptions nli;
    SsfmOptions ssfm;
    SweepOptions sweep;
    nlohmann::json raw; // the merged document, as validated

    std::string hash() const;
};

namespace detail {

// FNV-1a over the canonical (sorted-key) serialization.
inline std::string fnv1a_hex(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

inline const std::map<std::string, std::set<std::string>>& schema()
{
    static const std::map<std::string, std::set<std::string>> s = {
        {"", {"link", "wdm", "constellations", "labels", "power_dbm", "quadrature", "nli", "ssfm", "sweep",
              "description"}},
        {"link", {"alpha_db_per_km", "dispersion_ps_nm_km", "beta2_ps2_per_km", "gamma", "span_km", "n_spans",
                  "nf_db", "amplifier"}},
        {"wdm", {"symbol_rate_gbd", "n_channels", "spacing_ghz", "rolloff", "pulse"}},
        {"quadrature", {"rel_tol", "max_evals", "seed", "method", "outer_nodes", "table_refine", "qmc_points"}},
        {"nli", {"sci", "xci", "mci"}},
        {"ssfm", {"n_symbols", "samples_per_symbol", "step_km", "noise", "remove_sci", "seed"}},
        {"sweep", {"spans", "snr_db", "target_ngmi", "with_sn"}},
    };
    return s;
}

inline void check_keys(const nlohmann::json& j, const std::string& section)
{
    const std::string where = section.empty() ? "config" : section;
    if (!j.is_object())
        throw ConfigError(where + ": expected an object");
    const auto& allowed = schema().at(section);
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string path = section.empty() ? it.key() : section + "." + it.key();
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + path + "'");
        if (schema().count(path))
            check_keys(it.value(), path);
    }
}

template <class T>
T get(const nlohmann::json& j, const std::string& section, const std::string& key, T fallback)
{
    if (!j.contains(section) || !j[section].contains(key))
        return fallback;
    const auto& v = j[section][key];
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("'" + section + "." + key + "' has the wrong type (" + v.type_name() + ")");
    }
}

template <class T>
T get_top(const nlohmann::json& j, const std::string& key, T fallback)
{
    if (!j.contains(key))
        return fallback;
    try {
        return j[key].get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("'" + key + "' has the wrong type (" + j[key].type_name() + ")");
    }
}

inline std::string resolve(const std::string& p, const std::filesystem::path& base)
{
    namespace fs = std::filesystem;
    const fs::path q(p);
    if (q.is_absolute())
        return q.string();
    for (const fs::path& root : {base, fs::path(NLI4D_DATA_DIR)})
        if (!root.empty() && fs::exists(root / q))
            return (root / q).string();
    return q.string();
}

} // namespace detail

inline std::string RunConfig::hash() const { return detail::fnv1a_hex(raw.dump()); }

inline std::string preset_path(const std::string& name)
{
    return std::string(NLI4D_DATA_DIR) + "/presets/" + name + ".json";
}

inline nlohmann::json read_json(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot open " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// Build a validated configuration. The preset (if any) is applied first and
// the document is merged on top of it.
inline RunConfig parse_config(nlohmann::json doc, const std::string& base_dir = ".",
                              const std::string& preset = "")
{
    using detail::get;
    detail::check_keys(doc, "");
    nlohmann::json j = nlohmann::json::object();
    if (!preset.empty()) {
        static const std::set<std::string> known = {"smf", "nzdsf", "ldf"};
        if (!known.count(preset))
            throw ConfigError("unknown preset '" + preset + "' (expected smf, nzdsf or ldf)");
        j = read_json(preset_path(preset));
        detail::check_keys(j, "");
    }
    j.merge_patch(doc);

    RunConfig c;
    c.raw = j;
    auto& l = c.link;
    if (j.contains("link") && j["link"].contains("dispersion_ps_nm_km") && j["link"].contains("beta2_ps2_per_km"))
        throw ConfigError("'link' sets both dispersion_ps_nm_km and beta2_ps2_per_km");
    l.alpha = alpha_from_db(get(j, "link", "alpha_db_per_km", 0.2));
    l.beta2 = j.contains("link") && j["link"].contains("beta2_ps2_per_km")
                  ? get(j, "link", "beta2_ps2_per_km", 0.0)
                  : beta2_from_dispersion(get(j, "link", "dispersion_ps_nm_km", 17.0));
    l.gamma = get(j, "link", "gamma", 1.3);
    l.span_km = get(j, "link", "span_km", 80.0);
    l.n_spans = get(j, "link", "n_spans", 1);
    l.nf_db = get(j, "link", "nf_db", 5.0);
    const auto amp = get<std::string>(j, "link", "amplifier", "edfa");
    if (amp != "edfa" && amp != "ideal")
        throw ConfigError("'link.amplifier' must be \"edfa\" or \"ideal\"");
    l.amp = amp == "edfa" ? Amplifier::Edfa : Amplifier::Ideal;

    auto& w = c.wdm;
    w.rs = get(j, "wdm", "symbol_rate_gbd", 45.0) * 1e9;
    w.n_channels = get(j, "wdm", "n_channels", 1);
    w.spacing = get(j, "wdm", "spacing_ghz", 50.0) * 1e9;
    w.rolloff = get(j, "wdm", "rolloff", 0.0);
    const auto pulse = get<std::string>(j, "wdm", "pulse", "rect");
    if (pulse != "rect" && pulse != "rrc")
        throw ConfigError("'wdm.pulse' must be \"rect\" or \"rrc\"");
    w.pulse = pulse == "rect" ? Pulse::Rect : Pulse::Rrc;
    try {
        validate(l);
        validate(w);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    const std::filesystem::path base(base_dir);
    if (j.contains("constellations")) {
        const auto& cs = j["constellations"];
        if (cs.is_string())
            c.constellations.push_back(detail::resolve(cs.get<std::string>(), base));
        else if (cs.is_array()) {
            for (size_t i = 0; i < cs.size(); ++i) {
                if (!cs[i].is_string())
                    throw ConfigError("'constellations[" + std::to_string(i) + "]' must be a path string");
                c.constellations.push_back(detail::resolve(cs[i].get<std::string>(), base));
            }
        } else
            throw ConfigError("'constellations' must be a path or a list of paths");
        if (c.constellations.size() != 1 && int(c.constellations.size()) != w.n_channels)
            throw ConfigError("'constellations' needs 1 entry or one per channel (" +
                              std::to_string(w.n_channels) + ")");
    }
    if (j.contains("labels"))
        c.labels = detail::resolve(detail::get_top<std::string>(j, "labels", ""), base);
    c.power_dbm = detail::get_top(j, "power_dbm", -20.0);

    auto& q = c.quad;
    q.rel_tol = get(j, "quadrature", "rel_tol", q.rel_tol);
    q.max_evals = get(j, "quadrature", "max_evals", q.max_evals);
    q.seed = get(j, "quadrature", "seed", q.seed);
    q.outer_nodes = get(j, "quadrature", "outer_nodes", q.outer_nodes);
    q.table_refine = get(j, "quadrature", "table_refine", q.table_refine);
    q.qmc_points = get(j, "quadrature", "qmc_points", q.qmc_points);
    const auto method = get<std::string>(j, "quadrature", "method", "factorized");
    if (method != "factorized" && method != "qmc")
        throw ConfigError("'quadrature.method' must be \"factorized\" or \"qmc\"");
    q.method = method == "qmc" ? QuadMethod::Qmc : QuadMethod::Factorized;
    if (!(q.rel_tol > 0.0 && q.rel_tol < 1.0))
        throw ConfigError("'quadrature.rel_tol' must lie in (0, 1)");
    if (q.outer_nodes < 2)
        throw ConfigError("'quadrature.outer_nodes' must be at least 2");

    c.nli.sci = get(j, "nli", "sci", true);
    c.nli.xci = get(j, "nli", "xci", true);
    c.nli.mci = get(j, "nli", "mci", true);

    auto& s = c.ssfm;
    s.n_symbols = get(j, "ssfm", "n_symbols", s.n_symbols);
    s.samples_per_symbol = get(j, "ssfm", "samples_per_symbol", s.samples_per_symbol);
    s.step_km = get(j, "ssfm", "step_km", s.step_km);
    s.noise = get(j, "ssfm", "noise", s.noise);
    s.remove_sci = get(j, "ssfm", "remove_sci", s.remove_sci);
    s.seed = get(j, "ssfm", "seed", s.seed);

    auto& sw = c.sweep;
    sw.spans = get(j, "sweep", "spans", std::vector<int>{});
    sw.snr_db = get(j, "sweep", "snr_db", std::vector<double>{});
    sw.target_ngmi = get(j, "sweep", "target_ngmi", sw.target_ngmi);
    sw.with_sn = get(j, "sweep", "with_sn", sw.with_sn);
    for (int ns : sw.spans)
        if (ns < 1)
            throw ConfigError("'sweep.spans' entries must be at least 1");
    return c;
}

inline RunConfig load_config(const std::string& path, const std::string& preset = "")
{
    auto doc = path.empty() ? nlohmann::json::object() : read_json(path);
    const auto base = path.empty() ? std::string(".") : std::filesystem::path(path).parent_path().string();
    return parse_config(std::move(doc), base.empty() ? "." : base, preset);
}

// The constellation for each channel, normalized to unit energy.
inline std::vector<Constellation4D> load_constellations(const RunConfig& c)
{
    if (c.constellations.empty())
        throw ConfigError("'constellations' is required for this command");
    std::vector<Constellation4D> out;
    for (const auto& p : c.constellations)
        out.push_back(normalize(load(p)));
    return out;
}

inline ChannelPlan channel_plan(const RunConfig& c, const std::vector<Constellation4D>& cs)
{
    if (cs.size() == 1)
        return ChannelPlan::uniform(moments(cs[0]), c.wdm.n_channels);
    std::vector<MomentSet> m;
    for (const auto& k : cs)
        m.push_back(moments(k));
    return ChannelPlan(std::move(m));
}

inline SimRun sim_run(const RunConfig& c, const std::vector<Constellation4D>& cs)
{
    SimRun r;
    r.seed = c.ssfm.seed;
    r.n_symbols = c.ssfm.n_symbols;
    r.samples_per_symbol = c.ssfm.samples_per_symbol;
    r.step_km = c.ssfm.step_km;
    r.wdm = c.wdm;
    r.link = c.link;
    r.formats = cs;
    r.power_w = dbm_to_w(c.power_dbm);
    r.noise_on = c.ssfm.noise;
    return r;
}

} // namespace nli4d
