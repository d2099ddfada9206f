#include <gtest/gtest.h>

#include "nli4d/config.hpp"
#include "nli4d/io.hpp"

using namespace nli4d;
using nlohmann::json;

namespace {

std::string message_of(const json& doc, const std::string& preset = "")
{
    try {
        parse_config(doc, ".", preset);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Config, UnknownKeyReportsItsPath)
{
    EXPECT_EQ(message_of({{"link", {{"foo", 1}}}}), "unknown key 'link.foo'");
    EXPECT_EQ(message_of({{"bogus", 1}}), "unknown key 'bogus'");
    EXPECT_EQ(message_of({{"ssfm", {{"stepkm", 0.1}}}}), "unknown key 'ssfm.stepkm'");
}

TEST(Config, TypeErrorsNameTheKey)
{
    const auto m = message_of({{"link", {{"n_spans", "ten"}}}});
    EXPECT_NE(m.find("link.n_spans"), std::string::npos) << m;
    EXPECT_NE(message_of({{"power_dbm", "high"}}).find("power_dbm"), std::string::npos);
    EXPECT_NE(message_of({{"link", 3}}).find("link"), std::string::npos);
}

TEST(Config, RangeAndConsistencyChecks)
{
    EXPECT_NE(message_of({{"link", {{"dispersion_ps_nm_km", 17}, {"beta2_ps2_per_km", -21}}}}), "");
    EXPECT_NE(message_of({{"link", {{"amplifier", "raman"}}}}), "");
    EXPECT_NE(message_of({{"wdm", {{"n_channels", 4}}}}), "");
    EXPECT_NE(message_of({{"quadrature", {{"rel_tol", 2.0}}}}), "");
    EXPECT_NE(message_of({{"sweep", {{"spans", {1, 0}}}}}), "");
    EXPECT_NE(message_of({}, "nosuchfiber"), "");
    EXPECT_NE(message_of({{"constellations", {"a.txt", "b.txt"}}}), "");
}

TEST(Config, PresetsLoadAndDocumentOverridesThem)
{
    const auto smf = parse_config(json::object(), ".", "smf");
    EXPECT_EQ(smf.link.n_spans, 20);
    EXPECT_EQ(smf.wdm.n_channels, 9);
    EXPECT_NEAR(smf.link.beta2, beta2_from_dispersion(17.0), 1e-12);
    const auto nz = parse_config(json::object(), ".", "nzdsf");
    const auto ldf = parse_config(json::object(), ".", "ldf");
    EXPECT_LT(std::abs(nz.link.beta2), std::abs(smf.link.beta2));
    EXPECT_LT(std::abs(ldf.link.beta2), std::abs(smf.link.beta2));
    EXPECT_GT(nz.link.gamma, smf.link.gamma);

    const auto c = parse_config({{"link", {{"n_spans", 3}}}, {"power_dbm", 1.5}}, ".", "smf");
    EXPECT_EQ(c.link.n_spans, 3);
    EXPECT_EQ(c.link.span_km, 80.0);
    EXPECT_EQ(c.power_dbm, 1.5);
}

TEST(Config, ConstellationPathsResolveAgainstDataDir)
{
    const auto c = parse_config({{"constellations", "constellations/pm_qpsk.txt"}});
    ASSERT_EQ(c.constellations.size(), 1u);
    const auto cs = load_constellations(c);
    EXPECT_EQ(cs[0].size(), 16u);
    EXPECT_NEAR(mean_power(cs[0]), 1.0, 1e-12);
}

TEST(Config, HashIsStableAndSensitive)
{
    const json a = {{"link", {{"n_spans", 3}, {"gamma", 1.3}}}, {"power_dbm", 0.0}};
    const json b = json::parse(R"({"power_dbm": 0.0, "link": {"gamma": 1.3, "n_spans": 3}})");
    EXPECT_EQ(parse_config(a).hash(), parse_config(b).hash());
    EXPECT_EQ(parse_config(a).hash().size(), 16u);
    EXPECT_NE(parse_config(a).hash(), parse_config({{"power_dbm", 1.0}}).hash());
    EXPECT_NE(parse_config(a).hash(), parse_config(a, ".", "smf").hash());
}

TEST(Config, SimRunCarriesSettings)
{
    const auto c = parse_config({{"constellations", "constellations/pm_qpsk.txt"},
                                 {"power_dbm", -3.0},
                                 {"ssfm", {{"seed", 9}, {"step_km", 0.2}, {"noise", true}}}});
    const auto r = sim_run(c, load_constellations(c));
    EXPECT_EQ(r.seed, 9u);
    EXPECT_EQ(r.step_km, 0.2);
    EXPECT_TRUE(r.noise_on);
    EXPECT_NEAR(r.power_w, dbm_to_w(-3.0), 1e-15);
}

TEST(Io, CsvRoundTripAndAtomicWrite)
{
    const std::string text = "# config_hash=00ff\n# note\na,b,c\n1,2.5,x\n-3e-4,0,y\n";
    const auto t = parse_csv(text);
    ASSERT_EQ(t.comments.size(), 2u);
    EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.num(1, "a"), -3e-4);
    EXPECT_EQ(t.column("c"), 2u);
    EXPECT_THROW(t.column("zz"), std::out_of_range);

    const auto dir = std::filesystem::temp_directory_path() / "nli4d_io_test";
    std::filesystem::create_directories(dir);
    write_atomic(dir / "t.csv", text);
    EXPECT_EQ(read_file((dir / "t.csv").string()), text);
    for (const auto& e : std::filesystem::directory_iterator(dir))
        EXPECT_EQ(e.path().filename(), "t.csv");
    std::filesystem::remove_all(dir);
}
