#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "nli4d/io.hpp"

namespace fs = std::filesystem;
using nli4d::parse_csv;
using nli4d::read_file;

namespace {

struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("nli4d_cli_" + name))
    {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }

    fs::path write(const std::string& name, const std::string& text) const
    {
        std::ofstream(dir / name) << text;
        return dir / name;
    }

    int run(const std::string& args) const
    {
        const std::string cmd = std::string(NLI4D_CLI) + " " + args + " --out-dir " + dir.string() + " >" +
                                (dir / "stdout.txt").string() + " 2>" + (dir / "stderr.txt").string();
        const int st = std::system(cmd.c_str());
        return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    }
    std::string err() const { return read_file((dir / "stderr.txt").string()); }
};

} // namespace

TEST(Cli, MalformedConfigExitsWithOne)
{
    Scratch s("bad");
    const auto cfg = s.write("bad.json", R"({"link": {"foo": 1}})");
    EXPECT_EQ(s.run("nli --config " + cfg.string()), 1);
    EXPECT_NE(s.err().find("unknown key 'link.foo'"), std::string::npos) << s.err();
    EXPECT_FALSE(fs::exists(s.dir / "nli.csv"));

    const auto broken = s.write("broken.json", "{ not json");
    EXPECT_EQ(s.run("moments --config " + broken.string()), 1);
}

TEST(Cli, MissingConstellationFileExitsWithOne)
{
    Scratch s("missing");
    const auto cfg = s.write("c.json", R"({"constellations": "no/such/file.txt"})");
    EXPECT_EQ(s.run("moments --config " + cfg.string()), 1);
}

TEST(Cli, ZeroNonlinearityGivesZeroEta)
{
    Scratch s("gamma0");
    const auto cfg = s.write("g.json", R"({"constellations": "constellations/pm_qpsk.txt",
        "link": {"gamma": 0.0, "n_spans": 2}, "wdm": {"n_channels": 3}})");
    ASSERT_EQ(s.run("nli --config " + cfg.string()), 0) << s.err();
    const auto t = parse_csv(read_file((s.dir / "nli.csv").string()));
    ASSERT_FALSE(t.rows.empty());
    for (size_t r = 0; r < t.rows.size(); ++r)
        EXPECT_EQ(t.num(r, "eta_linear"), 0.0);
}

TEST(Cli, MomentsCarryConfigHashInBothFormats)
{
    Scratch s("moments");
    const auto cfg = s.write("m.json", R"({"constellations": "constellations/cube4_16.txt"})");
    ASSERT_EQ(s.run("moments --config " + cfg.string()), 0) << s.err();
    const auto t = parse_csv(read_file((s.dir / "moments.csv").string()));
    ASSERT_FALSE(t.comments.empty());
    EXPECT_NE(t.comments[0].find("config_hash="), std::string::npos);
    ASSERT_EQ(s.run("moments --format json --config " + cfg.string()), 0);
    EXPECT_NE(read_file((s.dir / "moments.json").string()).find("\"config_hash\""), std::string::npos);
}

TEST(Cli, SnrSweepFallsWithDistance)
{
    Scratch s("sweep");
    ASSERT_EQ(s.run("snr-sweep --preset smf --config " NLI4D_EXAMPLES_DIR "/qam16_sweep.json"), 0) << s.err();
    const auto t = parse_csv(read_file((s.dir / "snr_sweep.csv").string()));
    ASSERT_GE(t.rows.size(), 4u);
    EXPECT_NE(t.comments[0].find("eps="), std::string::npos);
    for (size_t r = 1; r < t.rows.size(); ++r) {
        EXPECT_GT(t.num(r, "distance_km"), t.num(r - 1, "distance_km"));
        EXPECT_LT(t.num(r, "snr_model_sn"), t.num(r - 1, "snr_model_sn"));
        EXPECT_LE(t.num(r, "ngmi"), t.num(r - 1, "ngmi") + 1e-12);
    }
    for (size_t r = 0; r < t.rows.size(); ++r)
        EXPECT_LE(t.num(r, "snr_model_sn"), t.num(r, "snr_model_ss"));
}

TEST(Cli, GmiGridIsMonotone)
{
    Scratch s("gmi");
    const auto cfg = s.write("g.json", R"({"constellations": "constellations/l4_8.txt",
        "labels": "constellations/l4_8.labels", "sweep": {"snr_db": [0, 5, 10, 15]}})");
    ASSERT_EQ(s.run("gmi --config " + cfg.string()), 0) << s.err();
    const auto t = parse_csv(read_file((s.dir / "gmi.csv").string()));
    ASSERT_EQ(t.rows.size(), 4u);
    for (size_t r = 1; r < 4; ++r)
        EXPECT_GT(t.num(r, "gmi"), t.num(r - 1, "gmi"));
    EXPECT_NEAR(t.num(3, "ngmi"), 1.0, 0.01);
}

TEST(Cli, ValidateFailsOnImpossibleTolerance)
{
    Scratch s("validate");
    const auto cfg = s.write("v.json", R"({"constellations": "constellations/pm_qpsk.txt",
        "link": {"n_spans": 1, "amplifier": "ideal"}, "power_dbm": 0.0,
        "ssfm": {"n_symbols": 2048, "step_km": 2.0}})");
    EXPECT_EQ(s.run("validate --tolerance-db 0 --config " + cfg.string()), 3);
    EXPECT_TRUE(fs::exists(s.dir / "validate.csv"));
}
