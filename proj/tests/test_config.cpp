#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "petc/commands.hpp"
#include "petc/config.hpp"
#include "petc/io.hpp"
#include "petc/toml.hpp"

using namespace petc;

namespace {

const char* kFullConfig = R"(# pendulum run
[model]
preset = "pendulum"

[certify]
sigma = 0.35
m = 1
samples = 20000
seed = 3
safety_factor = 1.1
L1c = 1.65
mu_c = 16.933
M_max_c = 10.94

[trigger]
rule = "adaptive"
nu = 5000
cn_breaks = [0, 100]
cn_values = [0.05, 0.0]

[channel]
mode = "bernoulli"
p = 0.5
seed = 11
m = 1

[engine]
x0 = [0.43, 0.0]
horizon = 0.5
substeps = 2

[output]
dir = "out"
prefix = "demo"
)";

}  // namespace

TEST_CASE("toml subset parser") {
    SECTION("sections, scalars, arrays and comments") {
        const TomlDocument doc = parse_toml(
            "# header\n[alpha]\nx = 1\ny = 2.5  # trailing\nname = \"hi \\\"there\\\"\"\n"
            "flag = true\narr = [1, 2.5, 3e-2]\nempty = []\n\n[beta]\n");
        CHECK(doc.get("alpha", "x").as_int("alpha.x") == 1);
        CHECK(doc.get("alpha", "y").as_double("alpha.y") == 2.5);
        CHECK(doc.get("alpha", "name").as_string("alpha.name") == "hi \"there\"");
        CHECK(doc.get("alpha", "flag").as_bool("alpha.flag"));
        const auto& arr = doc.get("alpha", "arr").as_array("alpha.arr");
        REQUIRE(arr.size() == 3);
        CHECK(arr[0].as_double("alpha.arr") == 1.0);
        CHECK(arr[2].as_double("alpha.arr") == 0.03);
        CHECK(doc.get("alpha", "empty").as_array("alpha.empty").empty());
        CHECK(doc.sections.count("beta") == 1);
    }
    SECTION("missing keys name the section and key") {
        const TomlDocument doc = parse_toml("[a]\nx = 1\n");
        CHECK_THROWS_WITH(doc.get("a", "zz"), Catch::Matchers::ContainsSubstring("a.zz"));
        CHECK_THROWS_WITH(doc.get("b", "x"), Catch::Matchers::ContainsSubstring("b.x"));
    }
    SECTION("malformed input is rejected with a line number") {
        CHECK_THROWS_WITH(parse_toml("[a]\nx 1\n"), Catch::Matchers::ContainsSubstring("line 2"));
        CHECK_THROWS_AS(parse_toml("x = 1\n"), ConfigError);            // key outside a section
        CHECK_THROWS_AS(parse_toml("[a]\nx = 1\nx = 2\n"), ConfigError);  // duplicate
        CHECK_THROWS_AS(parse_toml("[a\nx = 1\n"), ConfigError);
        CHECK_THROWS_AS(parse_toml("[a]\nx = [1, 2\n"), ConfigError);
        CHECK_THROWS_AS(parse_toml("[a]\nx = \"abc\n"), ConfigError);
        CHECK_THROWS_AS(parse_toml("[a]\nx = 1 junk\n"), ConfigError);
    }
    SECTION("type mismatches are reported") {
        const TomlDocument doc = parse_toml("[a]\nx = 1.5\ns = \"hi\"\n");
        CHECK_THROWS_AS(doc.get("a", "x").as_int("a.x"), ConfigError);
        CHECK_THROWS_AS(doc.get("a", "s").as_double("a.s"), ConfigError);
        CHECK_THROWS_AS(doc.get("a", "x").as_array("a.x"), ConfigError);
    }
}

TEST_CASE("config loading") {
    SECTION("full example parses") {
        const LabConfig cfg = parse_config(kFullConfig);
        CHECK(cfg.preset == "pendulum");
        CHECK(cfg.sigma == 0.35);
        CHECK(cfg.m == 1);
        CHECK(cfg.estimation.samples == 20000);
        CHECK(cfg.overrides.L1c.has_value());
        CHECK(cfg.overrides.mu_c.has_value());
        CHECK_FALSE(cfg.overrides.L2c.has_value());
        CHECK(cfg.trigger.rule == TriggerRule::Adaptive);
        CHECK(cfg.trigger.nu == 5000);
        CHECK(cfg.trigger.cn.values[0] == 0.05);
        CHECK(cfg.channel_mode == ChannelMode::Bernoulli);
        CHECK(cfg.channel_p == 0.5);
        CHECK(cfg.channel_m == 1);
        CHECK(cfg.require_x0() == Vec{0.43, 0.0});
        CHECK(cfg.require_horizon() == 0.5);
        CHECK(cfg.substeps == 2);
        CHECK(cfg.out_dir == "out");
        CHECK(cfg.prefix == "demo");
    }
    SECTION("missing required keys are named") {
        CHECK_THROWS_WITH(parse_config("[certify]\nsigma = 0.5\nm = 0\n"),
                          Catch::Matchers::ContainsSubstring("model.preset"));
        CHECK_THROWS_WITH(parse_config("[model]\npreset = \"pendulum\"\n[certify]\nm = 0\n"),
                          Catch::Matchers::ContainsSubstring("certify.sigma"));
        const LabConfig cfg =
            parse_config("[model]\npreset = \"pendulum\"\n[certify]\nsigma = 0.5\nm = 0\n");
        CHECK_THROWS_WITH(cfg.require_x0(), Catch::Matchers::ContainsSubstring("engine.x0"));
        CHECK_THROWS_WITH(cfg.require_horizon(),
                          Catch::Matchers::ContainsSubstring("engine.horizon"));
    }
    SECTION("out-of-range values are rejected") {
        CHECK_THROWS_AS(
            parse_config("[model]\npreset = \"p\"\n[certify]\nsigma = 1.2\nm = 0\n"),
            ConfigError);
        CHECK_THROWS_AS(
            parse_config("[model]\npreset = \"p\"\n[certify]\nsigma = 0.5\nm = -1\n"),
            ConfigError);
        CHECK_THROWS_AS(parse_config("[model]\npreset = \"p\"\n[certify]\nsigma = 0.5\nm = 0\n"
                                     "[channel]\np = 1.5\n"),
                        ConfigError);
        CHECK_THROWS_AS(parse_config("[model]\npreset = \"p\"\n[certify]\nsigma = 0.5\nm = 0\n"
                                     "[engine]\nsubsteps = 0\n"),
                        ConfigError);
        CHECK_THROWS_AS(parse_config("[model]\npreset = \"p\"\n[certify]\nsigma = 0.5\nm = 0\n"
                                     "[trigger]\nrule = \"sometimes\"\n"),
                        ConfigError);
    }
    SECTION("channel loss bound defaults to the certified one") {
        const LabConfig cfg =
            parse_config("[model]\npreset = \"pendulum\"\n[certify]\nsigma = 0.5\nm = 3\n");
        CHECK(cfg.channel_m == 3);
    }
}

TEST_CASE("config digest") {
    const std::string base(kFullConfig);
    const std::uint64_t digest = fnv1a64(base);
    CHECK(fnv1a64(base) == digest);  // deterministic
    for (std::size_t i = 0; i < base.size(); i += 37) {
        std::string mutated = base;
        mutated[i] = mutated[i] == 'x' ? 'y' : 'x';
        CHECK(fnv1a64(mutated) != digest);
    }
    CHECK(fnv1a64(base + " ") != digest);
    CHECK(hex64(digest).size() == 16);
}

TEST_CASE("real formatting round-trips doubles") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> mant(-1.0, 1.0);
    std::uniform_int_distribution<int> expo(-300, 300);
    for (int i = 0; i < 2000; ++i) {
        const double v = std::ldexp(mant(rng), expo(rng));
        const std::string s = fmt_real(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(std::strtod(fmt_real(1.385e-5).c_str(), nullptr) == 1.385e-5);
}

TEST_CASE("channel construction from config") {
    SECTION("bernoulli") {
        const LabConfig cfg = parse_config(kFullConfig);
        ChannelModel c = make_channel(cfg);
        CHECK(c.mode() == ChannelMode::Bernoulli);
        CHECK(c.m() == 1);
    }
    SECTION("always") {
        LabConfig cfg = parse_config(kFullConfig);
        cfg.channel_mode = ChannelMode::AlwaysDeliver;
        CHECK(make_channel(cfg).mode() == ChannelMode::AlwaysDeliver);
    }
    SECTION("trace path required in trace mode") {
        LabConfig cfg = parse_config(kFullConfig);
        cfg.channel_mode = ChannelMode::Trace;
        cfg.channel_trace_path.clear();
        CHECK_THROWS_WITH(make_channel(cfg),
                          Catch::Matchers::ContainsSubstring("channel.trace_path"));
    }
}

TEST_CASE("command pipeline writes artifacts") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "petc_cfg_test";
    std::filesystem::remove_all(dir);

    LabConfig cfg = parse_config(kFullConfig, "inline");
    cfg.out_dir = (dir / "out").string();
    cfg.horizon = 0.01;  // keep the artifact test fast
    RunOptions opt;
    opt.quiet = true;

    const CertificationConstants k = cmd_certify(cfg, opt);
    CHECK(k.h_sigma_masp > 0.0);
    CHECK(std::filesystem::exists(dir / "out" / "demo_certify.txt"));
    CHECK(std::filesystem::exists(dir / "out" / "demo_certify_manifest.json"));
    {
        std::ifstream in(dir / "out" / "demo_certify.csv");
        std::string header;
        REQUIRE(std::getline(in, header));
        CHECK(header ==
              "c,sigma,m,L1c,L2c,M_max_c,mu_c,h_sigma_masp,h_masp_prior,h,active_branch");
        std::string row;
        REQUIRE(std::getline(in, row));
        CHECK(row.find(",first") != std::string::npos);
    }

    const TrajectoryLog log = cmd_simulate(cfg, opt);
    CHECK(log.rows() > 100);
    const auto traj = dir / "out" / "demo_trajectory.csv";
    REQUIRE(std::filesystem::exists(traj));

    const VerificationReport report = cmd_verify(traj.string(), cfg, opt);
    CHECK(report.pass());
    CHECK(std::filesystem::exists(dir / "out" / "demo_verify.csv"));

    SECTION("certification text records provenance") {
        std::ifstream in(dir / "out" / "demo_certify.txt");
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        CHECK(text.find("L1c_source = override") != std::string::npos);
        CHECK(text.find("L2c_source = estimated") != std::string::npos);
        CHECK(text.find("active_branch = ") != std::string::npos);
    }
    SECTION("manifest carries the digest and seeds") {
        std::ifstream in(dir / "out" / "demo_certify_manifest.json");
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        CHECK(text.find(hex64(fnv1a64(cfg.raw))) != std::string::npos);
        CHECK(text.find("\"channel\": 11") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

#ifdef PETC_LAB_BIN
namespace {

int run_tool(const std::string& args) {
    const int rc = std::system((std::string(PETC_LAB_BIN) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("command-line exit codes") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "petc_cli_exit_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const std::string out = " --out " + (dir / "out").string() + " --quiet";

    auto write_cfg = [&](const char* name, const std::string& extra) {
        const auto path = dir / name;
        std::ofstream(path) << "[model]\npreset = \"pendulum\"\n"
                            << "[certify]\nsigma = 0.35\nm = 1\n"
                            << "L1c = 1.65\nL2c = 2.760564\nmu_c = 16.933\nM_max_c = 10.94\n"
                            << "[channel]\nmode = \"always\"\n"
                            << "[engine]\nx0 = [0.43, 0.0]\nhorizon = 0.01\n" << extra;
        return path.string();
    };

    const std::string good = write_cfg("good.toml", "");
    SECTION("success paths exit 0") {
        CHECK(run_tool("certify --config " + good + out) == 0);
        CHECK(run_tool("simulate --config " + good + out) == 0);
        CHECK(run_tool("verify " + (dir / "out" / "run_trajectory.csv").string() +
                       " --config " + good + out) == 0);
    }
    SECTION("configuration problems exit 2") {
        const auto bad_sigma = dir / "bad_sigma.toml";
        std::ofstream(bad_sigma)
            << "[model]\npreset = \"pendulum\"\n[certify]\nsigma = 1.2\nm = 1\n";
        CHECK(run_tool("certify --config " + bad_sigma.string() + out) == 2);

        const std::string outside =
            write_cfg("outside.toml", "");  // then shift x0 out of the level set
        std::string text;
        {
            std::ifstream in(outside);
            text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        text.replace(text.find("x0 = [0.43, 0.0]"), 16, "x0 = [0.60, 0.9]");
        std::ofstream(outside) << text;
        CHECK(run_tool("simulate --config " + outside + out) == 2);
        CHECK(run_tool("verify missing.csv --config " + good + out) == 2);
    }
    SECTION("failed verification exits 1") {
        // a sampling period far beyond the bound makes the decrease checks fail
        const std::string diag = write_cfg(
            "diag.toml", "h_override = 0.8\nsubsteps = 1000\n[output]\nprefix = \"diag\"\n");
        std::string text;
        {
            std::ifstream in(diag);
            text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        text.replace(text.find("horizon = 0.01"), 14, "horizon = 1.70");
        std::ofstream(diag) << text;
        REQUIRE(run_tool("simulate --config " + diag + out) == 0);
        CHECK(run_tool("verify " + (dir / "out" / "diag_trajectory.csv").string() +
                       " --config " + diag + out) == 1);
    }
    SECTION("domain escape exits 3") {
        const std::string escape = write_cfg(
            "escape.toml", "h_override = 1.0\nsubsteps = 100\n[output]\nprefix = \"esc\"\n");
        std::string text;
        {
            std::ifstream in(escape);
            text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        text.replace(text.find("horizon = 0.01"), 14, "horizon = 3.00");
        std::ofstream(escape) << text;
        CHECK(run_tool("simulate --config " + escape + out) == 3);
    }
    std::filesystem::remove_all(dir);
}
#endif

TEST_CASE("compare and sweep commands") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "petc_cfg_test2";
    std::filesystem::remove_all(dir);

    LabConfig cfg = parse_config(kFullConfig, "inline");
    cfg.out_dir = (dir / "out").string();
    cfg.preset = "scalar_decay";
    cfg.x0 = Vec{0.5};
    cfg.horizon = 2.0;
    cfg.trigger = TriggerParams{};
    cfg.overrides = ConstantOverrides{};
    cfg.estimation.samples = 5000;
    RunOptions opt;
    opt.quiet = true;

    SECTION("compare emits both variants") {
        const CompareResult res = cmd_compare(cfg, opt);
        CHECK(res.baseline.sends >= res.petc.sends);
        CHECK(res.savings_ratio > 1.0);
        CHECK(res.bound_ratio >= 1.0);
        CHECK(res.bound_ratio <= 2.25 + 1e-12);
        std::ifstream in(dir / "out" / "demo_compare.csv");
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        CHECK(text.find("petc,") != std::string::npos);
        CHECK(text.find("baseline,") != std::string::npos);
    }
    SECTION("sweep runs the cartesian grid and aggregates") {
        cfg.sweep_sigma = {0.2, 0.35, 0.5};
        cfg.sweep_m = {0, 1};
        setenv("PETC_LAB_THREADS", "2", 1);
        CHECK(sweep_thread_cap() == 2);
        const std::vector<SweepCell> cells = cmd_sweep(cfg, opt);
        const std::string first_pass = [&] {
            std::ifstream in(dir / "out" / "demo_sweep.csv", std::ios::binary);
            return std::string((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
        }();
        // the aggregate table must not depend on the pool partitioning
        setenv("PETC_LAB_THREADS", "1", 1);
        cmd_sweep(cfg, opt);
        {
            std::ifstream in(dir / "out" / "demo_sweep.csv", std::ios::binary);
            const std::string second_pass((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
            CHECK(first_pass == second_pass);
        }
        unsetenv("PETC_LAB_THREADS");
        REQUIRE(cells.size() == 6);
        for (const SweepCell& c : cells) {
            CHECK(c.error.empty());
            CHECK(c.verified);
        }
        // the admissible bound shrinks as sigma grows, m splits it further
        for (std::size_t i = 0; i + 2 < cells.size(); i += 2) {
            CHECK(cells[i + 2].constants.h_sigma_masp < cells[i].constants.h_sigma_masp);
        }
        for (std::size_t i = 0; i < cells.size(); i += 2) {
            CHECK(cells[i + 1].constants.h ==
                  Catch::Approx(cells[i + 1].constants.h_sigma_masp / 2.0).epsilon(1e-12));
        }
        CHECK(std::filesystem::exists(dir / "out" / "demo_sweep.csv"));
        CHECK(std::filesystem::exists(dir / "out" / "sweep" / "cell_0_manifest.json"));
    }
    std::filesystem::remove_all(dir);
}
