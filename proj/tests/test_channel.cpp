#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "petc/channel.hpp"

using namespace petc;

TEST_CASE("always-deliver channel") {
    ChannelModel c = ChannelModel::always_deliver(1);
    for (std::int64_t z = 0; z < 100; ++z) CHECK(c.attempt(z));
    CHECK(c.consecutive_failures() == 0);
}

TEST_CASE("bernoulli channel") {
    SECTION("p = 1 with m = 1 alternates loss and forced delivery") {
        ChannelModel c = ChannelModel::bernoulli(1.0, 42, 1);
        for (int i = 0; i < 50; ++i) {
            CHECK_FALSE(c.attempt(2 * i));
            CHECK(c.attempt(2 * i + 1));
        }
    }
    SECTION("p = 0 always delivers") {
        ChannelModel c = ChannelModel::bernoulli(0.0, 42, 1);
        for (int i = 0; i < 50; ++i) CHECK(c.attempt(i));
    }
    SECTION("identical seeds give identical outcome sequences") {
        ChannelModel a = ChannelModel::bernoulli(0.3, 7, 2);
        ChannelModel b = ChannelModel::bernoulli(0.3, 7, 2);
        ChannelModel other = ChannelModel::bernoulli(0.3, 8, 2);
        bool any_difference = false;
        for (int i = 0; i < 10000; ++i) {
            const bool ra = a.attempt(i);
            CHECK(ra == b.attempt(i));
            if (ra != other.attempt(i)) any_difference = true;
        }
        CHECK(any_difference);
    }
    SECTION("consecutive losses never exceed the bound") {
        for (double p : {0.1, 0.5, 0.9}) {
            for (int m : {0, 1, 3}) {
                ChannelModel c = ChannelModel::bernoulli(p, 123, m);
                int run = 0, worst = 0;
                for (int i = 0; i < 200000; ++i) {
                    run = c.attempt(i) ? 0 : run + 1;
                    worst = std::max(worst, run);
                }
                CHECK(worst <= m);
                if (p >= 0.5 && m > 0) CHECK(worst == m);  // the bound is actually exercised
            }
        }
    }
    SECTION("invalid probability rejected") {
        CHECK_THROWS_AS(ChannelModel::bernoulli(1.5, 0, 1), ConfigError);
        CHECK_THROWS_AS(ChannelModel::bernoulli(-0.1, 0, 1), ConfigError);
    }
}

TEST_CASE("deterministic traces") {
    SECTION("outcomes follow the trace exactly") {
        ChannelModel c = ChannelModel::from_trace({true, false, true, true}, 1);
        CHECK(c.attempt(0));
        CHECK_FALSE(c.attempt(1));
        CHECK(c.attempt(2));
        CHECK(c.attempt(3));
    }
    SECTION("traces violating the loss bound are rejected at load time") {
        CHECK_THROWS_AS(ChannelModel::from_trace({false, false}, 1), TraceError);
        CHECK_THROWS_AS(ChannelModel::from_trace({true, false, false, false}, 2), TraceError);
    }
    SECTION("an all-success trace satisfies any bound") {
        CHECK_NOTHROW(ChannelModel::from_trace(std::vector<bool>(1000, true), 0));
    }
    SECTION("an empty trace is valid and falls back to delivery") {
        ChannelModel c = ChannelModel::from_trace({}, 1);
        CHECK_FALSE(c.trace_exhausted());
        CHECK(c.attempt(0));
        CHECK(c.trace_exhausted());
    }
    SECTION("exhausted traces keep delivering") {
        ChannelModel c = ChannelModel::from_trace({false}, 1);
        CHECK_FALSE(c.attempt(0));
        for (int i = 1; i < 10; ++i) CHECK(c.attempt(i));
        CHECK(c.trace_exhausted());
    }
}

TEST_CASE("trace files") {
    const std::filesystem::path dir = std::filesystem::temp_directory_path() / "petc_trace_test";
    std::filesystem::create_directories(dir);

    SECTION("whitespace-insensitive decoding") {
        const auto path = dir / "ok.trace";
        std::ofstream(path) << "T F\nT\tT\n";
        ChannelModel c = ChannelModel::from_trace_file(path.string(), 1);
        CHECK(c.attempt(0));
        CHECK_FALSE(c.attempt(1));
        CHECK(c.attempt(2));
        CHECK(c.attempt(3));
    }
    SECTION("unexpected characters are rejected") {
        const auto path = dir / "bad.trace";
        std::ofstream(path) << "TFX";
        CHECK_THROWS_AS(ChannelModel::from_trace_file(path.string(), 1), TraceError);
    }
    SECTION("bound violations in files are rejected") {
        const auto path = dir / "run.trace";
        std::ofstream(path) << "TFFT";
        CHECK_THROWS_AS(ChannelModel::from_trace_file(path.string(), 1), TraceError);
        CHECK_NOTHROW(ChannelModel::from_trace_file(path.string(), 2));
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(ChannelModel::from_trace_file((dir / "nope.trace").string(), 1),
                        TraceError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("negative loss bound rejected") {
    CHECK_THROWS_AS(ChannelModel::always_deliver(-1), ConfigError);
}
