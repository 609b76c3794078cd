#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "petc/errors.hpp"

namespace petc {

enum class ChannelMode { AlwaysDeliver, Bernoulli, Trace };

inline const char* to_string(ChannelMode m) {
    switch (m) {
        case ChannelMode::AlwaysDeliver: return "always";
        case ChannelMode::Bernoulli: return "bernoulli";
        case ChannelMode::Trace: return "trace";
    }
    return "?";
}

inline ChannelMode channel_mode_from_string(const std::string& s) {
    if (s == "always") return ChannelMode::AlwaysDeliver;
    if (s == "bernoulli") return ChannelMode::Bernoulli;
    if (s == "trace") return ChannelMode::Trace;
    throw ConfigError("unknown channel mode '" + s + "'");
}

/// Lossy acknowledgment channel with a hard bound m on consecutive losses.
/// One outcome is consumed per transmission attempt; acknowledgments are
/// instantaneous. The generator state is part of the value, so copies evolve
/// independently and a fixed seed reproduces the exact outcome sequence.
class ChannelModel {
  public:
    static ChannelModel always_deliver(int m) { return ChannelModel(ChannelMode::AlwaysDeliver, m); }

    static ChannelModel bernoulli(double p, std::uint64_t seed, int m) {
        if (p < 0.0 || p > 1.0) throw ConfigError("channel: loss probability must lie in [0, 1]");
        ChannelModel c(ChannelMode::Bernoulli, m);
        c.p_ = p;
        c.rng_.seed(seed);
        return c;
    }

    /// Validates the m-bound eagerly; a trace with m+1 consecutive losses is
    /// rejected at load time.
    static ChannelModel from_trace(std::vector<bool> outcomes, int m) {
        int run = 0;
        for (bool ok : outcomes) {
            run = ok ? 0 : run + 1;
            if (run > m)
                throw TraceError("trace: " + std::to_string(run) +
                                 " consecutive losses exceed the bound m = " + std::to_string(m));
        }
        ChannelModel c(ChannelMode::Trace, m);
        c.trace_ = std::move(outcomes);
        return c;
    }

    /// Trace file format: one character per attempt, 'T' delivered / 'F' lost,
    /// whitespace ignored.
    static ChannelModel from_trace_file(const std::string& path, int m) {
        std::ifstream in(path);
        if (!in) throw TraceError("trace: cannot open '" + path + "'");
        std::vector<bool> outcomes;
        char ch;
        while (in.get(ch)) {
            if (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t') continue;
            if (ch == 'T')
                outcomes.push_back(true);
            else if (ch == 'F')
                outcomes.push_back(false);
            else
                throw TraceError(std::string("trace: unexpected character '") + ch + "' in '" +
                                 path + "'");
        }
        return from_trace(std::move(outcomes), m);
    }

    /// Delivery outcome for the attempt at sampling index z. In Bernoulli mode
    /// a loss that would be the (m+1)-th consecutive one is rejected and the
    /// packet is delivered instead. An exhausted trace falls back to
    /// always-deliver and raises the exhaustion flag.
    bool attempt(std::int64_t z) {
        (void)z;
        bool delivered = true;
        switch (mode_) {
            case ChannelMode::AlwaysDeliver:
                break;
            case ChannelMode::Bernoulli: {
                const bool loss = next_uniform() < p_;
                delivered = !loss || consecutive_failures_ == m_;
                break;
            }
            case ChannelMode::Trace:
                if (trace_pos_ < trace_.size()) {
                    delivered = trace_[trace_pos_++];
                } else {
                    trace_exhausted_ = true;
                }
                break;
        }
        consecutive_failures_ = delivered ? 0 : consecutive_failures_ + 1;
        return delivered;
    }

    ChannelMode mode() const { return mode_; }
    int m() const { return m_; }
    int consecutive_failures() const { return consecutive_failures_; }
    bool trace_exhausted() const { return trace_exhausted_; }

  private:
    ChannelModel(ChannelMode mode, int m) : mode_(mode), m_(m) {
        if (m < 0) throw ConfigError("channel: loss bound m must be nonnegative");
    }

    // 53-bit uniform in [0, 1); explicit so the stream is identical across
    // standard library implementations.
    double next_uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    ChannelMode mode_;
    int m_;
    double p_ = 0.0;
    std::mt19937_64 rng_;
    std::vector<bool> trace_;
    std::size_t trace_pos_ = 0;
    int consecutive_failures_ = 0;
    bool trace_exhausted_ = false;
};

}  // namespace petc
