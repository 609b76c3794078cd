#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "petc/certify.hpp"
#include "petc/channel.hpp"
#include "petc/dynamics.hpp"
#include "petc/errors.hpp"
#include "petc/integrate.hpp"
#include "petc/io.hpp"
#include "petc/trigger.hpp"
#include "petc/vec.hpp"

namespace petc {

/// Everything one closed-loop run needs.
struct SimConfig {
    SystemModel model;
    LevelSet set;
    CertificationConstants constants;
    TriggerParams trigger;
    ChannelModel channel = ChannelModel::always_deliver(0);
    Vec x0;
    double horizon = 0.0;  // seconds
    int substeps = 1;      // integrator steps per sampling period
};

/// Sampling-grid record of one run. Column layout matches the CSV emission
/// exactly; derived quantities (successful transmission times, failure
/// counters) are reconstructed from the sent/delivered columns.
struct TrajectoryLog {
    int n = 0;
    int b = 0;
    double h = 0.0;
    int substeps = 1;
    std::string model_name;
    std::string rule_name;
    bool trace_exhausted = false;  // a deterministic dropout trace ran out mid-run

    std::vector<double> t, V, S, sigma_z, threshold;
    std::vector<double> x, xhat, u;  // row-major, n / n / b entries per row
    std::vector<std::uint8_t> sent, delivered;
    std::vector<TriggerReason> reason;

    std::size_t rows() const { return t.size(); }

    Vec state(std::size_t i) const { return Vec(x.begin() + i * n, x.begin() + (i + 1) * n); }
    Vec held(std::size_t i) const {
        return Vec(xhat.begin() + i * n, xhat.begin() + (i + 1) * n);
    }
    Vec input(std::size_t i) const { return Vec(u.begin() + i * b, u.begin() + (i + 1) * b); }

    /// Row indices of successful transmissions, starting with z = 0.
    std::vector<std::size_t> success_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < rows(); ++i)
            if (sent[i] && delivered[i]) idx.push_back(i);
        return idx;
    }

    /// Failed sends since the last success, as seen by the trigger when it
    /// evaluated row i (the row's own outcome not yet applied).
    std::vector<int> failures_before() const {
        std::vector<int> out(rows(), 0);
        int run = 0;
        for (std::size_t i = 0; i < rows(); ++i) {
            out[i] = run;
            if (sent[i]) run = delivered[i] ? 0 : run + 1;
        }
        return out;
    }

    void write_csv(std::ostream& os) const;
    static TrajectoryLog read_csv(std::istream& is);
};

inline void TrajectoryLog::write_csv(std::ostream& os) const {
    os << "z,t";
    for (int i = 0; i < n; ++i) os << ",x" << i;
    for (int i = 0; i < n; ++i) os << ",xhat" << i;
    for (int i = 0; i < b; ++i) os << ",u" << i;
    os << ",V,S,sent,delivered,reason,sigma_z,threshold\n";
    for (std::size_t r = 0; r < rows(); ++r) {
        os << fmt_int(static_cast<std::int64_t>(r)) << ',' << fmt_real(t[r]);
        for (int i = 0; i < n; ++i) os << ',' << fmt_real(x[r * n + i]);
        for (int i = 0; i < n; ++i) os << ',' << fmt_real(xhat[r * n + i]);
        for (int i = 0; i < b; ++i) os << ',' << fmt_real(u[r * b + i]);
        os << ',' << fmt_real(V[r]) << ',' << fmt_real(S[r]) << ',' << int(sent[r]) << ','
           << int(delivered[r]) << ',' << to_string(reason[r]) << ',' << fmt_real(sigma_z[r])
           << ',' << fmt_real(threshold[r]) << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline double parse_real(const std::string& s, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ParseError("line " + std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
}

}  // namespace detail

inline TrajectoryLog TrajectoryLog::read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty trajectory file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = detail::split_csv_line(line);

    TrajectoryLog log;
    std::size_t pos = 2;  // past z,t
    if (header.size() < 9 || header[0] != "z" || header[1] != "t")
        throw ParseError("trajectory header must start with z,t");
    while (pos < header.size() && header[pos] == "x" + std::to_string(log.n)) {
        ++log.n;
        ++pos;
    }
    for (int i = 0; i < log.n; ++i, ++pos)
        if (pos >= header.size() || header[pos] != "xhat" + std::to_string(i))
            throw ParseError("trajectory header: expected xhat" + std::to_string(i));
    while (pos < header.size() && header[pos] == "u" + std::to_string(log.b)) {
        ++log.b;
        ++pos;
    }
    const std::vector<std::string> tail = {"V", "S", "sent", "delivered", "reason",
                                           "sigma_z", "threshold"};
    for (const std::string& name : tail) {
        if (pos >= header.size() || header[pos] != name)
            throw ParseError("trajectory header: expected column '" + name + "'");
        ++pos;
    }
    if (pos != header.size() || log.n < 1 || log.b < 1)
        throw ParseError("trajectory header: unexpected layout");

    const std::size_t fields = 9 + 2 * log.n + log.b;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> f = detail::split_csv_line(line);
        if (f.size() != fields)
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(fields) + " fields, got " + std::to_string(f.size()));
        std::size_t k = 0;
        const long long z = std::strtoll(f[k++].c_str(), nullptr, 10);
        if (z != static_cast<long long>(log.rows()))
            throw ParseError("line " + std::to_string(line_no) + ": nonconsecutive index z");
        log.t.push_back(detail::parse_real(f[k++], line_no));
        for (int i = 0; i < log.n; ++i) log.x.push_back(detail::parse_real(f[k++], line_no));
        for (int i = 0; i < log.n; ++i) log.xhat.push_back(detail::parse_real(f[k++], line_no));
        for (int i = 0; i < log.b; ++i) log.u.push_back(detail::parse_real(f[k++], line_no));
        log.V.push_back(detail::parse_real(f[k++], line_no));
        log.S.push_back(detail::parse_real(f[k++], line_no));
        log.sent.push_back(f[k] == "1" ? 1 : 0);
        if (f[k] != "0" && f[k] != "1")
            throw ParseError("line " + std::to_string(line_no) + ": sent must be 0/1");
        ++k;
        log.delivered.push_back(f[k] == "1" ? 1 : 0);
        if (f[k] != "0" && f[k] != "1")
            throw ParseError("line " + std::to_string(line_no) + ": delivered must be 0/1");
        ++k;
        log.reason.push_back(trigger_reason_from_string(f[k++]));
        log.sigma_z.push_back(detail::parse_real(f[k++], line_no));
        log.threshold.push_back(detail::parse_real(f[k++], line_no));
    }
    if (log.rows() == 0) throw ParseError("trajectory file has no data rows");
    if (log.rows() >= 2) log.h = log.t[1] - log.t[0];
    return log;
}

// ---------------------------------------------------------------------------
// Closed-loop execution
// ---------------------------------------------------------------------------

namespace detail {

inline void append_row(TrajectoryLog& log, std::int64_t z, double time, const Vec& x,
                       const Vec& xh, const Vec& uu, double V, double S,
                       const TriggerDecision& d, bool was_sent, bool was_delivered) {
    (void)z;
    log.t.push_back(time);
    log.x.insert(log.x.end(), x.begin(), x.end());
    log.xhat.insert(log.xhat.end(), xh.begin(), xh.end());
    log.u.insert(log.u.end(), uu.begin(), uu.end());
    log.V.push_back(V);
    log.S.push_back(S);
    log.sent.push_back(was_sent ? 1 : 0);
    log.delivered.push_back(was_delivered ? 1 : 0);
    log.reason.push_back(d.reason);
    log.sigma_z.push_back(d.sigma_z);
    log.threshold.push_back(d.threshold);
}

/// Shared main loop; `periodic` replaces the trigger rule with an
/// unconditional send at every sampling instant.
inline TrajectoryLog run_loop(const SimConfig& cfg, bool periodic) {
    const SystemModel& model = cfg.model;
    const CertificationConstants& k = cfg.constants;
    if (static_cast<int>(cfg.x0.size()) != model.state_dim)
        throw ConfigError("initial state dimension does not match the model");
    if (cfg.channel.m() != k.m)
        throw ConfigError("channel loss bound differs from the certified loss bound m");
    if (!cfg.set.contains(cfg.x0))
        throw ConfigError("initial state is outside the certified region of attraction");
    if (k.h <= 0.0) throw ConfigError("sampling period must be positive");
    if (cfg.horizon < k.h) throw ConfigError("horizon must cover at least one sampling period");
    if (cfg.substeps < 1) throw ConfigError("substeps must be >= 1");

    const double h = k.h;
    const std::int64_t last = static_cast<std::int64_t>(std::floor(cfg.horizon / h + 1e-9));

    TrajectoryLog log;
    log.n = model.state_dim;
    log.b = model.input_dim;
    log.h = h;
    log.substeps = cfg.substeps;
    log.model_name = model.name;
    log.rule_name = periodic ? "periodic" : to_string(cfg.trigger.rule);

    ChannelModel channel = cfg.channel;
    TriggerState st = initialize(model, cfg.x0, cfg.trigger, k);

    Vec x = cfg.x0;
    Vec xh = cfg.x0;
    Vec uu = st.u_star;
    double S = model.lyapunov(cfg.x0);

    TriggerDecision initial;
    initial.send = true;
    initial.reason = TriggerReason::Initial;
    append_row(log, 0, 0.0, x, xh, uu, model.lyapunov(x), S, initial, true, true);

    for (std::int64_t z = 1; z <= last; ++z) {
        try {
            x = integrate_interval(model, x, uu, h, cfg.substeps);
        } catch (const DomainError& e) {
            throw DomainError(std::string(e.what()) + " (sampling index " + std::to_string(z) +
                              ")");
        }
        S = decay_step(model.gamma, k.sigma, S, h);

        TriggerDecision d;
        if (periodic) {
            d.send = true;
            d.reason = TriggerReason::Periodic;
        } else {
            try {
                d = evaluate(z, x, model, k, st);
            } catch (const DomainError& e) {
                throw DomainError(std::string(e.what()) + " (sampling index " +
                                  std::to_string(z) + ")");
            }
        }
        bool ok = false;
        if (d.send) {
            ok = channel.attempt(z);
            st = on_transmission_result(st, z, x, model, ok, k.m);
            if (ok) {
                xh = x;
                uu = st.u_star;
            }
        }
        append_row(log, z, static_cast<double>(z) * h, x, xh, uu, model.lyapunov(x), S, d,
                   d.send, ok);
    }
    log.trace_exhausted = channel.trace_exhausted();
    return log;
}

}  // namespace detail

/// Runs the event-triggered closed loop over the configured horizon.
inline TrajectoryLog run(const SimConfig& cfg) { return detail::run_loop(cfg, false); }

/// Time-triggered baseline: transmit at every sampling instant over the same
/// channel; used for communication-savings comparisons.
inline TrajectoryLog run_periodic_baseline(const SimConfig& cfg) {
    return detail::run_loop(cfg, true);
}

// ---------------------------------------------------------------------------
// Transmission statistics
// ---------------------------------------------------------------------------

struct TransmissionStats {
    std::size_t sends = 0;
    std::size_t successes = 0;
    double mean_gap = std::numeric_limits<double>::quiet_NaN();
    double median_gap = std::numeric_limits<double>::quiet_NaN();
    double min_gap = std::numeric_limits<double>::quiet_NaN();
    double max_gap = std::numeric_limits<double>::quiet_NaN();
};

inline TransmissionStats transmission_stats(const TrajectoryLog& log) {
    TransmissionStats s;
    for (std::size_t i = 0; i < log.rows(); ++i) s.sends += log.sent[i] ? 1 : 0;
    const std::vector<std::size_t> tau = log.success_indices();
    s.successes = tau.size();
    if (tau.size() < 2) return s;
    std::vector<double> gaps(tau.size() - 1);
    for (std::size_t i = 0; i + 1 < tau.size(); ++i)
        gaps[i] = (static_cast<double>(tau[i + 1]) - static_cast<double>(tau[i])) * log.h;
    double sum = 0.0;
    for (double g : gaps) sum += g;
    s.mean_gap = sum / gaps.size();
    std::sort(gaps.begin(), gaps.end());
    const std::size_t mid = gaps.size() / 2;
    s.median_gap = gaps.size() % 2 ? gaps[mid] : 0.5 * (gaps[mid - 1] + gaps[mid]);
    s.min_gap = gaps.front();
    s.max_gap = gaps.back();
    return s;
}

}  // namespace petc
