#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "petc/certify.hpp"
#include "petc/dynamics.hpp"
#include "petc/errors.hpp"
#include "petc/vec.hpp"

namespace petc {

enum class TriggerRule { Linear, Exponential, Adaptive };

inline const char* to_string(TriggerRule r) {
    switch (r) {
        case TriggerRule::Linear: return "linear";
        case TriggerRule::Exponential: return "exponential";
        case TriggerRule::Adaptive: return "adaptive";
    }
    return "?";
}

inline TriggerRule trigger_rule_from_string(const std::string& s) {
    if (s == "linear") return TriggerRule::Linear;
    if (s == "exponential") return TriggerRule::Exponential;
    if (s == "adaptive") return TriggerRule::Adaptive;
    throw ConfigError("unknown trigger rule '" + s + "'");
}

/// Piecewise-constant nonnegative schedule over sampling indices, used by the
/// adaptive rule. Value i applies on [breaks[i], breaks[i+1]); the last value
/// extends to infinity.
struct CnSchedule {
    std::vector<std::int64_t> breaks;
    std::vector<double> values;

    static CnSchedule zero() { return CnSchedule{{0}, {0.0}}; }

    void validate() const {
        if (breaks.empty() || breaks.size() != values.size())
            throw ConfigError("c_n schedule: breaks and values must be nonempty and equal length");
        if (breaks.front() != 0) throw ConfigError("c_n schedule: first break must be 0");
        for (std::size_t i = 1; i < breaks.size(); ++i)
            if (breaks[i] <= breaks[i - 1])
                throw ConfigError("c_n schedule: breaks must be strictly increasing");
        for (double v : values)
            if (v < 0.0) throw ConfigError("c_n schedule: values must be nonnegative");
    }

    double at(std::int64_t z) const {
        std::size_t i = 0;
        while (i + 1 < breaks.size() && z >= breaks[i + 1]) ++i;
        return values[i];
    }
};

/// How the trigger is parameterized from configuration. Zero-valued nu and
/// exp_rate mean "derive from the certified constants".
struct TriggerParams {
    TriggerRule rule = TriggerRule::Linear;
    std::int64_t nu = 0;
    double exp_rate = 0.0;
    CnSchedule cn = CnSchedule::zero();
};

/// Forced-trigger horizon when none is configured: the number of sampling
/// periods after which the reference envelope has decayed by e^-1.
inline std::int64_t default_nu(double sigma, double k_rate, double h) {
    if (sigma <= 0.0 || k_rate <= 0.0 || h <= 0.0)
        throw ConfigError("default_nu: sigma, rate and h must be positive");
    const std::int64_t cap = 1000000;
    const double v = std::ceil(1.0 / (sigma * k_rate * h));
    if (!(v > 0.0) || v >= static_cast<double>(cap)) return cap;
    return static_cast<std::int64_t>(v);
}

/// Mutable state of the dynamic trigger between sampling instants.
struct TriggerState {
    std::int64_t i_ref = 0;   // index of the last successful transmission
    double V_ref = 0.0;       // Lyapunov value at the last success
    int m_bar = 0;            // failed transmissions since the last success
    Vec u_star;               // input held at the actuator
    std::int64_t nu = 0;      // forced-trigger horizon
    TriggerRule rule = TriggerRule::Linear;
    double exp_rate = 0.0;    // K of the exponential envelope
    CnSchedule cn = CnSchedule::zero();
};

enum class TriggerReason { Initial, ForcedByNu, RuleViolated, NoSend, Periodic };

inline const char* to_string(TriggerReason r) {
    switch (r) {
        case TriggerReason::Initial: return "Initial";
        case TriggerReason::ForcedByNu: return "ForcedByNu";
        case TriggerReason::RuleViolated: return "RuleViolated";
        case TriggerReason::NoSend: return "NoSend";
        case TriggerReason::Periodic: return "Periodic";
    }
    return "?";
}

inline TriggerReason trigger_reason_from_string(const std::string& s) {
    if (s == "Initial") return TriggerReason::Initial;
    if (s == "ForcedByNu") return TriggerReason::ForcedByNu;
    if (s == "RuleViolated") return TriggerReason::RuleViolated;
    if (s == "NoSend") return TriggerReason::NoSend;
    if (s == "Periodic") return TriggerReason::Periodic;
    throw ParseError("unknown trigger reason '" + s + "'");
}

struct TriggerDecision {
    bool send = false;
    double sigma_z = 0.0;    // predicted Lyapunov growth over the loss horizon
    double threshold = 0.0;  // right-hand side of the active rule
    TriggerReason reason = TriggerReason::NoSend;
};

/// Sets up the trigger at z = 0. The first transmission is carried out
/// unconditionally and is successful by protocol.
inline TriggerState initialize(const SystemModel& model, const Vec& x0,
                               const TriggerParams& params, const CertificationConstants& k) {
    TriggerState st;
    st.i_ref = 0;
    st.V_ref = model.lyapunov(x0);
    st.m_bar = 0;
    st.u_star = model.input_at(x0);
    st.nu = params.nu > 0 ? params.nu : default_nu(k.sigma, k.k_rate, k.h);
    st.rule = params.rule;
    st.exp_rate = params.exp_rate > 0.0 ? params.exp_rate : k.k_rate;
    st.cn = params.cn;
    st.cn.validate();
    return st;
}

/// Predicted growth of V over the remaining loss horizon h (m - m_bar + 1),
/// evaluated at the current state under the held input.
inline double sigma_z(const SystemModel& model, const CertificationConstants& k, const Vec& x,
                      const TriggerState& st) {
    if (!model.in_domain(x)) throw DomainError("sigma_z: state outside the admissible domain");
    const double horizon = k.h * (k.m - st.m_bar + 1);
    const Vec g = model.lyapunov_gradient(x);
    const Vec f = model.vector_field(x, st.u_star);
    const double lf = dot(g, f);
    const double intensity = norm(g) * norm(f) + dot(f, f);
    return horizon * lf + (2.0 / 3.0) * std::pow(horizon, 1.5) * k.mu_c * intensity;
}

/// Evaluates the trigger at sampling index z >= 1. Pure in all arguments.
/// Equality with the threshold triggers a send.
inline TriggerDecision evaluate(std::int64_t z, const Vec& x, const SystemModel& model,
                                const CertificationConstants& k, const TriggerState& st) {
    if (z < 1) throw PreconditionError("evaluate: z must be >= 1 (z = 0 is the initial send)");
    TriggerDecision d;
    d.sigma_z = sigma_z(model, k, x, st);
    const double elapsed = static_cast<double>(z - st.i_ref + k.m - st.m_bar + 1) * k.h;
    switch (st.rule) {
        case TriggerRule::Linear:
            d.threshold = st.V_ref - elapsed * k.sigma * model.gamma(st.V_ref);
            break;
        case TriggerRule::Exponential:
            d.threshold = std::exp(-st.exp_rate * k.sigma * elapsed) * st.V_ref;
            break;
        case TriggerRule::Adaptive:
            d.threshold = st.V_ref - elapsed * (k.sigma + st.cn.at(z)) * model.gamma(st.V_ref);
            break;
    }
    if (z - st.i_ref > st.nu) {
        d.send = true;
        d.reason = TriggerReason::ForcedByNu;
    } else if (model.lyapunov(x) + d.sigma_z >= d.threshold) {
        d.send = true;
        d.reason = TriggerReason::RuleViolated;
    } else {
        d.send = false;
        d.reason = TriggerReason::NoSend;
    }
    return d;
}

/// Advances the trigger state after a transmission attempt at index z.
inline TriggerState on_transmission_result(TriggerState st, std::int64_t z, const Vec& x,
                                           const SystemModel& model, bool success, int m) {
    if (success) {
        st.i_ref = z;
        st.V_ref = model.lyapunov(x);
        st.m_bar = 0;
        st.u_star = model.input_at(x);
    } else {
        if (st.m_bar + 1 > m)
            throw ProtocolViolation("channel lost " + std::to_string(st.m_bar + 1) +
                                    " consecutive packets, bound is " + std::to_string(m));
        st.m_bar += 1;
    }
    return st;
}

}  // namespace petc
