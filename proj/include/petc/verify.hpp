#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "petc/certify.hpp"
#include "petc/dynamics.hpp"
#include "petc/engine.hpp"
#include "petc/errors.hpp"
#include "petc/integrate.hpp"
#include "petc/io.hpp"
#include "petc/vec.hpp"

namespace petc {

// ---------------------------------------------------------------------------
// Worst-case reference envelope
// ---------------------------------------------------------------------------

/// Solves s' = -sigma*gamma(s), s(0) = V0 on the given time grid with the same
/// 4th-order stepper the engine uses. The output is nonincreasing and
/// nonnegative for every class-K gamma.
inline std::vector<double> solve_reference(const std::function<double(double)>& gamma,
                                           double sigma, double V0,
                                           const std::vector<double>& times) {
    if (V0 < 0.0) throw PreconditionError("solve_reference: V0 must be nonnegative");
    std::vector<double> s(times.size());
    if (times.empty()) return s;
    s[0] = V0;
    for (std::size_t i = 1; i < times.size(); ++i)
        s[i] = decay_step(gamma, sigma, s[i - 1], times[i] - times[i - 1]);
    return s;
}

// ---------------------------------------------------------------------------
// Check results
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool pass = false;
    double worst_margin = 0.0;   // largest (measured - allowed); <= tol means pass
    std::int64_t location = -1;  // sampling index of the worst margin
    double tolerance = 0.0;
    std::string note;
};

struct VerificationReport {
    std::vector<CheckResult> checks;

    bool pass() const {
        for (const CheckResult& c : checks)
            if (!c.pass) return false;
        return true;
    }

    std::string to_text() const {
        std::ostringstream os;
        for (const CheckResult& c : checks) {
            os << c.name << " = " << (c.pass ? "pass" : "FAIL")
               << " (worst_margin=" << fmt_real(c.worst_margin) << ", location=" << c.location
               << ", tol=" << fmt_real(c.tolerance) << ")";
            if (!c.note.empty()) os << "  # " << c.note;
            os << "\n";
        }
        os << "verdict = " << (pass() ? "pass" : "FAIL") << "\n";
        return os.str();
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "check,pass,worst_margin,location\n";
        for (const CheckResult& c : checks)
            os << c.name << ',' << (c.pass ? 1 : 0) << ',' << fmt_real(c.worst_margin) << ','
               << c.location << "\n";
        return os.str();
    }
};

/// Tolerance for Lyapunov comparisons on a logged run: a fixed relative floor
/// plus an accumulated allowance for the integrator's 4th-order local error.
inline double lyapunov_tolerance(const TrajectoryLog& log, double level_c) {
    const double base = 1e-7 * std::max(log.V.empty() ? 0.0 : log.V[0], 1e-3 * level_c);
    double vdot_scale = 0.0;
    for (std::size_t i = 0; i + 1 < log.rows(); ++i)
        vdot_scale = std::max(vdot_scale, std::abs(log.V[i + 1] - log.V[i]) / log.h);
    const double dt_sub = log.h / log.substeps;
    return base + 10.0 * std::pow(dt_sub, 4) * vdot_scale * static_cast<double>(log.rows());
}

// ---------------------------------------------------------------------------
// Individual checks
// ---------------------------------------------------------------------------

/// Time-shifted convergence: V at (z+m+1)h never exceeds the reference
/// envelope at z h.
inline CheckResult check_shifted_convergence(const TrajectoryLog& log,
                                             const std::vector<double>& S, int m, double tol) {
    if (S.size() != log.rows())
        throw ConfigError("shifted convergence: reference and log grids differ");
    CheckResult r;
    r.name = "shifted_convergence";
    r.tolerance = tol;
    r.worst_margin = -std::numeric_limits<double>::infinity();
    const std::size_t shift = static_cast<std::size_t>(m) + 1;
    for (std::size_t z = 0; z + shift < log.rows(); ++z) {
        const double margin = log.V[z + shift] - S[z];
        if (margin > r.worst_margin) {
            r.worst_margin = margin;
            r.location = static_cast<std::int64_t>(z);
        }
    }
    r.pass = r.worst_margin <= tol;
    return r;
}

/// Non-monotonic decrease between successful transmissions: V never exceeds
/// its value at the last success, and the average decrease over each interval
/// meets the rate sigma*gamma.
inline CheckResult check_nonmonotonic_decrease(const TrajectoryLog& log, const SystemModel& model,
                                               const CertificationConstants& k, double tol) {
    CheckResult r;
    r.name = "nonmonotonic_decrease";
    r.tolerance = tol;
    const std::vector<std::size_t> tau = log.success_indices();
    if (tau.size() < 2) {
        r.pass = true;
        r.worst_margin = 0.0;
        r.note = "fewer than 2 successful transmissions; vacuous";
        return r;
    }
    r.worst_margin = -std::numeric_limits<double>::infinity();
    double combined_increase = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p + 1 < tau.size(); ++p) {
        const std::size_t a = tau[p], b = tau[p + 1];
        const double V_a = log.V[a];
        for (std::size_t z = a; z < b; ++z) {
            const double margin = log.V[z] - V_a;
            if (margin > r.worst_margin) {
                r.worst_margin = margin;
                r.location = static_cast<std::int64_t>(z);
            }
        }
        const double gap = (static_cast<double>(b) - static_cast<double>(a)) * log.h;
        const double rate = (log.V[b] - V_a) / gap;
        const double rate_margin = (rate + k.sigma * model.gamma(V_a)) * gap;
        if (rate_margin > r.worst_margin) {
            r.worst_margin = rate_margin;
            r.location = static_cast<std::int64_t>(b);
        }
        // combined Lyapunov function of the flow/jump state, 1/2 (V(x) + V(xhat));
        // reported only, its decrease is implied by the two conditions above
        const double w_a = 0.5 * (log.V[a] + model.lyapunov(log.held(a)));
        const double w_b = 0.5 * (log.V[b] + model.lyapunov(log.held(b)));
        combined_increase = std::max(combined_increase, w_b - w_a);
    }
    r.pass = r.worst_margin <= tol;
    r.note = "max combined-function increase across successes: " + fmt_real(combined_increase);
    return r;
}

/// Predicted-growth bound for a state x under held input u_star after time r.
inline double v_bound(const SystemModel& model, const CertificationConstants& k, const Vec& x,
                      const Vec& u_star, double r) {
    const Vec g = model.lyapunov_gradient(x);
    const Vec f = model.vector_field(x, u_star);
    const double lf = dot(g, f);
    const double intensity = norm(g) * norm(f) + dot(f, f);
    return model.lyapunov(x) + r * lf + (2.0 / 3.0) * std::pow(r, 1.5) * k.mu_c * intensity;
}

/// Validates the integrated growth bound the trigger relies on: along the log,
/// the realized V within each evaluation's loss horizon (and before the next
/// input change) never exceeds v_bound.
inline CheckResult check_bound_validity(const TrajectoryLog& log, const SystemModel& model,
                                        const CertificationConstants& k, double tol) {
    CheckResult r;
    r.name = "bound_validity";
    r.tolerance = tol;
    r.worst_margin = -std::numeric_limits<double>::infinity();
    bool level_exit = false;
    bool any_horizon = false;
    const std::vector<int> m_bar = log.failures_before();
    for (std::size_t z = 1; z < log.rows(); ++z) {
        if (log.sent[z] && log.delivered[z]) continue;  // input changes at z itself
        any_horizon = true;
        const int steps = k.m - m_bar[z] + 1;
        const Vec x_z = log.state(z);
        const Vec u_star = log.input(z - 1);  // input held while z was evaluated
        double worst_here = 0.0;              // j = 0 compares V with itself
        for (int j = 1; j <= steps && z + j < log.rows(); ++j) {
            const std::size_t zj = z + static_cast<std::size_t>(j);
            const double bound = v_bound(model, k, x_z, u_star, j * log.h);
            worst_here = std::max(worst_here, log.V[zj] - bound);
            if (log.V[zj] > k.c) level_exit = true;
            if (log.sent[zj] && log.delivered[zj]) break;  // input changes after zj
        }
        if (worst_here > r.worst_margin) {
            r.worst_margin = worst_here;
            r.location = static_cast<std::int64_t>(z);
        }
    }
    if (!any_horizon) {
        r.worst_margin = 0.0;
        r.note = "every evaluated instant refreshed the input; vacuous";
    }
    if (level_exit) r.note = "trajectory exited the level set within a prediction horizon";
    r.pass = r.worst_margin <= tol;
    return r;
}

/// Level-set invariance along the whole run.
inline CheckResult check_level_set(const TrajectoryLog& log, double level_c, double tol) {
    CheckResult r;
    r.name = "level_set_invariance";
    r.tolerance = tol;
    r.worst_margin = -std::numeric_limits<double>::infinity();
    for (std::size_t z = 0; z < log.rows(); ++z) {
        const double margin = log.V[z] - level_c;
        if (margin > r.worst_margin) {
            r.worst_margin = margin;
            r.location = static_cast<std::int64_t>(z);
        }
    }
    r.pass = r.worst_margin <= tol;
    return r;
}

/// Step property of the comparison envelope: if C1 <= C2 - r*sigma*gamma(C2) and
/// C2 <= S(s), then C1 <= S(s+r). Returns whether the premise holds; when it
/// does, the conclusion is asserted against the solved reference.
inline bool check_comparison_step(double C1, double C2, double r, double s,
                                  const std::vector<double>& times,
                                  const std::vector<double>& S,
                                  const std::function<double(double)>& gamma, double sigma) {
    if (C1 < 0.0 || C2 < 0.0 || r < 0.0 || s < 0.0)
        throw PreconditionError("comparison step: arguments must be nonnegative");
    if (times.size() != S.size() || times.empty())
        throw ConfigError("comparison step: reference grid mismatch");
    auto grid_index = [&](double t) {
        for (std::size_t i = 0; i < times.size(); ++i)
            if (std::abs(times[i] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return i;
        throw ConfigError("comparison step: time " + fmt_real(t) + " is not on the grid");
    };
    const std::size_t is = grid_index(s);
    if (C2 > S[is] + 1e-12 * std::max(1.0, S[is]))
        throw PreconditionError("comparison step: C2 exceeds the reference at s");
    if (C1 > C2 - r * sigma * gamma(C2)) return false;
    const std::size_t isr = grid_index(s + r);
    if (C1 > S[isr] + 1e-9 * std::max(1.0, S[isr]))
        throw VerificationFailure("comparison step: conclusion C1 <= S(s+r) violated");
    return true;
}

// ---------------------------------------------------------------------------
// Standard post-run verification
// ---------------------------------------------------------------------------

/// Runs the full set of post-hoc checks on one logged run.
inline VerificationReport run_standard_checks(const TrajectoryLog& log, const SystemModel& model,
                                              const CertificationConstants& k) {
    if (log.rows() < 2) throw ConfigError("verification needs at least two logged rows");
    const double tol = lyapunov_tolerance(log, k.c);
    const std::vector<double> S = solve_reference(model.gamma, k.sigma, log.V[0], log.t);
    VerificationReport report;
    report.checks.push_back(check_shifted_convergence(log, S, k.m, tol));
    report.checks.push_back(check_nonmonotonic_decrease(log, model, k, tol));
    report.checks.push_back(check_level_set(log, k.c, 1e-7 * k.c));
    report.checks.push_back(check_bound_validity(log, model, k, tol));
    return report;
}

}  // namespace petc
