#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "petc/dynamics.hpp"
#include "petc/errors.hpp"
#include "petc/vec.hpp"

namespace petc {

/// One classical 4th-order step of x' = f(x, u) with the input held constant.
inline Vec rk4_step(const SystemModel& model, const Vec& x, const Vec& u, double dt) {
    const std::size_t n = x.size();
    const Vec k1 = model.vector_field(x, u);
    Vec xt(n);
    for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + 0.5 * dt * k1[i];
    const Vec k2 = model.vector_field(xt, u);
    for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + 0.5 * dt * k2[i];
    const Vec k3 = model.vector_field(xt, u);
    for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + dt * k3[i];
    const Vec k4 = model.vector_field(xt, u);
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
    return out;
}

/// Integrates x' = f(x, u) over [0, dt] with `substeps` equal fixed steps.
/// Deterministic: the same inputs always produce the same state.
inline Vec integrate_interval(const SystemModel& model, Vec x, const Vec& u, double dt,
                              int substeps) {
    if (dt <= 0.0) throw PreconditionError("integrate_interval: dt must be positive");
    if (substeps < 1) throw PreconditionError("integrate_interval: substeps must be >= 1");
    const double step = dt / substeps;
    for (int s = 0; s < substeps; ++s) {
        x = rk4_step(model, x, u, step);
        if (!model.in_domain(x))
            throw DomainError("state left the admissible domain after " +
                              std::to_string((s + 1) * step) + " s");
    }
    return x;
}

/// One 4th-order step of the scalar comparison dynamics s' = -sigma*gamma(s).
/// Stage values are clamped at zero so gamma is only evaluated on its domain;
/// the result is clamped at zero as well.
inline double decay_step(const std::function<double(double)>& gamma, double sigma, double s,
                         double dt) {
    auto f = [&](double v) { return -sigma * gamma(std::max(v, 0.0)); };
    const double k1 = f(s);
    const double k2 = f(s + 0.5 * dt * k1);
    const double k3 = f(s + 0.5 * dt * k2);
    const double k4 = f(s + dt * k3);
    return std::max(0.0, s + dt / 6.0 * (k1 + 2.0 * (k2 + k3) + k4));
}

}  // namespace petc
