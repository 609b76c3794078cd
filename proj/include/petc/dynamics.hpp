#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "petc/errors.hpp"
#include "petc/halton.hpp"
#include "petc/vec.hpp"

namespace petc {

/// Continuous-time plant together with its stabilizing feedback and Lyapunov
/// certificate. Immutable after construction; safe to share across threads.
struct SystemModel {
    int state_dim = 0;
    int input_dim = 0;
    std::function<Vec(const Vec&, const Vec&)> vector_field;   // f(x, u)
    std::function<Vec(const Vec&)> feedback;                   // kappa(x)
    std::function<double(const Vec&)> lyapunov;                // V(x) >= 0
    std::function<Vec(const Vec&)> lyapunov_gradient;          // V'(x), row vector
    std::function<double(double)> gamma;                       // class-K decay rate
    std::function<bool(const Vec&)> domain_guard;              // empty: whole space
    std::string name;

    bool in_domain(const Vec& x) const { return !domain_guard || domain_guard(x); }

    /// Feedback evaluation with the domain guard enforced.
    Vec input_at(const Vec& x) const {
        if (!in_domain(x)) throw DomainError("feedback evaluated outside the admissible domain");
        return feedback(x);
    }
};

/// Rate of change of V along f at (x, u): V'(x) . f(x, u).
inline double lie_derivative(const SystemModel& model, const Vec& x, const Vec& u) {
    if (!model.in_domain(x)) throw DomainError("lie_derivative: state outside the admissible domain");
    return dot(model.lyapunov_gradient(x), model.vector_field(x, u));
}

struct BoundingBox {
    Vec lo, hi;
};

/// Sublevel set {x : V(x) <= c} intersected with the domain guard. The
/// axis-aligned bounding box is found at construction by bisection along the
/// coordinate axes and all diagonal directions.
class LevelSet {
  public:
    LevelSet(double level, std::function<double(const Vec&)> lyapunov,
             std::function<bool(const Vec&)> guard, int dim)
        : level_(level), lyapunov_(std::move(lyapunov)), guard_(std::move(guard)), dim_(dim) {
        if (level <= 0.0) throw ConfigError("level set: level must be positive");
        if (dim < 1) throw ConfigError("level set: dimension must be positive");
        if (!contains(zeros(dim_))) throw ConfigError("level set: origin is not a member");
        compute_box();
    }

    double level() const { return level_; }
    int dim() const { return dim_; }

    bool contains(const Vec& x) const {
        return (!guard_ || guard_(x)) && lyapunov_(x) <= level_;
    }

    const BoundingBox& bounding_box() const { return box_; }

    double lyapunov(const Vec& x) const { return lyapunov_(x); }

  private:
    void compute_box() {
        box_.lo = zeros(dim_);
        box_.hi = zeros(dim_);
        std::vector<Vec> dirs;
        for (int i = 0; i < dim_; ++i) {
            Vec d = zeros(dim_);
            d[i] = 1.0;
            dirs.push_back(d);
            d[i] = -1.0;
            dirs.push_back(d);
        }
        const double inv = 1.0 / std::sqrt(static_cast<double>(dim_));
        for (std::uint64_t mask = 0; mask < (1ULL << dim_); ++mask) {
            Vec d(dim_);
            for (int i = 0; i < dim_; ++i) d[i] = (mask & (1ULL << i)) ? inv : -inv;
            dirs.push_back(d);
        }
        for (const Vec& d : dirs) {
            const double t = ray_boundary(d);
            for (int i = 0; i < dim_; ++i) {
                box_.lo[i] = std::min(box_.lo[i], t * d[i]);
                box_.hi[i] = std::max(box_.hi[i], t * d[i]);
            }
        }
    }

    double ray_boundary(const Vec& d) const {
        auto member = [&](double t) {
            Vec x(dim_);
            for (int i = 0; i < dim_; ++i) x[i] = t * d[i];
            return contains(x);
        };
        double lo = 0.0, hi = 1e-3;
        while (member(hi)) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e9) throw ConfigError("level set: bounding box exceeds 1e9 along a ray");
        }
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (member(mid) ? lo : hi) = mid;
        }
        return hi;
    }

    double level_;
    std::function<double(const Vec&)> lyapunov_;
    std::function<bool(const Vec&)> guard_;
    int dim_;
    BoundingBox box_;
};

/// Result of scanning the level set for the continuous-time decay condition
/// V'(x) f(x, kappa(x)) <= -gamma(V(x)).
struct DecayCertificate {
    bool pass = false;
    double max_residual = 0.0;  // max of lie derivative + gamma(V) over the grid
    double linear_rate = 0.0;   // tightest K with V' f <= -K V on the grid
    std::int64_t points_checked = 0;
    Vec worst_point;
};

inline constexpr double kDecayResidualTol = 1e-9;

/// Scans a uniform grid over the bounding box of the level set and evaluates
/// the decay condition at every member point. `gamma` may be absent on the
/// model, in which case only the linear rate is extracted.
inline DecayCertificate check_decay_certificate(const SystemModel& model, const LevelSet& set,
                                                int grid_density = 201) {
    if (grid_density < 2) throw ConfigError("decay certificate: grid density must be >= 2");
    const int n = set.dim();
    const BoundingBox& box = set.bounding_box();

    DecayCertificate cert;
    cert.max_residual = -std::numeric_limits<double>::infinity();
    cert.linear_rate = std::numeric_limits<double>::infinity();
    cert.worst_point = zeros(n);

    std::vector<int> idx(n, 0);
    Vec x(n);
    bool done = false;
    while (!done) {
        for (int i = 0; i < n; ++i) {
            const double frac = static_cast<double>(idx[i]) / (grid_density - 1);
            x[i] = box.lo[i] + frac * (box.hi[i] - box.lo[i]);
        }
        if (set.contains(x)) {
            ++cert.points_checked;
            const double v = model.lyapunov(x);
            const double lf = lie_derivative(model, x, model.feedback(x));
            const double residual = lf + (model.gamma ? model.gamma(v) : 0.0);
            if (residual > cert.max_residual) {
                cert.max_residual = residual;
                cert.worst_point = x;
            }
            if (v > 0.0) cert.linear_rate = std::min(cert.linear_rate, -lf / v);
        }
        // odometer over the grid
        int d = 0;
        while (d < n) {
            if (++idx[d] < grid_density) break;
            idx[d] = 0;
            ++d;
        }
        done = (d == n);
    }
    if (cert.points_checked == 0)
        throw ConfigError("decay certificate: grid does not intersect the level set");
    cert.pass = model.gamma && cert.max_residual <= kDecayResidualTol;
    return cert;
}

/// A model together with the level set it is certified on.
struct PresetBundle {
    SystemModel model;
    LevelSet set;
    double linear_rate = 0.0;  // decay rate used for gamma when gamma is linear
};

namespace detail {

/// Inverted pendulum on a cart, stabilized by exact feedback linearization.
/// Closed loop: x1' = x2, x2' = -3.16 x1 - 4.04 x2.
inline SystemModel pendulum_model_without_gamma() {
    constexpr double omega0 = 0.1;
    SystemModel m;
    m.state_dim = 2;
    m.input_dim = 1;
    m.name = "pendulum";
    m.vector_field = [](const Vec& x, const Vec& u) {
        return Vec{x[1], (std::sin(x[0]) - u[0] * std::cos(x[0])) * omega0};
    };
    m.feedback = [](const Vec& x) {
        return Vec{(31.6 * x[0] + 40.4 * x[1] + std::sin(x[0])) / std::cos(x[0])};
    };
    m.lyapunov = [](const Vec& x) {
        return 1.278 * x[0] * x[0] + 0.632 * x[0] * x[1] + 0.404 * x[1] * x[1];
    };
    m.lyapunov_gradient = [](const Vec& x) {
        return Vec{2.556 * x[0] + 0.632 * x[1], 0.632 * x[0] + 0.808 * x[1]};
    };
    m.domain_guard = [](const Vec& x) { return std::abs(x[0]) < 1.5707963267948966; };
    return m;
}

}  // namespace detail

inline constexpr double kPendulumLevel = 0.258;

/// Pendulum preset. The decay rate K of gamma(v) = K v is extracted once from
/// a fine grid scan and shaved by a small relative margin so that the rate
/// stays valid between grid points.
inline PresetBundle pendulum_preset() {
    static const double rate = [] {
        SystemModel m = detail::pendulum_model_without_gamma();
        LevelSet set(kPendulumLevel, m.lyapunov, m.domain_guard, m.state_dim);
        DecayCertificate cert = check_decay_certificate(m, set, 401);
        return cert.linear_rate * (1.0 - 1e-3);
    }();
    SystemModel m = detail::pendulum_model_without_gamma();
    const double k = rate;
    m.gamma = [k](double v) { return k * v; };
    LevelSet set(kPendulumLevel, m.lyapunov, m.domain_guard, m.state_dim);
    return PresetBundle{std::move(m), std::move(set), k};
}

/// One-dimensional test system x' = -x with V = x^2 and gamma(v) = v.
inline PresetBundle scalar_decay_preset() {
    SystemModel m;
    m.state_dim = 1;
    m.input_dim = 1;
    m.name = "scalar_decay";
    m.vector_field = [](const Vec& x, const Vec&) { return Vec{-x[0]}; };
    m.feedback = [](const Vec&) { return Vec{0.0}; };
    m.lyapunov = [](const Vec& x) { return x[0] * x[0]; };
    m.lyapunov_gradient = [](const Vec& x) { return Vec{2.0 * x[0]}; };
    m.gamma = [](double v) { return v; };
    LevelSet set(1.0, m.lyapunov, m.domain_guard, 1);
    return PresetBundle{std::move(m), std::move(set), 2.0};
}

inline const std::map<std::string, PresetBundle (*)()>& preset_registry() {
    static const std::map<std::string, PresetBundle (*)()> registry = {
        {"pendulum", &pendulum_preset},
        {"scalar_decay", &scalar_decay_preset},
    };
    return registry;
}

inline PresetBundle make_preset(const std::string& name) {
    const auto& reg = preset_registry();
    auto it = reg.find(name);
    if (it == reg.end()) throw ConfigError("unknown model preset '" + name + "'");
    return it->second();
}

}  // namespace petc
