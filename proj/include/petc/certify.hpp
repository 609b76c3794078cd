#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "petc/dynamics.hpp"
#include "petc/errors.hpp"
#include "petc/halton.hpp"
#include "petc/vec.hpp"

namespace petc {

// ---------------------------------------------------------------------------
// Level-set sampling
// ---------------------------------------------------------------------------

/// Accepts up to `count` low-discrepancy points inside the level set. The
/// returned sequence is a deterministic function of (set, seed) and prefixes
/// are nested: asking for more points extends the list, never reshuffles it.
inline std::vector<Vec> sample_level_set(const LevelSet& set, std::size_t count,
                                         std::uint64_t seed) {
    HaltonSequence seq(set.dim(), seed);
    const BoundingBox& box = set.bounding_box();
    std::vector<Vec> pts;
    pts.reserve(count);
    const std::uint64_t max_draws = 64ULL * count + 4096;
    for (std::uint64_t draw = 0; pts.size() < count && draw < max_draws; ++draw) {
        Vec u = seq.point(draw);
        Vec x(set.dim());
        for (int i = 0; i < set.dim(); ++i) x[i] = box.lo[i] + u[i] * (box.hi[i] - box.lo[i]);
        if (set.contains(x)) pts.push_back(std::move(x));
    }
    if (pts.size() < 2)
        throw ConfigError("sampling: fewer than 2 points accepted in the level set");
    return pts;
}

namespace detail {

/// Nearest neighbor of every point among the first `count` points, via a
/// uniform bucket grid. Exact and deterministic.
inline std::vector<std::size_t> nearest_neighbors(const std::vector<Vec>& pts, std::size_t count,
                                                  const BoundingBox& box) {
    const int n = static_cast<int>(box.lo.size());
    const int cells_per_axis =
        std::max(1, static_cast<int>(std::floor(std::pow(static_cast<double>(count), 1.0 / n))));
    std::vector<double> width(n);
    for (int i = 0; i < n; ++i)
        width[i] = std::max(box.hi[i] - box.lo[i], 1e-300) / cells_per_axis;

    auto cell_of = [&](const Vec& x) {
        std::vector<int> c(n);
        for (int i = 0; i < n; ++i) {
            int ci = static_cast<int>((x[i] - box.lo[i]) / width[i]);
            c[i] = std::clamp(ci, 0, cells_per_axis - 1);
        }
        return c;
    };
    auto cell_key = [&](const std::vector<int>& c) {
        std::size_t key = 0;
        for (int i = 0; i < n; ++i) key = key * cells_per_axis + c[i];
        return key;
    };

    std::size_t n_buckets = 1;
    for (int i = 0; i < n; ++i) n_buckets *= cells_per_axis;
    std::vector<std::vector<std::size_t>> buckets(n_buckets);
    for (std::size_t i = 0; i < count; ++i) buckets[cell_key(cell_of(pts[i]))].push_back(i);

    double min_width = width[0];
    for (int i = 1; i < n; ++i) min_width = std::min(min_width, width[i]);

    std::vector<std::size_t> nn(count);
    std::vector<int> lo(n), hi(n), c(n);
    for (std::size_t i = 0; i < count; ++i) {
        const std::vector<int> home = cell_of(pts[i]);
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_idx = i;
        for (int radius = 1; radius <= cells_per_axis; ++radius) {
            for (int d = 0; d < n; ++d) {
                lo[d] = std::max(0, home[d] - radius);
                hi[d] = std::min(cells_per_axis - 1, home[d] + radius);
                c[d] = lo[d];
            }
            // scan the whole block; revisiting inner cells is harmless
            while (true) {
                for (std::size_t j : buckets[cell_key(c)]) {
                    if (j == i) continue;
                    const double d2 = dist(pts[i], pts[j]);
                    if (d2 < best) {
                        best = d2;
                        best_idx = j;
                    }
                }
                int d = 0;
                while (d < n) {
                    if (++c[d] <= hi[d]) break;
                    c[d] = lo[d];
                    ++d;
                }
                if (d == n) break;
            }
            // anything outside this block is at least radius * min_width away
            if (best_idx != i && best <= radius * min_width) break;
        }
        nn[i] = best_idx;
    }
    return nn;
}

/// Visits the deterministic pair family used by the supremum estimators:
/// consecutive sequence pairs plus nearest-neighbor pairs computed at every
/// power-of-two prefix. Doubling the sample count only adds pairs.
template <typename Visit>
inline void for_each_pair(const std::vector<Vec>& pts, const BoundingBox& box, Visit&& visit) {
    const std::size_t n_pts = pts.size();
    for (std::size_t i = 0; 2 * i + 1 < n_pts; ++i)
        visit(2 * i, 2 * i + 1, splitmix64(i) % (2 * i + 2));
    for (std::size_t prefix = 2; prefix <= n_pts; prefix *= 2) {
        const std::vector<std::size_t> nn = nearest_neighbors(pts, prefix, box);
        for (std::size_t i = 0; i < prefix; ++i) {
            if (nn[i] == i) continue;
            visit(i, nn[i], splitmix64(prefix * 0x100000001B3ULL + i) % prefix);
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Supremum estimators
// ---------------------------------------------------------------------------

/// Largest observed ratio ||f(x1,kappa(x3)) - f(x2,kappa(x3))|| / ||x1 - x2||
/// over sampled triples in the level set. A lower bound of the true supremum.
inline double estimate_dynamics_lipschitz(const SystemModel& model, const LevelSet& set,
                                          std::size_t samples, std::uint64_t seed) {
    if (samples < 2) throw ConfigError("estimate_dynamics_lipschitz: need samples >= 2");
    const std::vector<Vec> pts = sample_level_set(set, samples, seed);
    double sup = 0.0;
    detail::for_each_pair(pts, set.bounding_box(), [&](std::size_t a, std::size_t b, std::size_t x3) {
        const double d = dist(pts[a], pts[b]);
        if (d <= 0.0) return;
        for (std::size_t k : {a, b, x3}) {
            const Vec u = model.feedback(pts[k]);
            const Vec fa = model.vector_field(pts[a], u);
            const Vec fb = model.vector_field(pts[b], u);
            sup = std::max(sup, dist(fa, fb) / d);
        }
    });
    return sup;
}

/// Largest observed ratio ||V'(x1) - V'(x2)|| / ||x1 - x2|| over sampled pairs.
inline double estimate_gradient_lipschitz(const SystemModel& model, const LevelSet& set,
                                          std::size_t samples, std::uint64_t seed) {
    if (samples < 2) throw ConfigError("estimate_gradient_lipschitz: need samples >= 2");
    const std::vector<Vec> pts = sample_level_set(set, samples, seed);
    double sup = 0.0;
    detail::for_each_pair(pts, set.bounding_box(), [&](std::size_t a, std::size_t b, std::size_t) {
        const double d = dist(pts[a], pts[b]);
        if (d <= 0.0) return;
        const Vec ga = model.lyapunov_gradient(pts[a]);
        const Vec gb = model.lyapunov_gradient(pts[b]);
        sup = std::max(sup, dist(ga, gb) / d);
    });
    return sup;
}

/// Largest observed ratio (||V'|| ||f|| + ||f||^2) / |V' . f| under the
/// closed-loop input, excluding a small sublevel ball around the origin where
/// the ratio is 0/0. Throws AssumptionViolation when the denominator vanishes
/// at a sampled point outside the excluded ball.
inline double estimate_oscillation_bound(const SystemModel& model, const LevelSet& set,
                                         std::size_t samples, std::uint64_t seed,
                                         double excluded_level_fraction = 1e-4) {
    if (samples < 2) throw ConfigError("estimate_oscillation_bound: need samples >= 2");
    const std::vector<Vec> pts = sample_level_set(set, samples, seed);
    const double v_min = excluded_level_fraction * set.level();
    double sup = 0.0;
    for (const Vec& x : pts) {
        if (model.lyapunov(x) < v_min) continue;
        const Vec u = model.feedback(x);
        const Vec f = model.vector_field(x, u);
        const Vec g = model.lyapunov_gradient(x);
        const double den = std::abs(dot(g, f));
        if (den < 1e-14)
            throw AssumptionViolation(
                "oscillation bound: derivative vanishes away from the origin (|V'.f| < 1e-14)");
        sup = std::max(sup, (norm(g) * norm(f) + dot(f, f)) / den);
    }
    if (sup <= 0.0)
        throw ConfigError("oscillation bound: no sample outside the excluded ball");
    return sup;
}

// ---------------------------------------------------------------------------
// Sampling-period bounds
// ---------------------------------------------------------------------------

/// Combination constant sqrt(e) * max{L1, L2 (1 + L1 sqrt(e))}.
inline double compute_mu(double L1, double L2) {
    if (L1 < 0.0 || L2 < 0.0) throw PreconditionError("compute_mu: constants must be nonnegative");
    const double sqrt_e = std::sqrt(std::exp(1.0));
    return sqrt_e * std::max(L1, L2 * (1.0 + L1 * sqrt_e));
}

enum class MaspBranch { First, Second };

inline const char* to_string(MaspBranch b) { return b == MaspBranch::First ? "first" : "second"; }

struct MaspBound {
    double value = 0.0;
    MaspBranch branch = MaspBranch::First;
};

/// Admissible sampling period bound min{(3(1-sigma)/(2 mu M))^2, 1/(1+2 L1)}.
inline MaspBound compute_sigma_masp(double mu, double M_max, double L1, double sigma) {
    if (!(sigma > 0.0 && sigma < 1.0)) throw ConfigError("sigma must lie in (0, 1)");
    if (mu < 0.0 || M_max < 0.0 || L1 < 0.0)
        throw PreconditionError("compute_sigma_masp: constants must be nonnegative");
    const double prod = mu * M_max;
    const double term1 = prod > 0.0 ? std::pow(3.0 * (1.0 - sigma) / (2.0 * prod), 2)
                                    : std::numeric_limits<double>::infinity();
    const double term2 = 1.0 / (1.0 + 2.0 * L1);
    return term1 <= term2 ? MaspBound{term1, MaspBranch::First}
                          : MaspBound{term2, MaspBranch::Second};
}

/// Earlier bound min{((1-sigma)/(mu M))^2, 1/(1+2 L1)} kept for comparison.
inline MaspBound compute_masp_prior(double mu, double M_max, double L1, double sigma) {
    if (!(sigma > 0.0 && sigma < 1.0)) throw ConfigError("sigma must lie in (0, 1)");
    if (mu < 0.0 || M_max < 0.0 || L1 < 0.0)
        throw PreconditionError("compute_masp_prior: constants must be nonnegative");
    const double prod = mu * M_max;
    const double term1 = prod > 0.0 ? std::pow((1.0 - sigma) / prod, 2)
                                    : std::numeric_limits<double>::infinity();
    const double term2 = 1.0 / (1.0 + 2.0 * L1);
    return term1 <= term2 ? MaspBound{term1, MaspBranch::First}
                          : MaspBound{term2, MaspBranch::Second};
}

// ---------------------------------------------------------------------------
// Full certification
// ---------------------------------------------------------------------------

struct EstimationConfig {
    std::size_t samples = 100000;
    std::uint64_t seed = 0;
    double safety_factor = 1.1;            // applied to estimated constants only
    double excluded_level_fraction = 1e-4;
    int grid_density = 201;                // decay-certificate grid
};

/// Pinned constants take precedence over estimation; the safety factor is not
/// applied to pinned values.
struct ConstantOverrides {
    std::optional<double> L1c, L2c, M_max_c, mu_c;
};

enum class Provenance { Estimated, Override };

inline const char* to_string(Provenance p) {
    return p == Provenance::Estimated ? "estimated" : "override";
}

struct CertificationConstants {
    double c = 0.0;
    double sigma = 0.0;
    int m = 0;
    double L1c = 0.0;
    double L2c = 0.0;
    double M_max_c = 0.0;
    double mu_c = 0.0;
    double h_sigma_masp = 0.0;
    double h_masp_prior = 0.0;
    double h = 0.0;  // selected sampling period, (m+1) h <= h_sigma_masp
    MaspBranch active_branch = MaspBranch::First;
    double k_rate = 0.0;  // tightest linear decay rate from the certificate scan

    // estimation bookkeeping
    double L1c_raw = std::numeric_limits<double>::quiet_NaN();
    double L2c_raw = std::numeric_limits<double>::quiet_NaN();
    double M_max_c_raw = std::numeric_limits<double>::quiet_NaN();
    double safety_factor = 1.0;
    Provenance L1c_src = Provenance::Estimated;
    Provenance L2c_src = Provenance::Estimated;
    Provenance M_src = Provenance::Estimated;
    Provenance mu_src = Provenance::Estimated;
};

/// Rechecks the arithmetic invariants of a constants record. The mu formula
/// is only required when mu was not pinned by the caller.
inline void validate(const CertificationConstants& k) {
    if (k.mu_src != Provenance::Override) {
        const double mu = compute_mu(k.L1c, k.L2c);
        if (std::abs(mu - k.mu_c) > 1e-12 * std::max(1.0, mu))
            throw VerificationFailure("constants: mu does not match its closed form");
    }
    const MaspBound b = compute_sigma_masp(k.mu_c, k.M_max_c, k.L1c, k.sigma);
    if (b.value != k.h_sigma_masp)
        throw VerificationFailure("constants: sampling-period bound does not match its closed form");
    if ((k.m + 1) * k.h > k.h_sigma_masp)
        throw VerificationFailure("constants: (m+1) h exceeds the admissible bound");
    if (k.h_sigma_masp > 1.0 / (1.0 + 2.0 * k.L1c))
        throw VerificationFailure("constants: bound exceeds 1/(1+2 L1)");
}

/// Runs the decay certificate and the three constant estimators, applies
/// overrides and the safety factor, and selects h = bound / (m+1).
inline CertificationConstants certify_system(const SystemModel& model, const LevelSet& set,
                                             double sigma, int m, const EstimationConfig& cfg,
                                             const ConstantOverrides& ov = {}) {
    if (!(sigma > 0.0 && sigma < 1.0)) throw ConfigError("sigma must lie in (0, 1)");
    if (m < 0) throw ConfigError("loss bound m must be nonnegative");

    const DecayCertificate cert = check_decay_certificate(model, set, cfg.grid_density);
    if (!cert.pass)
        throw AssumptionViolation("decay certificate failed: max residual " +
                                  std::to_string(cert.max_residual));

    CertificationConstants k;
    k.c = set.level();
    k.sigma = sigma;
    k.m = m;
    k.k_rate = cert.linear_rate;
    k.safety_factor = cfg.safety_factor;

    if (ov.L1c) {
        k.L1c = *ov.L1c;
        k.L1c_src = Provenance::Override;
    } else {
        k.L1c_raw = estimate_dynamics_lipschitz(model, set, cfg.samples, cfg.seed);
        k.L1c = cfg.safety_factor * k.L1c_raw;
    }
    if (ov.L2c) {
        k.L2c = *ov.L2c;
        k.L2c_src = Provenance::Override;
    } else {
        k.L2c_raw = estimate_gradient_lipschitz(model, set, cfg.samples, cfg.seed);
        k.L2c = cfg.safety_factor * k.L2c_raw;
    }
    if (ov.M_max_c) {
        k.M_max_c = *ov.M_max_c;
        k.M_src = Provenance::Override;
    } else {
        k.M_max_c_raw = estimate_oscillation_bound(model, set, cfg.samples, cfg.seed,
                                                   cfg.excluded_level_fraction);
        k.M_max_c = cfg.safety_factor * k.M_max_c_raw;
    }
    if (ov.mu_c) {
        k.mu_c = *ov.mu_c;
        k.mu_src = Provenance::Override;
    } else {
        k.mu_c = compute_mu(k.L1c, k.L2c);
    }

    const MaspBound bound = compute_sigma_masp(k.mu_c, k.M_max_c, k.L1c, k.sigma);
    k.h_sigma_masp = bound.value;
    k.active_branch = bound.branch;
    k.h_masp_prior = compute_masp_prior(k.mu_c, k.M_max_c, k.L1c, k.sigma).value;

    k.h = k.h_sigma_masp / (m + 1);
    while ((m + 1) * k.h > k.h_sigma_masp) k.h = std::nextafter(k.h, 0.0);

    validate(k);
    return k;
}

}  // namespace petc
