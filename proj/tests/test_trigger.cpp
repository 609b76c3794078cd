#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "petc/certify.hpp"
#include "petc/dynamics.hpp"
#include "petc/trigger.hpp"
#include "petc/verify.hpp"

using namespace petc;

namespace {

CertificationConstants reference_constants(int m = 1) {
    const PresetBundle p = pendulum_preset();
    const double sigma = 0.35, target = 2.77e-5;
    ConstantOverrides ov;
    ov.L1c = 1.65;
    ov.L2c = 2.760564;
    ov.mu_c = 16.933;
    ov.M_max_c = 3.0 * (1.0 - sigma) / (2.0 * std::sqrt(target)) / *ov.mu_c;
    EstimationConfig est;
    CertificationConstants k = certify_system(p.model, p.set, sigma, m, est, ov);
    return k;
}

}  // namespace

TEST_CASE("trigger initialization") {
    const PresetBundle p = pendulum_preset();
    const CertificationConstants k = reference_constants();

    SECTION("reference values from the initial state") {
        const TriggerState st = initialize(p.model, {0.43, 0.0}, TriggerParams{}, k);
        CHECK(st.i_ref == 0);
        CHECK(st.V_ref == Catch::Approx(0.23634).epsilon(1e-3));
        CHECK(st.m_bar == 0);
        CHECK(st.u_star[0] == Catch::Approx(p.model.feedback({0.43, 0.0})[0]).epsilon(1e-15));
        CHECK(st.nu == default_nu(k.sigma, k.k_rate, k.h));
    }
    SECTION("zero initial state") {
        const TriggerState st = initialize(p.model, {0.0, 0.0}, TriggerParams{}, k);
        CHECK(st.V_ref == 0.0);
        CHECK(st.u_star[0] == 0.0);
        CHECK(st.i_ref == 0);
    }
    SECTION("default forced horizon follows the envelope decay") {
        const std::int64_t nu = default_nu(0.35, 1.28, 1.385e-5);
        CHECK(nu == static_cast<std::int64_t>(std::ceil(1.0 / (0.35 * 1.28 * 1.385e-5))));
        CHECK(default_nu(0.5, 2.0, 1e-9) == 1000000);  // capped
    }
}

TEST_CASE("predicted growth sigma_z") {
    const PresetBundle p = pendulum_preset();
    const CertificationConstants k = reference_constants();

    SECTION("vanishes at the origin with zero held input") {
        const TriggerState st = initialize(p.model, {0.0, 0.0}, TriggerParams{}, k);
        CHECK(sigma_z(p.model, k, {0.0, 0.0}, st) == 0.0);
    }
    SECTION("matches the growth-bound evaluation at the full horizon") {
        const Vec x0{0.43, 0.0};
        const TriggerState st = initialize(p.model, x0, TriggerParams{}, k);
        const double sz = sigma_z(p.model, k, x0, st);
        const double bound = v_bound(p.model, k, x0, st.u_star, k.h * (k.m + 1));
        CHECK(sz == Catch::Approx(bound - p.model.lyapunov(x0)).margin(1e-15));
        // negative drift plus a positive correction
        const double lf = lie_derivative(p.model, x0, st.u_star);
        CHECK(lf < 0.0);
        CHECK(sz > k.h * (k.m + 1) * lf);
    }
    SECTION("shrinking loss horizon shrinks the positive correction") {
        // flat gradient direction: the first-order term drops out
        SystemModel m = p.model;
        m.lyapunov_gradient = [](const Vec&) { return Vec{1.0, 0.0}; };
        m.vector_field = [](const Vec&, const Vec&) { return Vec{0.0, 1.0}; };
        TriggerState fresh = initialize(m, {0.0, 0.0}, TriggerParams{}, k);
        TriggerState exhausted = fresh;
        exhausted.m_bar = k.m;
        const double full = sigma_z(m, k, {0.1, 0.0}, fresh);
        const double last = sigma_z(m, k, {0.1, 0.0}, exhausted);
        CHECK(full > 0.0);
        CHECK(last > 0.0);
        CHECK(last < full);
    }
    SECTION("domain guard enforced") {
        const TriggerState st = initialize(p.model, {0.43, 0.0}, TriggerParams{}, k);
        CHECK_THROWS_AS(sigma_z(p.model, k, {1.6, 0.0}, st), DomainError);
    }
}

TEST_CASE("trigger evaluation") {
    const PresetBundle p = pendulum_preset();
    const CertificationConstants k = reference_constants();

    SECTION("forced send after nu silent periods") {
        TriggerParams params;
        params.nu = 50;
        TriggerState st = initialize(p.model, {0.43, 0.0}, params, k);
        const TriggerDecision d = evaluate(51, {0.4, 0.0}, p.model, k, st);
        CHECK(d.send);
        CHECK(d.reason == TriggerReason::ForcedByNu);
    }
    SECTION("state at the origin stays silent while the threshold is positive") {
        TriggerParams params;
        params.nu = 1000;
        TriggerState st = initialize(p.model, {0.43, 0.0}, params, k);
        for (std::int64_t z : {1, 10, 500, 1000}) {
            const TriggerDecision d = evaluate(z, {0.0, 0.0}, p.model, k, st);
            CHECK(d.threshold > 0.0);
            CHECK_FALSE(d.send);
            CHECK(d.reason == TriggerReason::NoSend);
        }
    }
    SECTION("equality triggers a send") {
        TriggerState st = initialize(p.model, {0.0, 0.0}, TriggerParams{}, k);
        const TriggerDecision d = evaluate(1, {0.0, 0.0}, p.model, k, st);
        CHECK(d.sigma_z == 0.0);
        CHECK(d.threshold == 0.0);  // V_ref = 0 and gamma(0) = 0
        CHECK(d.send);
        CHECK(d.reason == TriggerReason::RuleViolated);
    }
    SECTION("adaptive with a zero schedule matches the linear rule") {
        std::mt19937 rng(3);
        std::uniform_real_distribution<double> dx(-0.3, 0.3);
        TriggerState lin = initialize(p.model, {0.43, 0.0}, TriggerParams{}, k);
        TriggerParams ap;
        ap.rule = TriggerRule::Adaptive;
        TriggerState ada = initialize(p.model, {0.43, 0.0}, ap, k);
        for (int i = 0; i < 200; ++i) {
            Vec x{dx(rng), dx(rng)};
            if (!p.set.contains(x)) continue;
            const std::int64_t z = 1 + i;
            const TriggerDecision a = evaluate(z, x, p.model, k, lin);
            const TriggerDecision b = evaluate(z, x, p.model, k, ada);
            CHECK(a.send == b.send);
            CHECK(a.threshold == b.threshold);
            CHECK(a.sigma_z == b.sigma_z);
        }
    }
    SECTION("adaptive sends whenever linear sends") {
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> dx(-0.3, 0.3);
        TriggerState lin = initialize(p.model, {0.43, 0.0}, TriggerParams{}, k);
        TriggerParams ap;
        ap.rule = TriggerRule::Adaptive;
        ap.cn = CnSchedule{{0, 100}, {0.1, 0.3}};
        TriggerState ada = initialize(p.model, {0.43, 0.0}, ap, k);
        for (int i = 0; i < 500; ++i) {
            Vec x{dx(rng), dx(rng)};
            if (!p.set.contains(x)) continue;
            const std::int64_t z = 1 + (i % 300);
            const TriggerDecision a = evaluate(z, x, p.model, k, lin);
            const TriggerDecision b = evaluate(z, x, p.model, k, ada);
            if (a.send) CHECK(b.send);
        }
    }
    SECTION("send exactly when the reason is not NoSend") {
        std::mt19937 rng(8);
        std::uniform_real_distribution<double> dx(-0.3, 0.3);
        TriggerState st = initialize(p.model, {0.43, 0.0}, TriggerParams{}, k);
        for (int i = 0; i < 300; ++i) {
            Vec x{dx(rng), dx(rng)};
            if (!p.set.contains(x)) continue;
            const TriggerDecision d = evaluate(1 + (i % 2000) * 100, x, p.model, k, st);
            CHECK(d.send == (d.reason != TriggerReason::NoSend));
        }
    }
    SECTION("evaluation is pure") {
        TriggerState st = initialize(p.model, {0.43, 0.0}, TriggerParams{}, k);
        const Vec x{0.2, -0.1};
        const TriggerDecision a = evaluate(7, x, p.model, k, st);
        const TriggerDecision b = evaluate(7, x, p.model, k, st);
        CHECK(a.send == b.send);
        CHECK(a.sigma_z == b.sigma_z);
        CHECK(a.threshold == b.threshold);
        CHECK(a.reason == b.reason);
    }
    SECTION("z = 0 is reserved for the initial transmission") {
        TriggerState st = initialize(p.model, {0.43, 0.0}, TriggerParams{}, k);
        CHECK_THROWS_AS(evaluate(0, {0.1, 0.0}, p.model, k, st), PreconditionError);
    }
}

TEST_CASE("transmission result bookkeeping") {
    const PresetBundle p = pendulum_preset();
    const CertificationConstants k = reference_constants(1);
    TriggerState st = initialize(p.model, {0.43, 0.0}, TriggerParams{}, k);

    SECTION("success resets the reference") {
        const Vec x{0.2, -0.05};
        const TriggerState nxt = on_transmission_result(st, 5, x, p.model, true, k.m);
        CHECK(nxt.i_ref == 5);
        CHECK(nxt.m_bar == 0);
        CHECK(nxt.V_ref == Catch::Approx(p.model.lyapunov(x)).epsilon(1e-15));
        CHECK(nxt.u_star[0] == Catch::Approx(p.model.feedback(x)[0]).epsilon(1e-15));
    }
    SECTION("failure increments the loss counter and keeps the hold") {
        const Vec x{0.2, -0.05};
        const TriggerState nxt = on_transmission_result(st, 5, x, p.model, false, k.m);
        CHECK(nxt.i_ref == 0);
        CHECK(nxt.m_bar == 1);
        CHECK(nxt.V_ref == st.V_ref);
        CHECK(nxt.u_star == st.u_star);
    }
    SECTION("exceeding the loss bound is a protocol violation") {
        TriggerState failed = on_transmission_result(st, 5, {0.2, 0.0}, p.model, false, k.m);
        CHECK(failed.m_bar == 1);
        CHECK_THROWS_AS(on_transmission_result(failed, 6, {0.2, 0.0}, p.model, false, k.m),
                        ProtocolViolation);
    }
}

TEST_CASE("cn schedule") {
    CnSchedule cn{{0, 10, 20}, {0.1, 0.0, 0.5}};
    cn.validate();
    CHECK(cn.at(0) == 0.1);
    CHECK(cn.at(9) == 0.1);
    CHECK(cn.at(10) == 0.0);
    CHECK(cn.at(25) == 0.5);
    CHECK(cn.at(1000000) == 0.5);

    CHECK_THROWS_AS((CnSchedule{{1, 2}, {0.0, 0.0}}.validate()), ConfigError);
    CHECK_THROWS_AS((CnSchedule{{0, 0}, {0.0, 0.0}}.validate()), ConfigError);
    CHECK_THROWS_AS((CnSchedule{{0}, {-0.1}}.validate()), ConfigError);
    CHECK_THROWS_AS((CnSchedule{{0, 1}, {0.0}}.validate()), ConfigError);
}
