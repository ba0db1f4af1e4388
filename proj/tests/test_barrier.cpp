#include <catch_amalgamated.hpp>

#include <cmath>

#include "pcpo/barrier.hpp"
#include "pcpo/math.hpp"

using namespace pcpo;

namespace {

BarrierConfig cfg_of(BarrierKind kind, double tau) {
    BarrierConfig c;
    c.kind = kind;
    c.tau = tau;
    return c;
}

} // namespace

TEST_CASE("extended log kernel reproduces hand-computed values", "[barrier]") {
    // Linear branch: tau=2, g=0 sits above the junction at -1/4.
    const BarrierConfig lin = cfg_of(BarrierKind::ExtendedLog, 2.0);
    REQUIRE(phi(0.0, lin) == Catch::Approx(std::log(2.0) + 0.5).margin(1e-12));
    // Log branch: tau=1, g=-e sits below the junction at -1.
    const BarrierConfig logc = cfg_of(BarrierKind::ExtendedLog, 1.0);
    REQUIRE(phi(-std::exp(1.0), logc) == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("extended log kernel is continuous and C1 at the junction", "[barrier]") {
    for (double tau : {0.5, 1.0, 2.0, 5.0, 20.0}) {
        const BarrierConfig cfg = cfg_of(BarrierKind::ExtendedLog, tau);
        const double junction = -1.0 / (tau * tau);
        const double eps = 1e-9 * std::max(1.0, std::abs(junction));
        const double below = phi(junction - eps, cfg);
        const double above = phi(junction + eps, cfg);
        REQUIRE(below == Catch::Approx(above).margin(1e-6));
        // The log branch slope at the junction equals the linear slope tau.
        REQUIRE(phi_derivative(junction, cfg) == Catch::Approx(tau).margin(1e-9));
        REQUIRE(phi_derivative(junction - eps, cfg) == Catch::Approx(tau).margin(1e-5));
        REQUIRE(phi_derivative(junction + eps, cfg) == tau);
    }
}

TEST_CASE("extended log kernel is increasing with vanishing slope deep inside", "[barrier]") {
    const BarrierConfig cfg = cfg_of(BarrierKind::ExtendedLog, 1.0);
    double prev = phi(-1e10, cfg);
    for (double g : {-1e5, -100.0, -2.0, -1.0, -0.5, 0.0, 1.0, 50.0}) {
        const double cur = phi(g, cfg);
        REQUIRE(cur > prev);
        prev = cur;
    }
    REQUIRE(phi_derivative(-1e10, cfg) > 0.0);
    REQUIRE(phi_derivative(-1e10, cfg) < 1e-9);
    REQUIRE(phi(-1e10, cfg) < -20.0);
}

TEST_CASE("quadratic kernel is even and anchored at zero", "[barrier]") {
    const BarrierConfig cfg = cfg_of(BarrierKind::Quadratic, 1.0);
    REQUIRE(phi(0.0, cfg) == 0.0);
    REQUIRE(phi(3.0, cfg) == Catch::Approx(9.0).margin(1e-12));
    RngStream rng(11);
    for (int i = 0; i < 100; ++i) {
        const double g = 20.0 * (rng.uniform() - 0.5);
        REQUIRE(phi(g, cfg) == phi(-g, cfg));
        REQUIRE(phi_derivative(g, cfg) == Catch::Approx(2.0 * g).margin(1e-12));
    }
}

TEST_CASE("exponential kernel passes through one at the boundary", "[barrier]") {
    const BarrierConfig cfg = cfg_of(BarrierKind::Exponential, 0.01);
    REQUIRE(phi(0.0, cfg) == 1.0);
    REQUIRE(phi(100.0, cfg) == Catch::Approx(std::exp(1.0)).margin(1e-12));
    double prev = phi(-500.0, cfg);
    for (double g : {-100.0, -10.0, 0.0, 10.0, 100.0}) {
        const double cur = phi(g, cfg);
        REQUIRE(cur > prev);
        REQUIRE(phi_derivative(g, cfg) == Catch::Approx(0.01 * cur).margin(1e-12));
        prev = cur;
    }
}

TEST_CASE("every kernel is convex along random chords", "[barrier]") {
    RngStream rng(23);
    for (BarrierKind kind : {BarrierKind::ExtendedLog, BarrierKind::Quadratic, BarrierKind::Exponential}) {
        for (double tau : {1.0, 5.0, 20.0}) {
            const BarrierConfig cfg = cfg_of(kind, kind == BarrierKind::Exponential ? 0.01 * tau : tau);
            for (int i = 0; i < 200; ++i) {
                const double a = -50.0 + 55.0 * rng.uniform();
                const double b = -50.0 + 55.0 * rng.uniform();
                const double mid = 0.5 * (a + b);
                const double chord = 0.5 * (phi(a, cfg) + phi(b, cfg));
                REQUIRE(phi(mid, cfg) <= chord + 1e-9 * std::max(1.0, std::abs(chord)));
            }
        }
    }
}

TEST_CASE("implicit duals coincide with the kernel slope", "[barrier]") {
    const BarrierConfig cfg = cfg_of(BarrierKind::ExtendedLog, 5.0);
    RngStream rng(31);
    Vec g(50);
    for (int i = 0; i < 50; ++i) g[i] = -10.0 + 12.0 * rng.uniform();
    const Vec lambda = implicit_duals(g, cfg);
    REQUIRE(lambda.size() == g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        REQUIRE(lambda[i] == phi_derivative(g[i], cfg));
        REQUIRE(lambda[i] > 0.0);
        REQUIRE(lambda[i] <= cfg.tau);
    }
    const BarrierConfig quad = cfg_of(BarrierKind::Quadratic, 1.0);
    REQUIRE_THROWS_AS(implicit_duals(g, quad), std::invalid_argument);
}

TEST_CASE("gap term respects its ceiling and saturates on the log branch", "[barrier]") {
    RngStream rng(47);
    for (double tau : {1.0, 5.0, 20.0}) {
        const BarrierConfig cfg = cfg_of(BarrierKind::ExtendedLog, tau);
        for (int i = 0; i < 1000; ++i) {
            const double g = -30.0 + 32.0 * rng.uniform();
            const GapTermCheck chk = gap_term_bound_check(g, cfg);
            REQUIRE(chk.ok);
            REQUIRE(chk.value <= chk.bound + 1e-12);
            if (g <= -1.0 / (tau * tau))
                REQUIRE(chk.value == Catch::Approx(chk.bound).margin(1e-12));
        }
    }
    // tau=2, g=-1: lambda = 1/2 and -lambda*g hits 1/tau exactly.
    const GapTermCheck exact = gap_term_bound_check(-1.0, cfg_of(BarrierKind::ExtendedLog, 2.0));
    REQUIRE(exact.value == 0.5);
    REQUIRE(exact.bound == 0.5);
    REQUIRE(exact.ok);
    REQUIRE_THROWS_AS(gap_term_bound_check(-1.0, cfg_of(BarrierKind::Quadratic, 2.0)),
                      std::invalid_argument);
}

TEST_CASE("kernel rejects NaN inputs and non-positive temperatures", "[barrier]") {
    const BarrierConfig cfg = cfg_of(BarrierKind::ExtendedLog, 1.0);
    REQUIRE_THROWS_AS(phi(std::nan(""), cfg), std::invalid_argument);
    REQUIRE_THROWS_AS(phi_derivative(std::nan(""), cfg), std::invalid_argument);
    REQUIRE_THROWS_AS(cfg_of(BarrierKind::ExtendedLog, 0.0).validate(), std::invalid_argument);
    REQUIRE_THROWS_AS(phi(0.0, cfg_of(BarrierKind::Quadratic, -1.0)), std::invalid_argument);
}
