#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "pcpo/intrinsic.hpp"
#include "pcpo/policy.hpp"

using namespace pcpo;

namespace {

IntrinsicConfig margin_cfg(double kappa) {
    IntrinsicConfig cfg;
    cfg.gate_margin = kappa;
    return cfg;
}

} // namespace

TEST_CASE("single sample sitting exactly on the gate margin earns half a bonus", "[intrinsic]") {
    std::vector<Vec> adv = {Vec::Constant(1, 3.7)};
    Vec g(1), d(1);
    g[0] = -0.5;
    d[0] = 10.0;
    const IntrinsicBatch out = intrinsic_scores(adv, g, d, margin_cfg(0.5), 0.9);
    // gate = sigmoid(0), softmax of one sample = 1.
    REQUIRE(out.gates[0] == 0.5);
    REQUIRE(out.channel_totals[0] == 0.5);
    REQUIRE(out.per_sample(0, 0) == 0.5);
    REQUIRE(out.total == 0.5);
}

TEST_CASE("samples deeper than the margin get exactly zero bonus", "[intrinsic]") {
    std::vector<Vec> adv = {Vec::Constant(4, 1.0)};
    Vec g(1), d(1);
    g[0] = -0.5 - 1e-9;
    d[0] = 10.0;
    const IntrinsicBatch out = intrinsic_scores(adv, g, d, margin_cfg(0.5), 0.9);
    REQUIRE(out.gates[0] == 0.0);
    REQUIRE(out.channel_totals[0] == 0.0);
    REQUIRE(out.per_sample.col(0).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(out.total == 0.0);
}

TEST_CASE("disabled or zero-weight bonus leaves correctly sized zeros", "[intrinsic]") {
    std::vector<Vec> adv = {Vec::Constant(5, 2.0), Vec::Constant(5, -1.0)};
    Vec g(2), d(2);
    g << -0.01, -0.02;
    d << 5.0, 7.0;
    IntrinsicConfig off;
    off.enabled = false;
    IntrinsicConfig zero;
    zero.omega = 0.0;
    for (const IntrinsicConfig &cfg : {off, zero}) {
        REQUIRE_FALSE(cfg.active());
        const IntrinsicBatch out = intrinsic_scores(adv, g, d, cfg, 0.9);
        REQUIRE(out.per_sample.rows() == 5);
        REQUIRE(out.per_sample.cols() == 2);
        REQUIRE(out.per_sample.cwiseAbs().maxCoeff() == 0.0);
        REQUIRE(out.gates.size() == 2);
        REQUIRE(out.channel_totals.size() == 2);
        REQUIRE(out.channel_totals.cwiseAbs().maxCoeff() == 0.0);
        REQUIRE(out.total == 0.0);
    }
}

TEST_CASE("channel totals equal the gate and never exceed one", "[intrinsic]") {
    RngStream rng(5);
    for (int rep = 0; rep < 25; ++rep) {
        const int n = 3 + static_cast<int>(rng.uniform() * 20);
        std::vector<Vec> adv(2);
        for (Vec &a : adv) {
            a = Vec(n);
            for (int j = 0; j < n; ++j) a[j] = 4.0 * rng.normal();
        }
        Vec g(2), d(2);
        g << -0.2 * rng.uniform(), 0.3 * rng.uniform();
        d << 5.0, 5.0;
        IntrinsicConfig cfg = margin_cfg(0.5);
        const IntrinsicBatch out = intrinsic_scores(adv, g, d, cfg, 0.95);
        for (int i = 0; i < 2; ++i) {
            REQUIRE(out.channel_totals[i] == Catch::Approx(out.gates[i]).margin(1e-12));
            REQUIRE(out.channel_totals[i] >= 0.0);
            REQUIRE(out.channel_totals[i] <= 1.0);
            REQUIRE(out.per_sample.col(i).sum() == Catch::Approx(out.channel_totals[i]).margin(1e-12));
        }
        REQUIRE(out.total == Catch::Approx(out.channel_totals.sum()).margin(1e-12));
    }
}

TEST_CASE("unconstrained channels receive no bonus", "[intrinsic]") {
    std::vector<Vec> adv = {Vec::Constant(3, 1.0), Vec::Constant(3, 1.0)};
    Vec g(2), d(2);
    g << -0.1, -0.1;
    d << kInf, 5.0;
    const IntrinsicBatch out = intrinsic_scores(adv, g, d, margin_cfg(0.5), 0.9);
    REQUIRE(out.gates[0] == 0.0);
    REQUIRE(out.per_sample.col(0).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(out.gates[1] > 0.0);
    REQUIRE(out.total == out.channel_totals[1]);
}

TEST_CASE("intrinsic scores reject ragged channels and bad shapes", "[intrinsic]") {
    std::vector<Vec> ragged = {Vec::Constant(3, 1.0), Vec::Constant(2, 1.0)};
    Vec g(2), d(2);
    g << -0.1, -0.1;
    d << 5.0, 5.0;
    REQUIRE_THROWS_AS(intrinsic_scores(ragged, g, d, margin_cfg(0.5), 0.9), std::invalid_argument);
    std::vector<Vec> adv = {Vec::Constant(3, 1.0)};
    REQUIRE_THROWS_AS(intrinsic_scores(adv, g, d, margin_cfg(0.5), 0.9), std::invalid_argument);
}

TEST_CASE("config validation rejects bad knobs", "[intrinsic]") {
    IntrinsicConfig cfg;
    cfg.omega = -0.1;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = IntrinsicConfig{};
    cfg.epsilon = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = IntrinsicConfig{};
    cfg.gate_margin = -1.0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = IntrinsicConfig{};
    cfg.alpha = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = IntrinsicConfig{};
    cfg.enabled = false;
    cfg.alpha = 0.0;
    REQUIRE_NOTHROW(cfg.validate());
}

TEST_CASE("gate margin falls back to a fraction of the threshold", "[intrinsic]") {
    IntrinsicConfig cfg;
    cfg.gate_margin_scale = 0.05;
    REQUIRE(cfg.margin_for(40.0) == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(cfg.margin_for(kInf) == 0.0);
    cfg.gate_margin = 0.7;
    REQUIRE(cfg.margin_for(40.0) == 0.7);
}

TEST_CASE("adaptive weight tracks running maxima and caps the bonus", "[intrinsic]") {
    IntrinsicConfig cfg;
    cfg.omega = 0.25;
    IntrinsicMaxima maxima;
    const double eta0 = eta_weight(maxima, 8.0, 0.5, cfg);
    REQUIRE(maxima.initialized);
    REQUIRE(maxima.g_max == 8.0);
    REQUIRE(maxima.i_max == 0.5);
    REQUIRE(eta0 == Catch::Approx(0.25 * 8.0 / (0.5 + cfg.epsilon)).margin(1e-12));
    // A smaller magnitude later never shrinks the maxima.
    const double eta1 = eta_weight(maxima, 3.0, 0.1, cfg);
    REQUIRE(maxima.g_max == 8.0);
    REQUIRE(maxima.i_max == 0.5);
    REQUIRE(eta1 == eta0);
    // The invariant eta * I <= omega * G_max holds along any trajectory.
    RngStream rng(77);
    IntrinsicMaxima m2;
    for (int i = 0; i < 200; ++i) {
        const double mag = 10.0 * rng.uniform();
        const double intr = rng.uniform();
        const double eta = eta_weight(m2, mag, intr, cfg);
        REQUIRE(eta * intr <= cfg.omega * m2.g_max + 1e-12);
    }
}

TEST_CASE("adaptive weight vanishes when the bonus is off and rejects bad input", "[intrinsic]") {
    IntrinsicConfig off;
    off.omega = 0.0;
    IntrinsicMaxima maxima;
    REQUIRE(eta_weight(maxima, 5.0, 0.5, off) == 0.0);
    REQUIRE_FALSE(maxima.initialized);
    IntrinsicConfig cfg;
    REQUIRE_THROWS_AS(eta_weight(maxima, -1.0, 0.5, cfg), std::invalid_argument);
    REQUIRE_THROWS_AS(eta_weight(maxima, kInf, 0.5, cfg), std::invalid_argument);
}

TEST_CASE("augmented objective combines terms and guards empty ones", "[intrinsic]") {
    Vec phi(2);
    phi << 0.5, 0.25;
    REQUIRE(augmented_objective(1.0, phi, 2.0, 0.3) == Catch::Approx(0.85).margin(1e-12));
    // Either factor being zero skips the bonus term entirely, so a
    // meaningless partner value cannot poison the result.
    REQUIRE(augmented_objective(1.0, Vec::Zero(1), 0.0, kInf) == 1.0);
    REQUIRE(augmented_objective(1.0, Vec::Zero(1), kInf, 0.0) == 1.0);
    REQUIRE_THROWS_AS(augmented_objective(std::nan(""), phi, 0.0, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(augmented_objective(kInf, phi, 0.0, 0.0), std::invalid_argument);
    Vec bad(1);
    bad << std::nan("");
    REQUIRE_THROWS_AS(augmented_objective(1.0, bad, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("paired-update diagnostic reports both verdicts", "[intrinsic]") {
    const Prop1Result good = proposition1_diagnostic(2.0, 1.0, 1.5, 1.0, 0.5, 0.8, 0.2);
    REQUIRE(good.lhs == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(good.rhs == Catch::Approx(0.8).margin(1e-12));
    REQUIRE(good.holds);
    const Prop1Result bad = proposition1_diagnostic(1.0, 1.0, 2.0, 1.0, 0.0, 0.0, 0.0);
    REQUIRE(bad.lhs == 0.0);
    REQUIRE(bad.rhs == 1.0);
    REQUIRE_FALSE(bad.holds);
}

TEST_CASE("bonus gradient is the intrinsic-weighted score sum", "[intrinsic]") {
    const PolicyParams p = make_tabular_policy(3, 2);
    RolloutBatch batch;
    batch.cost_channels = 1;
    batch.horizon = 2;
    Episode ep;
    StepRecord a;
    a.state.index = 0;
    a.action.index = 1;
    a.costs = Vec::Constant(1, 0.0);
    StepRecord b;
    b.state.index = 2;
    b.action.index = 0;
    b.costs = Vec::Constant(1, 0.0);
    ep.steps = {a, b};
    batch.episodes = {ep};

    IntrinsicBatch intr;
    intr.per_sample = Mat::Zero(2, 1);
    intr.per_sample(0, 0) = 0.4;
    intr.per_sample(1, 0) = 0.0;
    const Vec grad = intrinsic_gradient(batch, intr, p);
    const Vec expected = 0.4 * score(p, a.state, a.action);
    REQUIRE((grad - expected).norm() <= 1e-14);

    IntrinsicBatch wrong;
    wrong.per_sample = Mat::Zero(3, 1);
    wrong.per_sample(0, 0) = 1.0;
    REQUIRE_THROWS_AS(intrinsic_gradient(batch, wrong, p), std::invalid_argument);
}
