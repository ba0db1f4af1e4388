#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "pcpo/env.hpp"
#include "pcpo/policy.hpp"
#include "pcpo/sampler.hpp"

using namespace pcpo;

namespace {

TabularCmdp one_state_model() {
    TabularCmdp m;
    m.n_states = 1;
    m.n_actions = 1;
    m.discount = 0.9;
    m.transition = Mat::Constant(1, 1, 1.0);
    m.reward = Mat::Constant(1, 1, 1.0);
    m.costs = {Mat::Constant(1, 1, 0.5)};
    m.thresholds = Vec::Constant(1, kInf);
    m.initial_dist = Vec::Constant(1, 1.0);
    m.validate();
    return m;
}

bool batches_equal(const RolloutBatch &a, const RolloutBatch &b) {
    if (a.episodes.size() != b.episodes.size()) return false;
    for (size_t e = 0; e < a.episodes.size(); ++e) {
        const auto &ea = a.episodes[e].steps;
        const auto &eb = b.episodes[e].steps;
        if (ea.size() != eb.size()) return false;
        for (size_t t = 0; t < ea.size(); ++t) {
            if (ea[t].state.index != eb[t].state.index) return false;
            if (ea[t].action.index != eb[t].action.index) return false;
            if (ea[t].reward != eb[t].reward) return false;
            if ((ea[t].costs - eb[t].costs).cwiseAbs().maxCoeff() != 0.0) return false;
            if (ea[t].log_prob_behavior != eb[t].log_prob_behavior) return false;
            if (ea[t].terminal != eb[t].terminal || ea[t].truncated != eb[t].truncated) return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("rollouts are reproducible from the seed", "[sampler]") {
    const TabularCmdp m = oracle::random_cmdp(3, 4, 3, 0.9);
    const TabularEnv env(m);
    PolicyParams p = make_tabular_policy(4, 3);
    RngStream init(77);
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] = 0.3 * init.normal();

    const RolloutBatch a = collect(env, p, 6, 40, RngStream(11));
    const RolloutBatch b = collect(env, p, 6, 40, RngStream(11));
    REQUIRE(batches_equal(a, b));
    const RolloutBatch c = collect(env, p, 6, 40, RngStream(12));
    REQUIRE_FALSE(batches_equal(a, c));
}

TEST_CASE("episodes depend only on their substream index", "[sampler]") {
    const TabularCmdp m = oracle::random_cmdp(4, 3, 2, 0.9);
    const TabularEnv env(m);
    const PolicyParams p = make_tabular_policy(3, 2);
    const RolloutBatch small = collect(env, p, 3, 25, RngStream(5));
    const RolloutBatch large = collect(env, p, 8, 25, RngStream(5));
    for (size_t e = 0; e < small.episodes.size(); ++e) {
        const auto &sa = small.episodes[e].steps;
        const auto &sb = large.episodes[e].steps;
        REQUIRE(sa.size() == sb.size());
        for (size_t t = 0; t < sa.size(); ++t) {
            REQUIRE(sa[t].state.index == sb[t].state.index);
            REQUIRE(sa[t].action.index == sb[t].action.index);
        }
    }
}

TEST_CASE("horizon cutoffs are marked truncated, not terminal", "[sampler]") {
    const TabularCmdp m = oracle::random_cmdp(6, 3, 2, 0.95);
    const TabularEnv env(m);
    const PolicyParams p = make_tabular_policy(3, 2);
    const RolloutBatch batch = collect(env, p, 5, 30, RngStream(9));
    REQUIRE(batch.total_steps() == 5 * 30);
    REQUIRE(batch.horizon == 30);
    REQUIRE(batch.cost_channels == 1);
    for (const Episode &ep : batch.episodes) {
        REQUIRE(ep.steps.size() == 30);
        for (size_t t = 0; t + 1 < ep.steps.size(); ++t) {
            REQUIRE_FALSE(ep.steps[t].truncated);
            REQUIRE_FALSE(ep.steps[t].terminal);
        }
        REQUIRE(ep.steps.back().truncated);
        REQUIRE_FALSE(ep.steps.back().terminal);
    }
}

TEST_CASE("returns on a one-state loop match the geometric series", "[sampler]") {
    const TabularCmdp m = one_state_model();
    const TabularEnv env(m);
    const PolicyParams p = make_tabular_policy(1, 1);
    const int horizon = 10;
    const RolloutBatch batch = collect(env, p, 3, horizon, RngStream(1));
    const double expected_reward = (1.0 - std::pow(0.9, horizon)) / (1.0 - 0.9);
    REQUIRE(average_reward_return(batch, 0.9) == Catch::Approx(expected_reward).margin(1e-12));
    REQUIRE(average_cost_return(batch, 0.9, 0) == Catch::Approx(0.5 * expected_reward).margin(1e-12));
    const Vec per_episode = episode_reward_returns(batch, 0.9);
    REQUIRE(per_episode.size() == 3);
    for (int e = 0; e < 3; ++e)
        REQUIRE(per_episode[e] == Catch::Approx(expected_reward).margin(1e-12));
}

TEST_CASE("behavior log probabilities match recomputation", "[sampler]") {
    const TabularCmdp m = oracle::random_cmdp(8, 3, 3, 0.9);
    const TabularEnv env(m);
    PolicyParams p = make_tabular_policy(3, 3);
    RngStream init(2);
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] = 0.5 * init.normal();
    const RolloutBatch batch = collect(env, p, 4, 20, RngStream(3));
    for (const Episode &ep : batch.episodes)
        for (const StepRecord &step : ep.steps)
            REQUIRE(step.log_prob_behavior == log_prob(p, step.state, step.action));
}

TEST_CASE("state visitation counts every step once", "[sampler]") {
    const TabularCmdp m = oracle::random_cmdp(10, 4, 2, 0.9);
    const TabularEnv env(m);
    const PolicyParams p = make_tabular_policy(4, 2);
    const RolloutBatch batch = collect(env, p, 6, 15, RngStream(4));
    const Vec visits = state_visitation(batch, 4);
    REQUIRE(visits.sum() == Catch::Approx(1.0).margin(1e-12));
    Vec manual = Vec::Zero(4);
    for (const Episode &ep : batch.episodes)
        for (const StepRecord &step : ep.steps) manual[step.state.index] += 1.0;
    manual /= manual.sum();
    REQUIRE((visits - manual).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("continuous environments produce bounded, finite trajectories", "[sampler]") {
    PointVelocityEnv env;
    PolicyParams p = make_policy_for(env);
    const RolloutBatch batch = collect(env, p, 4, 50, RngStream(21));
    REQUIRE(batch.total_steps() == 4 * 50);
    for (const Episode &ep : batch.episodes)
        for (const StepRecord &step : ep.steps) {
            REQUIRE(std::isfinite(step.reward));
            REQUIRE(step.costs.size() == 1);
            REQUIRE((step.costs[0] == 0.0 || step.costs[0] == 1.0));
            REQUIRE(std::isfinite(step.state.features[0]));
        }
}
