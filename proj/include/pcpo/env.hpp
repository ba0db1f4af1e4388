#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "pcpo/cmdp.hpp"
#include "pcpo/math.hpp"

namespace pcpo {

/**
 * Observation as seen by policies and value functions. Tabular
 * environments fill `index`; continuous environments fill `features`.
 * `hidden` carries environment-internal state the agent never sees.
 */
struct Obs {
    int index = -1;
    Vec features;
    Vec hidden;
};

/// Discrete actions use `index`, continuous actions use `value`.
struct Act {
    int index = -1;
    Vec value;
};

struct StepOutcome {
    Obs next;
    double reward = 0.0;
    Vec costs;
    bool terminal = false;
};

/**
 * Stateless episodic environment: `step` is a pure function of
 * (observation, action, rng), which keeps rollout collection
 * trivially parallelizable and bitwise reproducible.
 */
class Environment {
public:
    virtual ~Environment() = default;
    virtual int num_cost_channels() const = 0;
    virtual bool discrete_actions() const = 0;
    virtual int n_actions() const { return 0; }   // discrete families
    virtual int n_states() const { return 0; }    // tabular families
    virtual int action_dim() const { return 0; }  // continuous families
    virtual int feature_dim() const { return 0; } // continuous families
    virtual Obs reset(RngStream &rng) const = 0;
    virtual StepOutcome step(const Obs &state, const Act &action, RngStream &rng) const = 0;
};

/// Samples trajectories from a TabularCmdp.
class TabularEnv final : public Environment {
public:
    explicit TabularEnv(TabularCmdp model) : model_(std::move(model)) { model_.validate(); }

    const TabularCmdp &model() const { return model_; }
    int num_cost_channels() const override { return model_.num_channels(); }
    bool discrete_actions() const override { return true; }
    int n_actions() const override { return model_.n_actions; }
    int n_states() const override { return model_.n_states; }

    Obs reset(RngStream &rng) const override {
        Obs o;
        o.index = rng.categorical(model_.initial_dist);
        return o;
    }

    StepOutcome step(const Obs &state, const Act &action, RngStream &rng) const override {
        if (state.index < 0 || state.index >= model_.n_states)
            throw std::invalid_argument("tabular env: bad state index");
        if (action.index < 0 || action.index >= model_.n_actions)
            throw std::invalid_argument("tabular env: bad action index");
        StepOutcome out;
        const Eigen::Index row = static_cast<Eigen::Index>(state.index) * model_.n_actions + action.index;
        out.next.index = rng.categorical(model_.transition.row(row).transpose());
        out.reward = model_.reward(state.index, action.index);
        out.costs.resize(model_.num_channels());
        for (int i = 0; i < model_.num_channels(); ++i)
            out.costs[i] = model_.costs[i](state.index, action.index);
        return out;
    }

private:
    TabularCmdp model_;
};

/**
 * Point mass on a line. Reward is the forward displacement per step;
 * the single cost channel is the indicator that speed exceeds the
 * threshold after the velocity update. Observation features are
 * [velocity, 1]; position is hidden state.
 */
class PointVelocityEnv final : public Environment {
public:
    double accel_limit = 1.0;
    double velocity_threshold = 1.0;
    double dt = 0.1;

    int num_cost_channels() const override { return 1; }
    bool discrete_actions() const override { return false; }
    int action_dim() const override { return 1; }
    int feature_dim() const override { return 2; }

    Obs reset(RngStream &) const override { return make_obs(0.0, 0.0); }

    StepOutcome step(const Obs &state, const Act &action, RngStream &) const override {
        const double position = state.hidden[0];
        const double velocity = state.features[0];
        const double a = std::clamp(action.value[0], -accel_limit, accel_limit);
        const double new_position = position + velocity * dt;
        const double new_velocity = velocity + a * dt;
        StepOutcome out;
        out.next = make_obs(new_position, new_velocity);
        out.reward = velocity * dt;
        out.costs = Vec::Constant(1, new_velocity > velocity_threshold ? 1.0 : 0.0);
        return out;
    }

private:
    static Obs make_obs(double position, double velocity) {
        Obs o;
        o.features = Vec(2);
        o.features << velocity, 1.0;
        o.hidden = Vec::Constant(1, position);
        return o;
    }
};

/**
 * Point mass in the plane rewarded for circling at a target radius
 * and penalized for leaving a vertical corridor. Observation features
 * are [x, y, u, v, 1].
 */
class PointCircleEnv final : public Environment {
public:
    double circle_radius = 1.0;
    double x_boundary = 0.7;
    double accel_limit = 1.0;
    double dt = 0.1;

    int num_cost_channels() const override { return 1; }
    bool discrete_actions() const override { return false; }
    int action_dim() const override { return 2; }
    int feature_dim() const override { return 5; }

    Obs reset(RngStream &) const override { return make_obs(0.0, 0.0, 0.0, 0.0); }

    StepOutcome step(const Obs &state, const Act &action, RngStream &) const override {
        const double x = state.features[0], y = state.features[1];
        const double u = state.features[2], v = state.features[3];
        const double ax = std::clamp(action.value[0], -accel_limit, accel_limit);
        const double ay = std::clamp(action.value[1], -accel_limit, accel_limit);
        const double nx = x + u * dt, ny = y + v * dt;
        const double nu = u + ax * dt, nv = v + ay * dt;
        StepOutcome out;
        out.next = make_obs(nx, ny, nu, nv);
        const double r_agent = std::max(std::sqrt(x * x + y * y), 1e-8);
        out.reward = (u * y + v * x) / (r_agent * (1.0 + std::abs(r_agent - circle_radius)));
        out.costs = Vec::Constant(1, std::abs(nx) > x_boundary ? 1.0 : 0.0);
        return out;
    }

private:
    static Obs make_obs(double x, double y, double u, double v) {
        Obs o;
        o.features = Vec(5);
        o.features << x, y, u, v, 1.0;
        return o;
    }
};

} // namespace pcpo
