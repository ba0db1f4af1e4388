#pragma once

#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcpo/barrier.hpp"
#include "pcpo/cmdp.hpp"
#include "pcpo/env.hpp"
#include "pcpo/estimator.hpp"
#include "pcpo/intrinsic.hpp"
#include "pcpo/lagrangian.hpp"
#include "pcpo/math.hpp"
#include "pcpo/trust_region.hpp"

namespace pcpo {

enum class Method { Pcpo, Lagrangian, PcpoNoIntrinsic, PcpoQuadratic, PcpoExponential };

inline std::string method_name(Method m) {
    switch (m) {
    case Method::Pcpo: return "pcpo";
    case Method::Lagrangian: return "lagrangian";
    case Method::PcpoNoIntrinsic: return "pcpo-no-intrinsic";
    case Method::PcpoQuadratic: return "pcpo-quadratic";
    case Method::PcpoExponential: return "pcpo-exponential";
    }
    throw std::logic_error("unknown method");
}

inline Method parse_method(const std::string &name) {
    if (name == "pcpo") return Method::Pcpo;
    if (name == "lagrangian") return Method::Lagrangian;
    if (name == "pcpo-no-intrinsic") return Method::PcpoNoIntrinsic;
    if (name == "pcpo-quadratic") return Method::PcpoQuadratic;
    if (name == "pcpo-exponential") return Method::PcpoExponential;
    throw std::invalid_argument("unknown method '" + name + "'");
}

struct EnvParams {
    double velocity_threshold = 1.0;
    double accel_limit = 1.0;
    double dt = 0.1;
    double circle_radius = 1.0;
    double x_boundary = 0.7;
    double initial_log_std = 0.0;
};

/**
 * Full experiment description. `thresholds` empty means "auto":
 * calibrate each d_i to 50% of an unconstrained trust-region agent's
 * converged cost return. `horizon` 0 picks a per-environment default
 * (chain: 700, continuous toys: 200).
 */
struct ExperimentConfig {
    std::string environment = "chain"; // chain | point_velocity | point_circle | cmdp_file
    std::string cmdp_path;
    Method method = Method::Pcpo;
    int iterations = 100;
    int episodes_per_batch = 40;
    int horizon = 0;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::vector<double> thresholds; // empty = auto-calibrate
    int calibration_iterations = 60;
    double reference_grid = 0.1; // 0 disables the brute-force reference
    std::string output_dir = "runs";
    int checkpoint_every = 0;
    double discount = 0.99;
    EstimatorConfig estimator;
    TrustRegionConfig trust_region;
    double tau = 20.0;
    double tau_quadratic = 1.0;
    double tau_exponential = 0.01;
    IntrinsicConfig intrinsic;
    LagrangianConfig lagrangian;
    EnvParams env_params;
    bool prop1_diagnostic = false;
    bool theory_checks = true;
    int eval_episodes = 40;

    int resolved_horizon() const {
        if (horizon > 0) return horizon;
        return environment == "chain" || environment == "cmdp_file" ? 700 : 200;
    }

    BarrierConfig barrier_config() const {
        BarrierConfig b;
        switch (method) {
        case Method::PcpoQuadratic:
            b.kind = BarrierKind::Quadratic;
            b.tau = tau_quadratic;
            break;
        case Method::PcpoExponential:
            b.kind = BarrierKind::Exponential;
            b.tau = tau_exponential;
            break;
        default:
            b.kind = BarrierKind::ExtendedLog;
            b.tau = tau;
            break;
        }
        return b;
    }

    IntrinsicConfig intrinsic_config() const {
        IntrinsicConfig c = intrinsic;
        if (method == Method::Lagrangian || method == Method::PcpoNoIntrinsic) c.enabled = false;
        return c;
    }

    void validate() const {
        if (iterations < 0) throw std::invalid_argument("config: iterations must be nonnegative");
        if (episodes_per_batch <= 0) throw std::invalid_argument("config: episodes_per_batch must be positive");
        if (horizon < 0) throw std::invalid_argument("config: horizon must be nonnegative");
        if (seeds.empty()) throw std::invalid_argument("config: at least one seed required");
        if (!(discount > 0.0) || !(discount < 1.0))
            throw std::invalid_argument("config: discount must lie in (0, 1)");
        if (calibration_iterations <= 0)
            throw std::invalid_argument("config: calibration_iterations must be positive");
        if (reference_grid < 0.0 || reference_grid > 1.0)
            throw std::invalid_argument("config: reference_grid must lie in [0, 1]");
        if (checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be nonnegative");
        if (eval_episodes <= 0) throw std::invalid_argument("config: eval_episodes must be positive");
        if (!(tau > 0.0) || !(tau_quadratic > 0.0) || !(tau_exponential > 0.0))
            throw std::invalid_argument("config: barrier scales must be positive");
        EstimatorConfig est = estimator;
        est.discount = discount;
        est.validate();
        trust_region.validate();
        intrinsic.validate();
        lagrangian.validate();
        for (double d : thresholds)
            if (std::isnan(d)) throw std::invalid_argument("config: threshold is NaN");
    }
};

namespace detail {

template <typename T>
inline void read_field(const nlohmann::json &j, const char *key, T &out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace detail

/**
 * JSON configuration schema (all fields optional, defaults above):
 * top-level scalars plus "estimator", "trust_region", "barrier",
 * "intrinsic", "lagrangian" and "env_params" sections. "thresholds"
 * accepts the string "auto", a number, or an array of numbers
 * ("inf" as a string marks an unconstrained channel).
 */
inline ExperimentConfig parse_config(const nlohmann::json &j) {
    ExperimentConfig c;
    detail::read_field(j, "environment", c.environment);
    detail::read_field(j, "cmdp_path", c.cmdp_path);
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    detail::read_field(j, "iterations", c.iterations);
    detail::read_field(j, "episodes_per_batch", c.episodes_per_batch);
    detail::read_field(j, "horizon", c.horizon);
    detail::read_field(j, "seeds", c.seeds);
    detail::read_field(j, "calibration_iterations", c.calibration_iterations);
    detail::read_field(j, "reference_grid", c.reference_grid);
    detail::read_field(j, "output_dir", c.output_dir);
    detail::read_field(j, "checkpoint_every", c.checkpoint_every);
    detail::read_field(j, "discount", c.discount);
    detail::read_field(j, "prop1_diagnostic", c.prop1_diagnostic);
    detail::read_field(j, "theory_checks", c.theory_checks);
    detail::read_field(j, "eval_episodes", c.eval_episodes);

    if (j.contains("thresholds")) {
        const nlohmann::json &t = j.at("thresholds");
        c.thresholds.clear();
        const auto push = [&](const nlohmann::json &v) {
            if (v.is_string()) {
                const std::string s = v.get<std::string>();
                if (s == "inf" || s == "+inf") c.thresholds.push_back(kInf);
                else if (s == "auto") return; // empty list = auto
                else throw std::invalid_argument("config: bad threshold '" + s + "'");
            } else {
                c.thresholds.push_back(v.get<double>());
            }
        };
        if (t.is_array())
            for (const auto &v : t) push(v);
        else push(t);
    }

    if (j.contains("estimator")) {
        const nlohmann::json &e = j.at("estimator");
        detail::read_field(e, "lambda_reward", c.estimator.lambda_reward);
        detail::read_field(e, "lambda_cost", c.estimator.lambda_cost);
        detail::read_field(e, "value_learning_rate", c.estimator.value_learning_rate);
        detail::read_field(e, "l2_coeff", c.estimator.l2_coeff);
        detail::read_field(e, "minibatch_size", c.estimator.minibatch_size);
        detail::read_field(e, "value_fit_epochs", c.estimator.value_fit_epochs);
        detail::read_field(e, "normalize_reward_advantages", c.estimator.normalize_reward_advantages);
    }
    if (j.contains("trust_region")) {
        const nlohmann::json &t = j.at("trust_region");
        detail::read_field(t, "delta", c.trust_region.delta);
        detail::read_field(t, "damping", c.trust_region.damping);
        detail::read_field(t, "cg_max_iters", c.trust_region.cg_max_iters);
        detail::read_field(t, "cg_tolerance", c.trust_region.cg_tolerance);
        detail::read_field(t, "backtrack_coeff", c.trust_region.backtrack_coeff);
        detail::read_field(t, "max_backtracks", c.trust_region.max_backtracks);
    }
    if (j.contains("barrier")) {
        const nlohmann::json &b = j.at("barrier");
        detail::read_field(b, "tau", c.tau);
        detail::read_field(b, "tau_quadratic", c.tau_quadratic);
        detail::read_field(b, "tau_exponential", c.tau_exponential);
    }
    if (j.contains("intrinsic")) {
        const nlohmann::json &i = j.at("intrinsic");
        detail::read_field(i, "enabled", c.intrinsic.enabled);
        detail::read_field(i, "omega", c.intrinsic.omega);
        detail::read_field(i, "alpha", c.intrinsic.alpha);
        detail::read_field(i, "beta", c.intrinsic.beta);
        detail::read_field(i, "epsilon", c.intrinsic.epsilon);
        if (i.contains("gate_margin") && !i.at("gate_margin").is_null())
            c.intrinsic.gate_margin = i.at("gate_margin").get<double>();
        detail::read_field(i, "gate_margin_scale", c.intrinsic.gate_margin_scale);
    }
    if (j.contains("lagrangian")) {
        const nlohmann::json &l = j.at("lagrangian");
        detail::read_field(l, "lambda_lr", c.lagrangian.lambda_lr);
        detail::read_field(l, "lambda_max", c.lagrangian.lambda_max);
        detail::read_field(l, "lambda_init", c.lagrangian.lambda_init);
    }
    if (j.contains("env_params")) {
        const nlohmann::json &e = j.at("env_params");
        detail::read_field(e, "velocity_threshold", c.env_params.velocity_threshold);
        detail::read_field(e, "accel_limit", c.env_params.accel_limit);
        detail::read_field(e, "dt", c.env_params.dt);
        detail::read_field(e, "circle_radius", c.env_params.circle_radius);
        detail::read_field(e, "x_boundary", c.env_params.x_boundary);
        detail::read_field(e, "initial_log_std", c.env_params.initial_log_std);
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
    nlohmann::json j;
    in >> j;
    return parse_config(j);
}

/**
 * The 6-state, 2-action chain used throughout: action 0 advances
 * slowly at no cost, action 1 advances quickly at unit cost, reward
 * grows with the state index and the top state wraps around. The
 * unconstrained optimum always takes the fast action, so calibrated
 * thresholds are binding. Thresholds default to +inf until resolved.
 */
inline TabularCmdp make_chain_cmdp(double discount = 0.99) {
    const int S = 6, A = 2;
    TabularCmdp m;
    m.n_states = S;
    m.n_actions = A;
    m.discount = discount;
    m.transition = Mat::Zero(S * A, S);
    const double p_slow = 0.35, p_fast = 0.95;
    for (int s = 0; s < S; ++s) {
        const int next = (s + 1) % S;
        m.transition(s * A + 0, next) = p_slow;
        m.transition(s * A + 0, s) = 1.0 - p_slow;
        m.transition(s * A + 1, next) = p_fast;
        m.transition(s * A + 1, s) = 1.0 - p_fast;
    }
    m.reward.resize(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) m.reward(s, a) = static_cast<double>(s) / (S - 1);
    Mat hazard = Mat::Zero(S, A);
    hazard.col(1).setOnes();
    m.costs = {hazard};
    m.thresholds = Vec::Constant(1, kInf);
    m.initial_dist = Vec::Zero(S);
    m.initial_dist[0] = 1.0;
    return m;
}

/// Environment factory; tabular models get `thresholds` stamped in when provided.
inline std::unique_ptr<Environment> make_environment(const ExperimentConfig &cfg,
                                                     const Vec *thresholds = nullptr) {
    if (cfg.environment == "chain" || cfg.environment == "cmdp_file") {
        TabularCmdp m;
        if (cfg.environment == "chain") {
            m = make_chain_cmdp(cfg.discount);
        } else {
            std::ifstream in(cfg.cmdp_path);
            if (!in) throw std::invalid_argument("cannot open cmdp file '" + cfg.cmdp_path + "'");
            m = load_cmdp(in);
        }
        if (thresholds) {
            if (thresholds->size() != m.num_channels())
                throw std::invalid_argument("threshold count does not match cmdp channels");
            m.thresholds = *thresholds;
        }
        return std::make_unique<TabularEnv>(std::move(m));
    }
    if (cfg.environment == "point_velocity") {
        auto env = std::make_unique<PointVelocityEnv>();
        env->accel_limit = cfg.env_params.accel_limit;
        env->velocity_threshold = cfg.env_params.velocity_threshold;
        env->dt = cfg.env_params.dt;
        return env;
    }
    if (cfg.environment == "point_circle") {
        auto env = std::make_unique<PointCircleEnv>();
        env->accel_limit = cfg.env_params.accel_limit;
        env->circle_radius = cfg.env_params.circle_radius;
        env->x_boundary = cfg.env_params.x_boundary;
        env->dt = cfg.env_params.dt;
        return env;
    }
    throw std::invalid_argument("unknown environment '" + cfg.environment + "'");
}

} // namespace pcpo
