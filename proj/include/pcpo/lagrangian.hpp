#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pcpo/math.hpp"

namespace pcpo {

struct LagrangianConfig {
    double lambda_lr = 0.01;
    double lambda_max = 2.0;
    double lambda_init = 0.0;

    void validate() const {
        if (!(lambda_lr > 0.0)) throw std::invalid_argument("lagrangian: lambda_lr must be positive");
        if (!(lambda_max > 0.0)) throw std::invalid_argument("lagrangian: lambda_max must be positive");
        if (lambda_init < 0.0 || lambda_init > lambda_max)
            throw std::invalid_argument("lagrangian: lambda_init must lie in [0, lambda_max]");
    }
};

struct LagrangianState {
    Vec lambdas;
};

inline LagrangianState make_lagrangian_state(int channels, const LagrangianConfig &cfg) {
    cfg.validate();
    LagrangianState s;
    s.lambdas = Vec::Constant(channels, cfg.lambda_init);
    return s;
}

/**
 * f - sum_i lambda_i g_i. Channels whose multiplier is exactly zero
 * contribute nothing even when g_i = -inf (an unconstrained channel),
 * avoiding 0 * inf.
 */
inline double lagrangian_objective(double f, const Vec &g, const Vec &lambdas) {
    if (g.size() != lambdas.size())
        throw std::invalid_argument("lagrangian_objective: channel count mismatch");
    double value = f;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        if (lambdas[i] < 0.0) throw std::invalid_argument("lagrangian_objective: negative multiplier");
        if (lambdas[i] == 0.0) continue;
        value -= lambdas[i] * g[i];
    }
    return value;
}

/**
 * Projected dual ascent on the sampled constraint estimates:
 * lambda_i <- clip(lambda_i + lr * (Jc_hat_i - d_i), 0, lambda_max).
 */
inline Vec dual_ascent(const Vec &lambdas, const Vec &jc_hat, const Vec &thresholds,
                       const LagrangianConfig &cfg) {
    cfg.validate();
    if (lambdas.size() != jc_hat.size() || lambdas.size() != thresholds.size())
        throw std::invalid_argument("dual_ascent: channel count mismatch");
    Vec out(lambdas.size());
    for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
        const double violation = jc_hat[i] - thresholds[i]; // -inf threshold channels clip to 0
        out[i] = std::clamp(lambdas[i] + cfg.lambda_lr * violation, 0.0, cfg.lambda_max);
    }
    return out;
}

} // namespace pcpo
