#pragma once

#include <cmath>
#include <stdexcept>

#include "pcpo/math.hpp"

namespace pcpo {

/**
 * Penalty kernel applied to constraint surrogate values g (feasible
 * when g <= 0).
 *
 * ExtendedLog is the primary kernel: a log barrier on the deep
 * feasible region continued by its tangent line beyond g = -1/tau^2,
 * so it is finite, convex, strictly increasing and C1 on all of R.
 * Quadratic (tau * g^2) and Exponential (exp(tau * g)) are ablation
 * kernels.
 */
enum class BarrierKind { ExtendedLog, Quadratic, Exponential };

struct BarrierConfig {
    BarrierKind kind = BarrierKind::ExtendedLog;
    double tau = 20.0;

    void validate() const {
        if (!(tau > 0.0)) throw std::invalid_argument("barrier: tau must be positive");
    }
};

inline double phi(double g, const BarrierConfig &cfg) {
    cfg.validate();
    if (std::isnan(g)) throw std::invalid_argument("barrier: g is NaN");
    const double tau = cfg.tau;
    switch (cfg.kind) {
    case BarrierKind::ExtendedLog:
        if (g <= -1.0 / (tau * tau)) return -std::log(-g) / tau;
        return tau * g - std::log(1.0 / (tau * tau)) / tau + 1.0 / tau;
    case BarrierKind::Quadratic:
        return tau * g * g;
    case BarrierKind::Exponential:
        return std::exp(tau * g);
    }
    throw std::logic_error("barrier: unknown kind");
}

inline double phi_derivative(double g, const BarrierConfig &cfg) {
    cfg.validate();
    if (std::isnan(g)) throw std::invalid_argument("barrier: g is NaN");
    const double tau = cfg.tau;
    switch (cfg.kind) {
    case BarrierKind::ExtendedLog:
        if (g <= -1.0 / (tau * tau)) return -1.0 / (tau * g);
        return tau;
    case BarrierKind::Quadratic:
        return 2.0 * tau * g;
    case BarrierKind::Exponential:
        return tau * std::exp(tau * g);
    }
    throw std::logic_error("barrier: unknown kind");
}

/**
 * Multipliers implied by the extended log barrier at the current
 * constraint values: lambda_i = -1/(tau * g_i) on the log branch and
 * tau on the linear branch, which coincides with phi'(g_i).
 */
inline Vec implicit_duals(const Vec &g, const BarrierConfig &cfg) {
    if (cfg.kind != BarrierKind::ExtendedLog)
        throw std::invalid_argument("implicit duals are defined for the extended log kernel only");
    Vec lambda(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) lambda[i] = phi_derivative(g[i], cfg);
    return lambda;
}

struct GapTermCheck {
    double value = 0.0; // -lambda*(g) * g
    double bound = 0.0; // 1/tau
    bool ok = false;
};

/**
 * Checks the per-constraint complementarity-style term entering the
 * duality gap: -lambda*(g) * g <= 1/tau, which holds with equality on
 * the log branch and strictly inside/outside it.
 */
inline GapTermCheck gap_term_bound_check(double g, const BarrierConfig &cfg) {
    if (cfg.kind != BarrierKind::ExtendedLog)
        throw std::invalid_argument("gap term check is defined for the extended log kernel only");
    GapTermCheck out;
    out.bound = 1.0 / cfg.tau;
    out.value = -phi_derivative(g, cfg) * g;
    out.ok = out.value <= out.bound + 1e-12;
    return out;
}

} // namespace pcpo
