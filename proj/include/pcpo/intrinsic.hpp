#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pcpo/math.hpp"
#include "pcpo/policy.hpp"
#include "pcpo/sampler.hpp"

namespace pcpo {

/**
 * Exploration bonus near the constraint boundary. Per channel, sample
 * scores beta * |A_C| / ((1 - gamma) * max(-g, epsilon)) are passed
 * through a softmax across the batch (so the channel total is at most
 * 1) and scaled by a sigmoid gate sigma(alpha * (kappa + g)) that is
 * forced to zero whenever kappa + g < 0, i.e. when the policy is
 * farther from the boundary than the margin kappa.
 *
 * omega = 0 disables the bonus entirely, identically to enabled =
 * false: values, weight and gradient all vanish.
 */
struct IntrinsicConfig {
    bool enabled = true;
    double omega = 0.1; // weight scale for eta
    double alpha = 0.3; // gate sharpness
    double beta = 1.0;  // score sharpness
    double epsilon = 1e-8;
    std::optional<double> gate_margin; // kappa; unset = gate_margin_scale * threshold per channel
    double gate_margin_scale = 0.05;

    bool active() const { return enabled && omega > 0.0; }

    void validate() const {
        if (omega < 0.0) throw std::invalid_argument("intrinsic: omega must be nonnegative");
        if (!(epsilon > 0.0)) throw std::invalid_argument("intrinsic: epsilon must be positive");
        if (gate_margin && *gate_margin < 0.0)
            throw std::invalid_argument("intrinsic: gate margin must be nonnegative");
        if (enabled && (!(alpha > 0.0) || !(beta > 0.0)))
            throw std::invalid_argument("intrinsic: alpha and beta must be positive when enabled");
    }

    double margin_for(double threshold) const {
        if (gate_margin) return *gate_margin;
        if (std::isinf(threshold)) return 0.0;
        return gate_margin_scale * std::abs(threshold);
    }
};

struct IntrinsicBatch {
    Mat per_sample;      // N x m, gate * softmax weight of each sample
    Vec gates;           // per channel
    Vec channel_totals;  // I_Ci = gate (softmax weights sum to 1), in [0, 1)
    double total = 0.0;  // sum over channels
};

/**
 * Per-sample and per-channel intrinsic values for one batch.
 * Channels with an infinite threshold are unconstrained and receive
 * no bonus.
 */
inline IntrinsicBatch intrinsic_scores(const std::vector<Vec> &adv_costs, const Vec &g,
                                       const Vec &thresholds, const IntrinsicConfig &cfg,
                                       double discount) {
    cfg.validate();
    const int m = static_cast<int>(adv_costs.size());
    if (g.size() != m || thresholds.size() != m)
        throw std::invalid_argument("intrinsic_scores: channel count mismatch");
    const Eigen::Index n = m > 0 ? adv_costs[0].size() : 0;

    IntrinsicBatch out;
    out.per_sample = Mat::Zero(n, m);
    out.gates = Vec::Zero(m);
    out.channel_totals = Vec::Zero(m);
    if (!cfg.active()) return out;

    for (int i = 0; i < m; ++i) {
        if (adv_costs[static_cast<size_t>(i)].size() != n)
            throw std::invalid_argument("intrinsic_scores: ragged advantage channels");
        if (std::isinf(thresholds[i])) continue;
        const double kappa = cfg.margin_for(thresholds[i]);
        if (kappa + g[i] < 0.0) continue; // interior beyond the margin: no bonus
        const double gate = sigmoid(cfg.alpha * (kappa + g[i]));
        const double denom = (1.0 - discount) * std::max(-g[i], cfg.epsilon);
        Vec raw(n);
        for (Eigen::Index j = 0; j < n; ++j)
            raw[j] = cfg.beta * std::abs(adv_costs[static_cast<size_t>(i)][j]) / denom;
        const Vec weights = softmax(raw);
        out.per_sample.col(i) = gate * weights;
        out.gates[i] = gate;
        out.channel_totals[i] = gate * weights.sum();
    }
    out.total = out.channel_totals.sum();
    return out;
}

/**
 * Running maxima behind the adaptive weight eta. G_max starts from
 * the first iteration's |f - sum phi|, I_max from machine epsilon;
 * both absorb the current iteration before eta is computed, which
 * caps eta * I at omega * G_max.
 */
struct IntrinsicMaxima {
    bool initialized = false;
    double g_max = 0.0;
    double i_max = std::numeric_limits<double>::epsilon();
};

inline double eta_weight(IntrinsicMaxima &maxima, double g_objective_magnitude,
                         double intrinsic_total, const IntrinsicConfig &cfg) {
    cfg.validate();
    if (!std::isfinite(g_objective_magnitude) || g_objective_magnitude < 0.0)
        throw std::invalid_argument("eta_weight: |f - sum phi| must be finite and nonnegative");
    if (!cfg.active()) return 0.0;
    if (!maxima.initialized) {
        maxima.g_max = g_objective_magnitude;
        maxima.initialized = true;
    } else {
        maxima.g_max = std::max(maxima.g_max, g_objective_magnitude);
    }
    maxima.i_max = std::max(maxima.i_max, intrinsic_total);
    return cfg.omega * maxima.g_max / (maxima.i_max + cfg.epsilon);
}

/// G = f - sum_i phi_i + eta * sum_i I_i. Throws on non-finite f or phi.
inline double augmented_objective(double f, const Vec &phi_values, double eta, double intrinsic_total) {
    if (!std::isfinite(f)) throw std::invalid_argument("augmented_objective: f is not finite");
    double phi_sum = 0.0;
    for (Eigen::Index i = 0; i < phi_values.size(); ++i) {
        if (std::isnan(phi_values[i]))
            throw std::invalid_argument("augmented_objective: barrier value is NaN");
        phi_sum += phi_values[i];
    }
    double out = f - phi_sum;
    if (eta != 0.0 && intrinsic_total != 0.0) out += eta * intrinsic_total;
    return out;
}

struct Prop1Result {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

/**
 * Reported (never asserted) per-iteration diagnostic: the augmented
 * objective's improvement should be at least the barrier-only
 * improvement plus the weighted intrinsic change, comparing paired
 * updates taken from the same current policy.
 */
inline Prop1Result proposition1_diagnostic(double g_new, double g_old, double gbar_new,
                                           double gbar_old, double eta, double intr_new,
                                           double intr_old) {
    Prop1Result r;
    r.lhs = g_new - g_old;
    r.rhs = (gbar_new - gbar_old) + eta * (intr_new - intr_old);
    r.holds = r.lhs >= r.rhs - 1e-9;
    return r;
}

/**
 * Gradient contribution of the bonus term with per-sample intrinsic
 * values held fixed (standard reward-bonus treatment): the sum over
 * samples of the sample's total intrinsic value times its score.
 * Diagnostic-grade: the gate and softmax are not differentiated
 * through, so this is not the exact gradient of the bonus.
 */
inline Vec intrinsic_gradient(const RolloutBatch &batch, const IntrinsicBatch &intr,
                              const PolicyParams &p_old) {
    Vec grad = Vec::Zero(p_old.dim());
    if (intr.per_sample.rows() == 0) return grad;
    long flat = 0;
    for (const Episode &ep : batch.episodes)
        for (const StepRecord &rec : ep.steps) {
            const double v = intr.per_sample.row(flat++).sum();
            if (v != 0.0) grad += v * score(p_old, rec.state, rec.action);
        }
    if (flat != intr.per_sample.rows())
        throw std::invalid_argument("intrinsic_gradient: batch/intrinsic size mismatch");
    return grad;
}

} // namespace pcpo
