#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pcpo/barrier.hpp"
#include "pcpo/cmdp.hpp"
#include "pcpo/intrinsic.hpp"
#include "pcpo/math.hpp"

namespace pcpo {

/**
 * Worst-state expected-advantage magnitudes entering the update
 * bound, computed from the exact oracle with the pairings as stated:
 * eps_new pairs the new policy with the old policy's reward
 * advantage; the cost terms pair each policy with its own cost
 * advantage (and are therefore zero up to float error under exact
 * evaluation, by advantage centering).
 */
struct EpsilonTerms {
    double eps_new = 0.0; // max_s |E_{a~pi_k+1}[A^{pi_k}(s, a)]|
    Vec eps_cost_old;     // max_s |E_{a~pi_k}[A_C^{pi_k}(s, a)]| per channel
    Vec eps_cost_new;     // max_s |E_{a~pi_k+1}[A_C^{pi_k+1}(s, a)]| per channel
};

inline EpsilonTerms epsilon_terms(const TabularCmdp &m, const Mat &pi_k, const Mat &pi_k1) {
    const ExactEval old_eval = exact_policy_eval(m, pi_k);
    const ExactEval new_eval = exact_policy_eval(m, pi_k1);
    EpsilonTerms out;
    out.eps_cost_old = Vec::Zero(m.num_channels());
    out.eps_cost_new = Vec::Zero(m.num_channels());
    for (int s = 0; s < m.n_states; ++s) {
        out.eps_new = std::max(out.eps_new, std::abs(pi_k1.row(s).dot(old_eval.adv.row(s))));
        for (int i = 0; i < m.num_channels(); ++i) {
            out.eps_cost_old[i] =
                std::max(out.eps_cost_old[i], std::abs(pi_k.row(s).dot(old_eval.adv_c[i].row(s))));
            out.eps_cost_new[i] =
                std::max(out.eps_cost_new[i], std::abs(pi_k1.row(s).dot(new_eval.adv_c[i].row(s))));
        }
    }
    return out;
}

/// Penalty rate eta(pi) = -sqrt(2 delta) * gamma * eps / (1 - gamma)^2.
inline double trust_region_penalty_rate(double delta, double discount, double eps) {
    return -std::sqrt(2.0 * delta) * discount * eps / ((1.0 - discount) * (1.0 - discount));
}

/**
 * Lower bound on the augmented objective's one-step change. Two
 * cases keyed on whether every constrained channel sits at or below
 * g <= -1/tau^2 (deep feasible: log-branch case). Both printed
 * variants of the case-1 log argument are evaluated: the theorem form
 * log(2 - d_i / (2 rate_C_i)) and the proof form
 * log(2 + d_i (1-gamma)^2 / (2 sqrt(2 delta) gamma eps_C_i)); they
 * are reported side by side because they are not algebraically equal
 * as stated. Case 2's proof variant keeps the tau factors the
 * final statement drops.
 */
struct UpdateBound {
    bool applicable = false;
    int case_index = 0;            // 1 = deep feasible (log branch), 2 = otherwise
    double bound_theorem = -kInf;  // as in the final statement
    double bound_proof = -kInf;    // as in the derivation
};

inline UpdateBound update_bound(const EpsilonTerms &eps, const Vec &g_old, const Vec &thresholds,
                                double tau, double delta, double discount, double eta_weight,
                                const Vec &i_max_per_channel) {
    if (g_old.size() != thresholds.size() || eps.eps_cost_old.size() != g_old.size() ||
        eps.eps_cost_new.size() != g_old.size() || i_max_per_channel.size() != g_old.size())
        throw std::invalid_argument("update_bound: channel count mismatch");
    if (!(tau > 0.0) || !(delta > 0.0) || !(discount > 0.0) || !(discount < 1.0))
        throw std::invalid_argument("update_bound: bad coefficients");

    UpdateBound out;
    bool any_constrained = false;
    bool all_deep = true;
    double intrinsic_cap = 0.0;
    for (Eigen::Index i = 0; i < g_old.size(); ++i) {
        if (std::isinf(thresholds[i])) continue;
        any_constrained = true;
        intrinsic_cap += i_max_per_channel[i];
        if (!(g_old[i] <= -1.0 / (tau * tau))) all_deep = false;
    }
    const double rate_new = trust_region_penalty_rate(delta, discount, eps.eps_new);
    if (!any_constrained) {
        // No constrained channel: the penalty terms vanish in both cases.
        out.applicable = true;
        out.case_index = 2;
        out.bound_theorem = rate_new;
        out.bound_proof = rate_new;
        return out;
    }

    if (all_deep) {
        out.case_index = 1;
        double log_sum_theorem = 0.0, log_sum_proof = 0.0;
        bool ok = true;
        for (Eigen::Index i = 0; i < g_old.size(); ++i) {
            if (std::isinf(thresholds[i])) continue;
            const double rate_c = trust_region_penalty_rate(delta, discount, eps.eps_cost_new[i]);
            const double arg_theorem = 2.0 - thresholds[i] / (2.0 * rate_c);
            const double arg_proof =
                2.0 + thresholds[i] * (1.0 - discount) * (1.0 - discount) /
                          (2.0 * std::sqrt(2.0 * delta) * discount * eps.eps_cost_new[i]);
            if (!(arg_theorem > 0.0) || !(arg_proof > 0.0)) {
                ok = false;
                break;
            }
            log_sum_theorem += std::log(arg_theorem);
            log_sum_proof += std::log(arg_proof);
        }
        out.applicable = ok;
        if (ok) {
            out.bound_theorem = rate_new - log_sum_theorem / tau - eta_weight * intrinsic_cap;
            out.bound_proof = rate_new - log_sum_proof / tau - eta_weight * intrinsic_cap;
        }
        return out;
    }

    out.case_index = 2;
    out.applicable = true;
    double d_sum = 0.0, rate_sum = 0.0;
    for (Eigen::Index i = 0; i < g_old.size(); ++i) {
        if (std::isinf(thresholds[i])) continue;
        d_sum += thresholds[i];
        rate_sum += trust_region_penalty_rate(delta, discount, eps.eps_cost_old[i]) +
                    trust_region_penalty_rate(delta, discount, eps.eps_cost_new[i]);
    }
    out.bound_theorem = -d_sum + rate_new + rate_sum - eta_weight * intrinsic_cap;
    out.bound_proof = -tau * d_sum + rate_new + tau * rate_sum - eta_weight * intrinsic_cap;
    return out;
}

/// Analytic duality-gap bound m/tau + eta * sum_i I_max_i over constrained channels.
inline double duality_gap_bound(double tau, const Vec &thresholds, double eta_weight,
                                const Vec &i_max_per_channel) {
    if (!(tau > 0.0)) throw std::invalid_argument("duality_gap_bound: tau must be positive");
    if (thresholds.size() != i_max_per_channel.size())
        throw std::invalid_argument("duality_gap_bound: channel count mismatch");
    int m = 0;
    double cap = 0.0;
    for (Eigen::Index i = 0; i < thresholds.size(); ++i) {
        if (std::isinf(thresholds[i])) continue;
        ++m;
        cap += i_max_per_channel[i];
    }
    return static_cast<double>(m) / tau + eta_weight * cap;
}

struct DualityGapMeasurement {
    double measured_gap = 0.0; // G(lambda*) - J(pi*)
    double bound = 0.0;
    double slack = 0.0; // grid-resolution allowance
    bool ok = false;
    bool feasible = false;
    double j_star = 0.0;
    Vec g_star;
    Vec lambda_star;
};

/**
 * Measures the duality gap on a small CMDP: finds the constrained
 * optimum by grid enumeration, evaluates the implicit duals there and
 * reports G(lambda*) - J(pi*) = -sum_i lambda*_i g_i(pi*) + eta *
 * sum_i gate_i against the analytic bound. gate_i is the exact channel
 * total of the bonus under the per-batch softmax construction. The
 * slack term 2 * resolution * L with a crude Lipschitz constant
 * absorbs the grid approximation of pi*.
 */
inline DualityGapMeasurement measured_duality_gap(const TabularCmdp &m, const BarrierConfig &barrier,
                                                  double grid_resolution, double eta_weight,
                                                  const IntrinsicConfig &intrinsic) {
    const BruteForceResult opt = brute_force_constrained_optimum(m, grid_resolution);
    DualityGapMeasurement out;
    out.feasible = opt.feasible;
    if (!opt.feasible) return out;
    out.j_star = opt.j;
    out.g_star = opt.j_c - m.thresholds;
    out.lambda_star = implicit_duals(out.g_star, barrier);

    double gap = 0.0;
    double gate_sum = 0.0;
    for (int i = 0; i < m.num_channels(); ++i) {
        if (std::isinf(m.thresholds[i])) continue;
        gap -= out.lambda_star[i] * out.g_star[i];
        if (intrinsic.active()) {
            const double kappa = intrinsic.margin_for(m.thresholds[i]);
            if (kappa + out.g_star[i] >= 0.0)
                gate_sum += sigmoid(intrinsic.alpha * (kappa + out.g_star[i]));
        }
    }
    gap += eta_weight * gate_sum;
    out.measured_gap = gap;

    const Vec i_max = Vec::Ones(m.num_channels());
    out.bound = duality_gap_bound(barrier.tau, m.thresholds, eta_weight, i_max);

    double cost_scale = 0.0;
    for (const Mat &c : m.costs) cost_scale += c.cwiseAbs().maxCoeff();
    const double lipschitz = (m.reward.cwiseAbs().maxCoeff() + cost_scale * (1.0 + barrier.tau)) /
                             ((1.0 - m.discount) * (1.0 - m.discount));
    out.slack = 2.0 * grid_resolution * lipschitz;
    out.ok = out.measured_gap <= out.bound + out.slack + 1e-9;
    return out;
}

struct ViolationSummary {
    Vec per_iteration; // sum over channels of max(0, J_C - d) at each iteration
    double total = 0.0;
};

/**
 * Cumulative constraint violation V(T) over a training trace of
 * per-iteration cost returns (rows = iterations, columns = channels).
 */
inline ViolationSummary cumulative_violation(const Mat &jc_trace, const Vec &thresholds) {
    if (jc_trace.cols() != thresholds.size())
        throw std::invalid_argument("cumulative_violation: channel count mismatch");
    ViolationSummary out;
    out.per_iteration = Vec::Zero(jc_trace.rows());
    for (Eigen::Index t = 0; t < jc_trace.rows(); ++t) {
        double v = 0.0;
        for (Eigen::Index i = 0; i < thresholds.size(); ++i) {
            if (std::isinf(thresholds[i])) continue;
            v += std::max(0.0, jc_trace(t, i) - thresholds[i]);
        }
        out.per_iteration[t] = v;
        out.total += v;
    }
    return out;
}

} // namespace pcpo
