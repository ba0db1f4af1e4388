#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "pcpo/math.hpp"
#include "pcpo/policy.hpp"
#include "pcpo/sampler.hpp"

namespace pcpo {

struct TrustRegionConfig {
    double delta = 0.01;   // KL radius
    double damping = 0.1;  // added to the FIM diagonal
    int cg_max_iters = 15;
    double cg_tolerance = 1e-10;
    double backtrack_coeff = 0.5;
    int max_backtracks = 10;

    void validate() const {
        if (!(delta > 0.0)) throw std::invalid_argument("trust region: delta must be positive");
        if (damping < 0.0) throw std::invalid_argument("trust region: damping must be nonnegative");
        if (cg_max_iters <= 0 || !(cg_tolerance > 0.0))
            throw std::invalid_argument("trust region: bad CG settings");
        if (!(backtrack_coeff > 0.0) || !(backtrack_coeff < 1.0) || max_backtracks < 0)
            throw std::invalid_argument("trust region: bad line-search settings");
    }
};

/**
 * Fisher information matrix of the policy at its current parameters
 * (the Hessian of E_s[KL(pi_theta || pi_ref)] at theta = ref), as a
 * matrix-free operator. States enter through weights; actions are
 * integrated analytically for both families, so no sampled actions
 * appear. Tabular: per-state blocks w(s) * (diag(p) - p p^T).
 * LinearGaussian: mean block sum_s w(s) x x^T / sigma_d^2 per action
 * dimension, and a constant 2 per log-std coordinate.
 */
class FimOperator {
public:
    static FimOperator tabular_weights(const PolicyParams &params, const Vec &state_weights) {
        if (params.family != PolicyFamily::TabularSoftmax)
            throw std::invalid_argument("fim: tabular_weights requires a tabular policy");
        if (state_weights.size() != params.n_states)
            throw std::invalid_argument("fim: state weight length mismatch");
        const double total = state_weights.sum();
        if (!(total > 0.0)) throw std::invalid_argument("fim: weights must sum to a positive value");
        FimOperator op;
        op.family_ = PolicyFamily::TabularSoftmax;
        op.dim_ = params.dim();
        op.n_actions_ = params.n_actions;
        op.weights_ = state_weights / total;
        op.probs_ = policy_table(params);
        return op;
    }

    static FimOperator from_batch(const PolicyParams &params, const RolloutBatch &batch) {
        if (params.family == PolicyFamily::TabularSoftmax) {
            Vec counts = Vec::Zero(params.n_states);
            for (const Episode &ep : batch.episodes)
                for (const StepRecord &rec : ep.steps) counts[rec.state.index] += 1.0;
            return tabular_weights(params, counts);
        }
        FimOperator op;
        op.family_ = PolicyFamily::LinearGaussian;
        op.dim_ = params.dim();
        op.feature_dim_ = params.feature_dim;
        op.action_dim_ = params.action_dim;
        op.stds_ = params.stds();
        const int n = batch.total_steps();
        if (n == 0) throw std::invalid_argument("fim: empty batch");
        op.features_.reserve(static_cast<size_t>(n));
        for (const Episode &ep : batch.episodes)
            for (const StepRecord &rec : ep.steps) op.features_.push_back(rec.state.features);
        return op;
    }

    Eigen::Index dim() const { return dim_; }

    Vec apply(const Vec &v) const {
        if (v.size() != dim_) throw std::invalid_argument("fim: vector length mismatch");
        Vec out = Vec::Zero(dim_);
        if (family_ == PolicyFamily::TabularSoftmax) {
            for (int s = 0; s < weights_.size(); ++s) {
                const double w = weights_[s];
                if (w == 0.0) continue;
                const Eigen::Index base = static_cast<Eigen::Index>(s) * n_actions_;
                const auto block = v.segment(base, n_actions_);
                const Vec p = probs_.row(s).transpose();
                const double mean = p.dot(block);
                out.segment(base, n_actions_) = w * (p.array() * (block.array() - mean)).matrix();
            }
            return out;
        }
        const double inv_n = 1.0 / static_cast<double>(features_.size());
        for (const Vec &x : features_) {
            for (int d = 0; d < action_dim_; ++d) {
                const Eigen::Index base = static_cast<Eigen::Index>(d) * feature_dim_;
                const double coeff = x.dot(v.segment(base, feature_dim_)) / (stds_[d] * stds_[d]);
                out.segment(base, feature_dim_) += (inv_n * coeff) * x;
            }
        }
        const Eigen::Index ls_base = static_cast<Eigen::Index>(action_dim_) * feature_dim_;
        for (int d = 0; d < action_dim_; ++d) out[ls_base + d] = 2.0 * v[ls_base + d];
        return out;
    }

private:
    PolicyFamily family_ = PolicyFamily::TabularSoftmax;
    Eigen::Index dim_ = 0;
    // tabular
    int n_actions_ = 0;
    Vec weights_;
    Mat probs_;
    // gaussian
    int feature_dim_ = 0;
    int action_dim_ = 0;
    Vec stds_;
    std::vector<Vec> features_;
};

struct CgResult {
    Vec x;
    int iterations = 0;
    double residual_norm = 0.0;
    bool converged = false;
};

/**
 * Conjugate gradients for SPD operators. Stops when the residual norm
 * drops below max(tol, tol * ||b||) or the iteration cap is reached
 * (the cap is reported, never an error).
 */
inline CgResult conjugate_gradient(const std::function<Vec(const Vec &)> &apply_a, const Vec &b,
                                   int max_iters, double tol) {
    CgResult out;
    out.x = Vec::Zero(b.size());
    Vec r = b;
    out.residual_norm = r.norm();
    const double target = std::max(tol, tol * b.norm());
    if (out.residual_norm <= target) {
        out.converged = true;
        return out;
    }
    Vec p = r;
    double rs = r.squaredNorm();
    for (int it = 0; it < max_iters; ++it) {
        const Vec ap = apply_a(p);
        const double p_ap = p.dot(ap);
        if (!(p_ap > 0.0) || !std::isfinite(p_ap))
            throw std::runtime_error("conjugate_gradient: operator is not positive definite");
        const double alpha = rs / p_ap;
        out.x += alpha * p;
        r -= alpha * ap;
        ++out.iterations;
        const double rs_next = r.squaredNorm();
        out.residual_norm = std::sqrt(rs_next);
        if (out.residual_norm <= target) {
            out.converged = true;
            return out;
        }
        p = r + (rs_next / rs) * p;
        rs = rs_next;
    }
    return out;
}

struct StepResult {
    Vec direction;          // damped-FIM solve of the gradient
    Vec step;               // scaled to the trust region radius
    double predicted_kl = 0.0; // quadratic model 0.5 * step^T H_hat step
    double cg_residual = 0.0;
    int cg_iterations = 0;
    bool stationary = false;    // zero gradient: zero step
    bool fallback_used = false; // non-positive curvature: plain gradient direction
};

/**
 * Trust-region step: solve (H + damping I) x = grad with CG, then
 * scale to step = sqrt(2 delta / (grad^T x)) * x, whose quadratic KL
 * model equals delta by construction (CG iterates satisfy
 * x^T H_hat x = x^T grad).
 */
inline StepResult compute_step(const Vec &grad, const FimOperator &fim, const TrustRegionConfig &cfg) {
    cfg.validate();
    if (grad.size() != fim.dim()) throw std::invalid_argument("compute_step: gradient length mismatch");
    const auto apply = [&](const Vec &v) -> Vec { return fim.apply(v) + cfg.damping * v; };

    StepResult out;
    if (grad.cwiseAbs().maxCoeff() < 1e-12) {
        out.direction = Vec::Zero(grad.size());
        out.step = Vec::Zero(grad.size());
        out.stationary = true;
        return out;
    }

    const CgResult cg = conjugate_gradient(apply, grad, cfg.cg_max_iters, cfg.cg_tolerance);
    out.direction = cg.x;
    out.cg_residual = cg.residual_norm;
    out.cg_iterations = cg.iterations;

    double denom = grad.dot(cg.x);
    Vec dir = cg.x;
    if (!(denom > 0.0) || !std::isfinite(denom)) {
        // Damped FIM is SPD, so this only fires on numerical breakdown;
        // fall back to the gradient direction.
        out.fallback_used = true;
        dir = grad;
        denom = grad.dot(apply(grad));
        if (!(denom > 0.0)) {
            out.step = Vec::Zero(grad.size());
            out.stationary = true;
            return out;
        }
    }
    out.step = std::sqrt(2.0 * cfg.delta / denom) * dir;
    out.predicted_kl = 0.5 * out.step.dot(apply(out.step));
    return out;
}

struct LineSearchResult {
    PolicyParams params;
    int backtracks = 0;
    bool accepted = false;
    double kl = 0.0;        // exact sampled KL at the returned parameters
    double objective = 0.0; // objective value at the returned parameters
};

/**
 * Backtracking line search: accept the first candidate
 * theta + coeff^j * step whose exact sampled KL is within delta and
 * whose objective does not fall below the current one. When every
 * candidate fails, the current parameters are returned with
 * accepted = false.
 */
inline LineSearchResult line_search(const PolicyParams &current, const Vec &step,
                                    const std::function<double(const PolicyParams &)> &objective,
                                    const std::function<double(const PolicyParams &)> &exact_kl,
                                    const TrustRegionConfig &cfg) {
    cfg.validate();
    if (step.size() != current.dim()) throw std::invalid_argument("line_search: step length mismatch");
    const double base_value = objective(current);
    double scale = 1.0;
    for (int j = 0; j <= cfg.max_backtracks; ++j, scale *= cfg.backtrack_coeff) {
        const PolicyParams candidate = with_theta(current, current.theta + scale * step);
        const double kl = exact_kl(candidate);
        if (!(kl <= cfg.delta)) continue;
        const double value = objective(candidate);
        if (!std::isfinite(value) || value < base_value) continue;
        LineSearchResult out;
        out.params = candidate;
        out.backtracks = j;
        out.accepted = true;
        out.kl = kl;
        out.objective = value;
        return out;
    }
    LineSearchResult out;
    out.params = current;
    out.backtracks = cfg.max_backtracks + 1;
    out.accepted = false;
    out.kl = 0.0;
    out.objective = base_value;
    return out;
}

} // namespace pcpo
