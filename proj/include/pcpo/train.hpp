#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcpo/config.hpp"
#include "pcpo/theory.hpp"

namespace pcpo {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

/// One training iteration's metrics. Wall time stays out of the CSV
/// so reruns with the same seed produce byte-identical files.
struct UpdateReport {
    int iteration = 0;
    double j_hat = 0.0;
    Vec jc_hat;
    double j_exact = kNan;
    Vec jc_exact;
    double f_old = 0.0;
    double f_new = 0.0;
    Vec g;    // constraint surrogates at the current policy
    Vec phi;  // penalty values (barrier phi or lambda * g)
    Vec dual; // phi'(g) for barrier methods, lambda for the baseline
    Vec intr; // per-channel intrinsic totals
    double intr_total = 0.0;
    double eta = 0.0;
    double g_obj_old = 0.0;
    double g_obj_new = 0.0;
    double grad_norm = 0.0;
    double step_norm = 0.0;
    double predicted_kl = 0.0;
    double actual_kl = 0.0;
    int cg_iterations = 0;
    double cg_residual = 0.0;
    int backtracks = 0;
    bool accepted = false;
    bool fallback = false;
    bool stationary = false;
    double value_loss = 0.0;
    Vec value_loss_costs;
    long clip_count = 0;
    double wall_ms = 0.0;
};

/// Per-iteration exact-oracle bound check (tabular, extended-log methods).
struct TheoryRow {
    int iteration = 0;
    double eps_new = 0.0;
    Vec eps_cost_old;
    Vec eps_cost_new;
    int case_index = 0;
    bool applicable = false;
    double bound_theorem = -kInf;
    double bound_proof = -kInf;
    double g_diff_exact = 0.0;
    bool holds_theorem = false;
    bool holds_proof = false;
};

struct Prop1Row {
    int iteration = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

struct TrainResult {
    Method method = Method::Pcpo;
    std::uint64_t seed = 0;
    Vec thresholds;
    std::vector<UpdateReport> reports;
    std::vector<TheoryRow> theory;
    std::vector<Prop1Row> prop1;
    PolicyParams final_params;
    Vec final_lambdas;
    double initial_j_exact = kNan;
    Vec initial_jc_exact;
    double total_wall_ms = 0.0;
};

namespace detail {

/// Component values of the penalized objective at one candidate on a fixed batch.
struct CandidateEval {
    double f = 0.0;
    Vec g;
    double phi_sum = 0.0;
    double intr_total = 0.0;
    double objective = 0.0;
};

struct IterationContext {
    const ExperimentConfig &cfg;
    const Environment &env;
    const Vec &thresholds;
    const RolloutBatch &batch;
    const AdvantageEstimates &est;
    const Vec &jc_hat;
    bool use_barrier = true; // false: lambda-weighted baseline
    BarrierConfig barrier;
    Vec lambdas;
    double eta = 0.0;
    IntrinsicConfig intrinsic;
    double discount = 0.0;
};

inline CandidateEval evaluate_candidate(const IterationContext &ctx, const PolicyParams &candidate,
                                        bool with_intrinsic) {
    CandidateEval out;
    out.f = surrogate_objective(ctx.batch, ctx.est.adv_reward_normalized, candidate).value;
    const int m = static_cast<int>(ctx.thresholds.size());
    out.g = Vec::Constant(m, -kInf);
    for (int i = 0; i < m; ++i) {
        if (std::isinf(ctx.thresholds[i])) continue; // unconstrained channel
        out.g[i] = constraint_surrogate(ctx.batch, ctx.est.adv_costs[static_cast<size_t>(i)],
                                        ctx.jc_hat[i], ctx.thresholds[i], ctx.discount, candidate)
                       .value;
        if (ctx.use_barrier) out.phi_sum += phi(out.g[i], ctx.barrier);
        else if (ctx.lambdas[i] != 0.0) out.phi_sum += ctx.lambdas[i] * out.g[i];
    }
    if (with_intrinsic && ctx.eta != 0.0) {
        const IntrinsicBatch ib =
            intrinsic_scores(ctx.est.adv_costs, out.g, ctx.thresholds, ctx.intrinsic, ctx.discount);
        out.intr_total = ib.total;
    }
    out.objective = out.f - out.phi_sum;
    if (with_intrinsic && ctx.eta != 0.0 && out.intr_total != 0.0)
        out.objective += ctx.eta * out.intr_total;
    return out;
}

struct ArmOutcome {
    StepResult step;
    LineSearchResult search;
    CandidateEval accepted;
    double grad_norm = 0.0;
};

/**
 * One penalized trust-region update from the current policy on the
 * given batch: assemble the gradient, solve the KL-damped system,
 * line search. `penalty_weights` are phi'(g) for barrier methods and
 * lambda for the baseline; zero-weight channels are skipped outright
 * so inert channels leave no floating-point trace.
 */
inline ArmOutcome run_update_arm(const IterationContext &ctx, const PolicyParams &params,
                                 const PolicyGradients &grads, const Vec &penalty_weights,
                                 const IntrinsicBatch &intr, bool with_intrinsic,
                                 const std::function<double(const PolicyParams &)> &exact_kl) {
    Vec grad = grads.grad_f;
    for (Eigen::Index i = 0; i < penalty_weights.size(); ++i) {
        if (penalty_weights[i] == 0.0 || std::isinf(ctx.thresholds[i])) continue;
        grad -= penalty_weights[i] * grads.grad_g[static_cast<size_t>(i)];
    }
    if (with_intrinsic && ctx.eta != 0.0) {
        const Vec ig = intrinsic_gradient(ctx.batch, intr, params);
        if (ig.cwiseAbs().maxCoeff() != 0.0) grad += ctx.eta * ig;
    }

    ArmOutcome out;
    out.grad_norm = grad.norm();
    const FimOperator fim = FimOperator::from_batch(params, ctx.batch);
    out.step = compute_step(grad, fim, ctx.cfg.trust_region);
    const auto objective = [&](const PolicyParams &candidate) {
        return evaluate_candidate(ctx, candidate, with_intrinsic).objective;
    };
    out.search = line_search(params, out.step.step, objective, exact_kl, ctx.cfg.trust_region);
    out.accepted = evaluate_candidate(ctx, out.search.params, with_intrinsic);
    return out;
}

} // namespace detail

/**
 * Trains one seed of the configured method. The trajectory is fully
 * determined by (config, thresholds, seed): batches draw from
 * substreams keyed by iteration, value fits shuffle deterministically,
 * and the solver path is shared by every method. `on_iteration` (when
 * set) observes each accepted policy, e.g. for checkpointing.
 */
inline TrainResult
train_single_seed(const ExperimentConfig &cfg, const Environment &env, const Vec &thresholds,
                  std::uint64_t seed,
                  const std::function<void(int, const PolicyParams &)> &on_iteration = nullptr) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const int m = env.num_cost_channels();
    if (thresholds.size() != m)
        throw std::invalid_argument("train: one threshold per cost channel required");

    EstimatorConfig est_cfg = cfg.estimator;
    est_cfg.discount = cfg.discount;
    const BarrierConfig barrier = cfg.barrier_config();
    const IntrinsicConfig intrinsic = cfg.intrinsic_config();
    const bool use_barrier = cfg.method != Method::Lagrangian;
    const bool extended_log = use_barrier && barrier.kind == BarrierKind::ExtendedLog;
    const bool paired_prop1 = cfg.prop1_diagnostic && use_barrier && intrinsic.active();

    const TabularEnv *tabular = dynamic_cast<const TabularEnv *>(&env);
    const bool track_theory = cfg.theory_checks && tabular != nullptr;

    TrainResult result;
    result.method = cfg.method;
    result.seed = seed;
    result.thresholds = thresholds;

    PolicyParams params = make_policy_for(env, cfg.env_params.initial_log_std);
    ValueFunction v_reward = make_value_function(env);
    std::vector<ValueFunction> v_costs(static_cast<size_t>(m), make_value_function(env));
    LagrangianState lagr = make_lagrangian_state(m, cfg.lagrangian);
    IntrinsicMaxima maxima;
    RngStream root(seed);

    if (tabular) {
        const ExactEval ev = exact_policy_eval(tabular->model(), policy_table(params));
        result.initial_j_exact = ev.j;
        result.initial_jc_exact = ev.j_c;
    } else {
        result.initial_jc_exact = Vec::Constant(m, kNan);
    }

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const auto t_iter = std::chrono::steady_clock::now();
        const RolloutBatch batch =
            collect(env, params, cfg.episodes_per_batch, cfg.resolved_horizon(),
                    root.substream(static_cast<std::uint64_t>(iter)));
        Vec jc_hat(m);
        for (int i = 0; i < m; ++i) jc_hat[i] = average_cost_return(batch, cfg.discount, i);
        const AdvantageEstimates est = gae(batch, v_reward, v_costs, est_cfg);

        UpdateReport rep;
        rep.iteration = iter;
        rep.j_hat = average_reward_return(batch, cfg.discount);
        rep.jc_hat = jc_hat;
        rep.f_old = est.adv_reward_normalized.mean();
        rep.g.resize(m);
        rep.phi = Vec::Zero(m);
        rep.dual = Vec::Zero(m);
        for (int i = 0; i < m; ++i) rep.g[i] = jc_hat[i] - thresholds[i];

        detail::IterationContext ctx{cfg,     env,  thresholds, batch,     est,
                                     jc_hat,  use_barrier, barrier, lagr.lambdas,
                                     0.0,     intrinsic,   cfg.discount};

        double phi_sum_old = 0.0;
        Vec weights = Vec::Zero(m);
        for (int i = 0; i < m; ++i) {
            if (std::isinf(thresholds[i])) continue;
            if (use_barrier) {
                rep.phi[i] = phi(rep.g[i], barrier);
                rep.dual[i] = phi_derivative(rep.g[i], barrier);
                weights[i] = rep.dual[i];
            } else {
                rep.dual[i] = lagr.lambdas[i];
                weights[i] = lagr.lambdas[i];
                if (lagr.lambdas[i] != 0.0) rep.phi[i] = lagr.lambdas[i] * rep.g[i];
            }
            phi_sum_old += rep.phi[i];
        }

        IntrinsicBatch intr = intrinsic_scores(est.adv_costs, rep.g, thresholds, intrinsic, cfg.discount);
        rep.intr = intr.channel_totals;
        rep.intr_total = intr.total;
        if (use_barrier && intrinsic.active())
            ctx.eta = eta_weight(maxima, std::abs(rep.f_old - phi_sum_old), intr.total, intrinsic);
        rep.eta = ctx.eta;
        rep.g_obj_old = rep.f_old - phi_sum_old;
        if (ctx.eta != 0.0 && intr.total != 0.0) rep.g_obj_old += ctx.eta * intr.total;

        const PolicyGradients grads = gradients(batch, est, params, cfg.discount);

        std::function<double(const PolicyParams &)> exact_kl;
        if (tabular) {
            const Vec visitation = state_visitation(batch, tabular->model().n_states);
            exact_kl = [visitation, params](const PolicyParams &candidate) {
                return kl_divergence(candidate, params, visitation);
            };
        } else {
            auto states = std::make_shared<std::vector<Obs>>();
            states->reserve(static_cast<size_t>(batch.total_steps()));
            for (const Episode &ep : batch.episodes)
                for (const StepRecord &rec : ep.steps) states->push_back(rec.state);
            const Vec w = Vec::Ones(static_cast<Eigen::Index>(states->size()));
            exact_kl = [states, w, params](const PolicyParams &candidate) {
                return kl_divergence(candidate, params, *states, w);
            };
        }

        const detail::ArmOutcome main_arm =
            detail::run_update_arm(ctx, params, grads, weights, intr, true, exact_kl);

        rep.grad_norm = main_arm.grad_norm;
        rep.step_norm = main_arm.step.step.norm();
        rep.predicted_kl = main_arm.step.predicted_kl;
        rep.cg_iterations = main_arm.step.cg_iterations;
        rep.cg_residual = main_arm.step.cg_residual;
        rep.fallback = main_arm.step.fallback_used;
        rep.stationary = main_arm.step.stationary;
        rep.backtracks = main_arm.search.backtracks;
        rep.accepted = main_arm.search.accepted;
        rep.actual_kl = main_arm.search.kl;
        rep.f_new = main_arm.accepted.f;
        rep.g_obj_new = main_arm.accepted.objective;
        {
            SurrogateValue sv = surrogate_objective(batch, est.adv_reward_normalized, main_arm.search.params);
            rep.clip_count = sv.clipped;
        }

        if (paired_prop1) {
            // Side update without the bonus, from the same policy and batch.
            const detail::ArmOutcome side_arm =
                detail::run_update_arm(ctx, params, grads, weights, intr, false, exact_kl);
            Prop1Row row;
            row.iteration = iter;
            const double g_old_obj = rep.g_obj_old;
            const double gbar_old = rep.f_old - phi_sum_old;
            const Prop1Result pr = proposition1_diagnostic(
                main_arm.accepted.objective, g_old_obj, side_arm.accepted.objective, gbar_old,
                ctx.eta, main_arm.accepted.intr_total, intr.total);
            row.lhs = pr.lhs;
            row.rhs = pr.rhs;
            row.holds = pr.holds;
            result.prop1.push_back(row);
        }

        const PolicyParams prev_params = params;
        params = main_arm.search.params;

        if (tabular) {
            const ExactEval new_eval = exact_policy_eval(tabular->model(), policy_table(params));
            rep.j_exact = new_eval.j;
            rep.jc_exact = new_eval.j_c;
            if (track_theory && extended_log) {
                const TabularCmdp &model = tabular->model();
                const ExactEval old_eval = exact_policy_eval(model, policy_table(prev_params));
                const Mat new_table = policy_table(params);
                TheoryRow trow;
                trow.iteration = iter;
                const EpsilonTerms eps = epsilon_terms(model, policy_table(prev_params), new_table);
                trow.eps_new = eps.eps_new;
                trow.eps_cost_old = eps.eps_cost_old;
                trow.eps_cost_new = eps.eps_cost_new;

                // Exact-surrogate objective difference at this iteration.
                Vec g_old_exact = Vec::Constant(m, -kInf);
                Vec g_new_exact = Vec::Constant(m, -kInf);
                double phi_old_sum = 0.0, phi_new_sum = 0.0;
                const double f_new_exact =
                    surrogate_exact(old_eval.occupancy, old_eval.adv, params);
                for (int i = 0; i < m; ++i) {
                    if (std::isinf(thresholds[i])) continue;
                    g_old_exact[i] = old_eval.j_c[i] - thresholds[i];
                    g_new_exact[i] =
                        old_eval.j_c[i] +
                        surrogate_exact(old_eval.occupancy, old_eval.adv_c[static_cast<size_t>(i)], params) /
                            (1.0 - cfg.discount) -
                        thresholds[i];
                    phi_old_sum += phi(g_old_exact[i], barrier);
                    phi_new_sum += phi(g_new_exact[i], barrier);
                }
                double g_exact_old_obj = -phi_old_sum;
                double g_exact_new_obj = f_new_exact - phi_new_sum;
                if (ctx.eta != 0.0) {
                    if (intr.total != 0.0) g_exact_old_obj += ctx.eta * intr.total;
                    if (main_arm.accepted.intr_total != 0.0)
                        g_exact_new_obj += ctx.eta * main_arm.accepted.intr_total;
                }
                trow.g_diff_exact = g_exact_new_obj - g_exact_old_obj;

                const UpdateBound bound =
                    update_bound(eps, g_old_exact, thresholds, barrier.tau, cfg.trust_region.delta,
                                 cfg.discount, ctx.eta, Vec::Ones(m));
                trow.case_index = bound.case_index;
                trow.applicable = bound.applicable;
                trow.bound_theorem = bound.bound_theorem;
                trow.bound_proof = bound.bound_proof;
                trow.holds_theorem = !bound.applicable || trow.g_diff_exact >= bound.bound_theorem - 1e-9;
                trow.holds_proof = !bound.applicable || trow.g_diff_exact >= bound.bound_proof - 1e-9;
                result.theory.push_back(trow);
            }
        } else {
            rep.jc_exact = Vec::Constant(m, kNan);
        }

        const FitResult fit_r = fit_value_function(batch, est.targets_reward, v_reward, est_cfg,
                                                   static_cast<std::uint64_t>(iter) * 64);
        v_reward = fit_r.value;
        rep.value_loss = fit_r.epoch_losses.back();
        rep.value_loss_costs.resize(m);
        for (int i = 0; i < m; ++i) {
            const FitResult fit_c =
                fit_value_function(batch, est.targets_costs[static_cast<size_t>(i)], v_costs[static_cast<size_t>(i)],
                                   est_cfg, static_cast<std::uint64_t>(iter) * 64 + 1 + i);
            v_costs[static_cast<size_t>(i)] = fit_c.value;
            rep.value_loss_costs[i] = fit_c.epoch_losses.back();
        }

        if (!use_barrier) lagr.lambdas = dual_ascent(lagr.lambdas, jc_hat, thresholds, cfg.lagrangian);

        rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_iter).count();
        result.reports.push_back(std::move(rep));
        if (on_iteration) on_iteration(iter, params);
    }

    result.final_params = params;
    result.final_lambdas = lagr.lambdas;
    result.total_wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

} // namespace pcpo
