#pragma once

#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pcpo/harness.hpp"

namespace pcpo {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline Vec fd_gradient(const std::function<double(const Vec &)> &f, const Vec &x, double h = 1e-6) {
    Vec g(x.size());
    Vec p = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        p[i] = x[i] + h;
        const double up = f(p);
        p[i] = x[i] - h;
        const double down = f(p);
        p[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline bool close_gradients(const Vec &analytic, const Vec &numeric, double &worst) {
    worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double tol = 1e-4 + 1e-3 * std::abs(numeric[i]);
        const double err = std::abs(analytic[i] - numeric[i]);
        worst = std::max(worst, err / tol);
    }
    return worst <= 1.0;
}

inline void add_check(std::vector<CheckResult> &out, const std::string &name, bool pass,
                      const std::string &detail) {
    out.push_back(CheckResult{name, pass, detail});
}

inline TabularCmdp random_small_cmdp(std::uint64_t seed, int states, int actions, double discount) {
    RngStream rng(seed);
    TabularCmdp m;
    m.n_states = states;
    m.n_actions = actions;
    m.discount = discount;
    m.transition = Mat(states * actions, states);
    for (int row = 0; row < states * actions; ++row) {
        Vec raw(states);
        for (int s = 0; s < states; ++s) raw[s] = 0.05 + rng.uniform();
        m.transition.row(row) = (raw / raw.sum()).transpose();
    }
    m.reward = Mat(states, actions);
    for (int s = 0; s < states; ++s)
        for (int a = 0; a < actions; ++a) m.reward(s, a) = rng.uniform() * 2.0 - 1.0;
    Mat cost(states, actions);
    for (int s = 0; s < states; ++s)
        for (int a = 0; a < actions; ++a) cost(s, a) = rng.uniform();
    m.costs = {cost};
    m.thresholds = Vec::Constant(1, kInf);
    m.initial_dist = Vec::Constant(states, 1.0 / states);
    m.validate();
    return m;
}

} // namespace detail

inline void run_gradient_checks(std::vector<CheckResult> &out) {
    using detail::add_check;
    RngStream rng(12345);

    // Score function against finite differences of the log density.
    bool score_ok = true;
    double worst = 0.0;
    for (int rep = 0; rep < 10 && score_ok; ++rep) {
        PolicyParams p = make_tabular_policy(3, 4);
        for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] = rng.normal() * 0.7;
        Obs s;
        s.index = static_cast<int>(rng.uniform() * 3);
        Act a;
        a.index = static_cast<int>(rng.uniform() * 4);
        const Vec analytic = score(p, s, a);
        const Vec numeric = detail::fd_gradient(
            [&](const Vec &theta) { return log_prob(with_theta(p, theta), s, a); }, p.theta);
        double w = 0.0;
        score_ok = detail::close_gradients(analytic, numeric, w);
        worst = std::max(worst, w);
    }
    add_check(out, "score_fd_tabular", score_ok, "worst scaled error " + detail::fmt_short(worst));

    score_ok = true;
    worst = 0.0;
    for (int rep = 0; rep < 10 && score_ok; ++rep) {
        PolicyParams p = make_gaussian_policy(3, 2, -0.2);
        for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] = rng.normal() * 0.5;
        Obs s;
        s.features = Vec(3);
        for (int i = 0; i < 3; ++i) s.features[i] = rng.normal();
        Act a;
        a.value = Vec(2);
        for (int i = 0; i < 2; ++i) a.value[i] = rng.normal();
        const Vec analytic = score(p, s, a);
        const Vec numeric = detail::fd_gradient(
            [&](const Vec &theta) { return log_prob(with_theta(p, theta), s, a); }, p.theta);
        double w = 0.0;
        score_ok = detail::close_gradients(analytic, numeric, w);
        worst = std::max(worst, w);
    }
    add_check(out, "score_fd_gaussian", score_ok, "worst scaled error " + detail::fmt_short(worst));

    // Penalty kernels against finite differences.
    bool kernel_ok = true;
    worst = 0.0;
    for (BarrierKind kind : {BarrierKind::ExtendedLog, BarrierKind::Quadratic, BarrierKind::Exponential}) {
        BarrierConfig cfg;
        cfg.kind = kind;
        cfg.tau = kind == BarrierKind::Exponential ? 0.01 : 5.0;
        for (int rep = 0; rep < 200; ++rep) {
            const double g = -4.0 + 4.4 * rng.uniform();
            const double h = 1e-6;
            const double numeric = (phi(g + h, cfg) - phi(g - h, cfg)) / (2.0 * h);
            const double analytic = phi_derivative(g, cfg);
            const double err = std::abs(analytic - numeric) / (1e-4 + 1e-3 * std::abs(numeric));
            worst = std::max(worst, err);
            if (err > 1.0) kernel_ok = false;
        }
    }
    add_check(out, "penalty_derivative_fd", kernel_ok, "worst scaled error " + detail::fmt_short(worst));

    // Assembled objective and constraint gradients on a sampled batch.
    const TabularCmdp model = detail::random_small_cmdp(777, 4, 3, 0.9);
    const TabularEnv env(model);
    PolicyParams p = make_tabular_policy(4, 3);
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] = rng.normal() * 0.3;
    const RolloutBatch batch = collect(env, p, 12, 60, RngStream(99));
    EstimatorConfig est_cfg;
    est_cfg.discount = model.discount;
    ValueFunction v = make_value_function(env);
    std::vector<ValueFunction> vc(1, make_value_function(env));
    const AdvantageEstimates est = gae(batch, v, vc, est_cfg);
    const PolicyGradients grads = gradients(batch, est, p, model.discount);
    const Vec fd_f = detail::fd_gradient(
        [&](const Vec &theta) {
            return surrogate_objective(batch, est.adv_reward_normalized, with_theta(p, theta)).value;
        },
        p.theta, 1e-5);
    double worst_f = 0.0;
    const bool f_ok = detail::close_gradients(grads.grad_f, fd_f, worst_f);
    add_check(out, "objective_gradient_fd", f_ok, "worst scaled error " + detail::fmt_short(worst_f));
    const double jc = average_cost_return(batch, model.discount, 0);
    const Vec fd_g = detail::fd_gradient(
        [&](const Vec &theta) {
            return constraint_surrogate(batch, est.adv_costs[0], jc, 0.0, model.discount,
                                        with_theta(p, theta))
                .value;
        },
        p.theta, 1e-5);
    double worst_g = 0.0;
    const bool g_ok = detail::close_gradients(grads.grad_g[0], fd_g, worst_g);
    add_check(out, "constraint_gradient_fd", g_ok, "worst scaled error " + detail::fmt_short(worst_g));
}

inline void run_barrier_checks(std::vector<CheckResult> &out) {
    using detail::add_check;
    BarrierConfig two;
    two.tau = 2.0;
    const double v1 = phi(0.0, two);
    add_check(out, "barrier_value_at_zero", std::abs(v1 - (std::log(2.0) + 0.5)) < 1e-12,
              "phi(tau=2, g=0) = " + detail::fmt_short(v1));
    BarrierConfig one;
    one.tau = 1.0;
    const double v2 = phi(-std::exp(1.0), one);
    add_check(out, "barrier_value_log_branch", std::abs(v2 + 1.0) < 1e-12,
              "phi(tau=1, g=-e) = " + detail::fmt_short(v2));

    bool junction_ok = true;
    for (double tau : {0.5, 1.0, 2.0, 5.0, 20.0}) {
        BarrierConfig cfg;
        cfg.tau = tau;
        const double gj = -1.0 / (tau * tau);
        const double h = 1e-8;
        if (std::abs(phi(gj, cfg) - phi(gj + h, cfg)) > 1e-6) junction_ok = false;
        if (std::abs(phi_derivative(gj, cfg) - tau) > 1e-9) junction_ok = false;
        if (std::abs(phi_derivative(gj + h, cfg) - tau) > 1e-6) junction_ok = false;
    }
    add_check(out, "barrier_junction_c1", junction_ok, "value and slope continuous at -1/tau^2");

    bool dual_ok = true, cap_ok = true;
    RngStream rng(4242);
    for (double tau : {1.0, 5.0, 20.0}) {
        BarrierConfig cfg;
        cfg.tau = tau;
        for (int rep = 0; rep < 1000; ++rep) {
            const double g = -std::exp(6.0 * rng.uniform() - 3.0);
            Vec gv(1);
            gv[0] = g;
            const Vec lam = implicit_duals(gv, cfg);
            if (std::abs(lam[0] - phi_derivative(g, cfg)) > 1e-12) dual_ok = false;
            if (!gap_term_bound_check(g, cfg).ok) cap_ok = false;
        }
    }
    add_check(out, "implicit_dual_matches_slope", dual_ok, "lambda*(g) == phi'(g)");
    add_check(out, "dual_complementarity_cap", cap_ok, "-lambda* g <= 1/tau throughout");

    bool convex_ok = true;
    for (int rep = 0; rep < 500; ++rep) {
        BarrierConfig cfg;
        cfg.tau = 1.0 + 19.0 * rng.uniform();
        const double a = -5.0 + 5.4 * rng.uniform();
        const double b = -5.0 + 5.4 * rng.uniform();
        const double t = rng.uniform();
        const double mix = phi(t * a + (1.0 - t) * b, cfg);
        if (mix > t * phi(a, cfg) + (1.0 - t) * phi(b, cfg) + 1e-9) convex_ok = false;
    }
    add_check(out, "barrier_convexity", convex_ok, "random chords dominate the kernel");
}

inline void run_solver_checks(std::vector<CheckResult> &out) {
    using detail::add_check;
    RngStream rng(31337);

    Mat a(30, 30);
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 30; ++j) a(i, j) = rng.normal();
    const Mat spd = a * a.transpose() + 30.0 * Mat::Identity(30, 30);
    Vec b(30);
    for (int i = 0; i < 30; ++i) b[i] = rng.normal();
    const CgResult cg = conjugate_gradient([&](const Vec &v) { return spd * v; }, b, 200, 1e-14);
    const Vec dense = Eigen::PartialPivLU<Mat>(spd).solve(b);
    const double err = (cg.x - dense).norm();
    add_check(out, "cg_matches_dense_solve", err <= 1e-8, "residual vs LU " + detail::fmt_short(err));

    const TabularCmdp model = detail::random_small_cmdp(555, 5, 3, 0.95);
    const TabularEnv env(model);
    PolicyParams p = make_tabular_policy(5, 3);
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] = rng.normal() * 0.4;
    const RolloutBatch batch = collect(env, p, 16, 80, RngStream(1000));
    EstimatorConfig est_cfg;
    est_cfg.discount = model.discount;
    ValueFunction v = make_value_function(env);
    std::vector<ValueFunction> vc(1, make_value_function(env));
    const AdvantageEstimates est = gae(batch, v, vc, est_cfg);
    const PolicyGradients grads = gradients(batch, est, p, model.discount);
    TrustRegionConfig tr;
    const FimOperator fim = FimOperator::from_batch(p, batch);
    const StepResult step = compute_step(grads.grad_f, fim, tr);
    add_check(out, "predicted_kl_at_radius", std::abs(step.predicted_kl - tr.delta) <= 1e-6,
              "predicted " + detail::fmt_short(step.predicted_kl) + " target " +
                  detail::fmt_short(tr.delta));

    const Vec visitation = state_visitation(batch, model.n_states);
    const auto exact_kl = [&](const PolicyParams &candidate) {
        return kl_divergence(candidate, p, visitation);
    };
    const auto objective = [&](const PolicyParams &candidate) {
        return surrogate_objective(batch, est.adv_reward_normalized, candidate).value;
    };
    const LineSearchResult ls = line_search(p, step.step, objective, exact_kl, tr);
    const bool search_ok = !ls.accepted || (ls.kl <= tr.delta + 1e-12 &&
                                            objective(ls.params) >= objective(p) - 1e-12);
    add_check(out, "line_search_contract", search_ok,
              ls.accepted ? "accepted with kl " + detail::fmt_short(ls.kl)
                          : "rejected after " + std::to_string(ls.backtracks) + " backtracks");

    const LineSearchResult reject = line_search(
        p, step.step, [&](const PolicyParams &) { return -kInf; }, exact_kl, tr);
    add_check(out, "line_search_rejects_bad_steps",
              !reject.accepted && (reject.params.theta - p.theta).norm() == 0.0,
              "objective collapse leaves the policy unchanged");
}

inline void run_theory_checks(std::vector<CheckResult> &out) {
    using detail::add_check;

    // Duality gap on a tiny random model, solved to grid accuracy.
    {
        TabularCmdp model = detail::random_small_cmdp(2025, 2, 2, 0.9);
        model.costs[0] << 0.05, 0.9, 0.1, 0.8; // action 0 is cheap, so an interior policy exists
        Mat cheap(2, 2), uniform(2, 2);
        cheap << 1, 0, 1, 0;
        uniform << 0.5, 0.5, 0.5, 0.5;
        model.thresholds[0] = 0.5 * (exact_policy_eval(model, cheap).j_c[0] +
                                     exact_policy_eval(model, uniform).j_c[0]);
        bool ok = true;
        std::ostringstream note;
        for (double tau : {5.0, 20.0}) {
            BarrierConfig cfg;
            cfg.tau = tau;
            IntrinsicConfig off;
            off.enabled = false;
            const DualityGapMeasurement gap = measured_duality_gap(model, cfg, 0.02, 0.0, off);
            note << " tau=" << tau << " gap=" << detail::fmt_short(gap.measured_gap)
                 << " bound=" << detail::fmt_short(gap.bound);
            if (!gap.ok) ok = false;
        }
        add_check(out, "duality_gap_within_bound", ok, note.str());
    }

    // Short training trace on the chain: the per-update bound rows.
    {
        ExperimentConfig cfg;
        cfg.environment = "chain";
        cfg.method = Method::Pcpo;
        cfg.iterations = 20;
        cfg.episodes_per_batch = 8;
        cfg.horizon = 300;
        cfg.seeds = {0};
        cfg.thresholds = {45.0};
        cfg.reference_grid = 0.0;
        cfg.output_dir = "";
        const Vec d = resolve_thresholds(cfg);
        const auto env = make_environment(cfg, &d);
        const TrainResult run = train_single_seed(cfg, *env, d, 7);
        long applicable = 0, held = 0, held_proof = 0;
        for (const TheoryRow &t : run.theory) {
            if (!t.applicable) continue;
            ++applicable;
            held += t.holds_theorem ? 1 : 0;
            held_proof += t.holds_proof ? 1 : 0;
        }
        std::ostringstream note;
        note << "applicable " << applicable << "/" << run.theory.size() << ", held theorem " << held
             << "/" << applicable << ", held proof " << held_proof << "/" << applicable;
        const bool ok = run.theory.size() == 20 && applicable == 20 && held == applicable;
        add_check(out, "update_bound_trace", ok, note.str());

        bool gleq = true;
        for (const UpdateReport &r : run.reports)
            if (r.accepted && r.actual_kl > cfg.trust_region.delta + 1e-9) gleq = false;
        add_check(out, "trust_region_respected", gleq, "accepted updates stay inside the KL ball");
    }

    // Cumulative violation bookkeeping on a hand trace.
    {
        Mat trace(3, 1);
        trace << 1.5, 0.5, 2.0;
        const ViolationSummary v = cumulative_violation(trace, Vec::Constant(1, 1.0));
        add_check(out, "cumulative_violation_hand_value", std::abs(v.total - 1.5) < 1e-12,
                  "total " + detail::fmt_short(v.total));
    }
}

inline std::vector<CheckResult> run_checks(const std::string &suite) {
    std::vector<CheckResult> out;
    const bool all = suite == "all";
    if (all || suite == "gradients") run_gradient_checks(out);
    if (all || suite == "barrier") run_barrier_checks(out);
    if (all || suite == "solver") run_solver_checks(out);
    if (all || suite == "theory") run_theory_checks(out);
    if (out.empty())
        throw std::invalid_argument(
            "unknown check suite '" + suite + "' (expected gradients|barrier|solver|theory|all)");
    return out;
}

inline int report_checks(const std::vector<CheckResult> &checks, std::ostream &os) {
    int failures = 0;
    for (const CheckResult &c : checks) {
        os << (c.pass ? "PASS" : "FAIL") << " " << c.name;
        if (!c.detail.empty()) os << " (" << c.detail << ")";
        os << "\n";
        failures += c.pass ? 0 : 1;
    }
    os << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed")
       << "\n";
    return failures;
}

} // namespace pcpo
