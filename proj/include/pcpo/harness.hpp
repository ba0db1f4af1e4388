#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcpo/report.hpp"

namespace pcpo {

struct SeedRun {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    TrainResult result;
};

struct ExperimentOutput {
    Vec thresholds;
    std::vector<SeedRun> runs;
    ReferenceSolution reference;
    std::vector<std::string> files;
};

namespace detail {

inline void write_text_file(const std::filesystem::path &path,
                            const std::function<void(std::ostream &)> &body,
                            std::vector<std::string> *files = nullptr) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    body(out);
    if (!out) throw std::runtime_error("write failed: " + path.string());
    if (files) files->push_back(path.string());
}

inline std::filesystem::path run_stem(const ExperimentConfig &cfg, Method method, std::uint64_t seed) {
    return std::filesystem::path(cfg.output_dir) /
           (std::string(method_name(method)) + "_seed" + std::to_string(seed));
}

} // namespace detail

/**
 * Picks binding cost thresholds for an environment by running the
 * unconstrained baseline (all thresholds infinite, multipliers start
 * and stay at zero) and halving the cost level it settles at. Exact
 * costs are used when the model is available, sampled tails otherwise.
 */
inline Vec resolve_thresholds(const ExperimentConfig &cfg) {
    if (!cfg.thresholds.empty()) {
        Vec out(static_cast<Eigen::Index>(cfg.thresholds.size()));
        for (size_t i = 0; i < cfg.thresholds.size(); ++i) out[i] = cfg.thresholds[i];
        return out;
    }
    ExperimentConfig cal = cfg;
    cal.method = Method::Lagrangian;
    cal.iterations = cfg.calibration_iterations;
    cal.prop1_diagnostic = false;
    cal.theory_checks = false;
    const auto probe_env = make_environment(cal, nullptr);
    const int m = probe_env->num_cost_channels();
    const Vec inf_thresholds = Vec::Constant(m, kInf);
    const auto env = make_environment(cal, &inf_thresholds);
    const std::uint64_t cal_seed =
        detail::splitmix64((cfg.seeds.empty() ? 0 : cfg.seeds.front()) ^ 0xCA11B8A7ED5EEDULL);
    const TrainResult run = train_single_seed(cal, *env, inf_thresholds, cal_seed);

    Vec d(m);
    const TabularEnv *tabular = dynamic_cast<const TabularEnv *>(env.get());
    if (tabular) {
        const ExactEval ev = exact_policy_eval(tabular->model(), policy_table(run.final_params));
        for (int i = 0; i < m; ++i) d[i] = 0.5 * ev.j_c[i];
    } else {
        const size_t tail = std::min<size_t>(10, run.reports.size());
        if (tail == 0) throw std::runtime_error("calibration produced no iterations");
        Vec mean = Vec::Zero(m);
        for (size_t k = run.reports.size() - tail; k < run.reports.size(); ++k)
            mean += run.reports[k].jc_hat;
        d = 0.5 * mean / static_cast<double>(tail);
    }
    return d;
}

inline ReferenceSolution compute_reference(const ExperimentConfig &cfg, const Environment &env,
                                           const Vec &thresholds) {
    ReferenceSolution ref;
    const TabularEnv *tabular = dynamic_cast<const TabularEnv *>(&env);
    if (!tabular || cfg.reference_grid <= 0.0) return ref;
    bool any_finite = false;
    for (int i = 0; i < thresholds.size(); ++i) any_finite |= std::isfinite(thresholds[i]);
    if (!any_finite) return ref;
    const BruteForceResult bf =
        brute_force_constrained_optimum(tabular->model(), cfg.reference_grid);
    ref.available = true;
    ref.j = bf.j;
    ref.j_c = bf.j_c;
    ref.feasible = bf.feasible;
    ref.grid_points = bf.grid_points;
    return ref;
}

/**
 * Trains every configured seed and writes the run artifacts:
 * {method}_seed{seed}.csv / _summary.txt / _policy.txt / .svg, plus
 * _theory.txt when bound rows were collected. A seed that throws is
 * recorded as FAILED in its summary and the remaining seeds still run.
 */
inline ExperimentOutput run_experiment(const ExperimentConfig &cfg, bool write_files = true) {
    cfg.validate();
    ExperimentOutput out;
    out.thresholds = resolve_thresholds(cfg);
    const auto env = make_environment(cfg, &out.thresholds);
    const int m = env->num_cost_channels();
    if (write_files) std::filesystem::create_directories(cfg.output_dir);

    try {
        out.reference = compute_reference(cfg, *env, out.thresholds);
    } catch (const std::exception &) {
        out.reference = ReferenceSolution{};
    }

    for (std::uint64_t seed : cfg.seeds) {
        SeedRun run;
        run.seed = seed;
        std::function<void(int, const PolicyParams &)> checkpoint;
        const auto stem = detail::run_stem(cfg, cfg.method, seed);
        if (write_files && cfg.checkpoint_every > 0) {
            checkpoint = [&cfg, stem](int iter, const PolicyParams &p) {
                if ((iter + 1) % cfg.checkpoint_every != 0) return;
                std::ofstream ck(stem.string() + "_checkpoint" + std::to_string(iter + 1) + ".txt");
                if (ck) save_policy(p, ck);
            };
        }
        try {
            run.result = train_single_seed(cfg, *env, out.thresholds, seed, checkpoint);
        } catch (const std::exception &e) {
            run.failed = true;
            run.error = e.what();
        }
        if (write_files) {
            detail::write_text_file(stem.string() + ".csv", [&](std::ostream &os) {
                write_csv(os, run.result, m);
            }, &out.files);
            detail::write_text_file(stem.string() + "_summary.txt", [&](std::ostream &os) {
                if (run.failed) os << "FAILED: " << run.error << "\n";
                write_summary(os, run.result, m, out.reference);
            }, &out.files);
            if (!run.failed) {
                detail::write_text_file(stem.string() + "_policy.txt", [&](std::ostream &os) {
                    save_policy(run.result.final_params, os);
                }, &out.files);
                detail::write_text_file(stem.string() + ".svg", [&](std::ostream &os) {
                    write_run_chart(os, run.result, m);
                }, &out.files);
                if (!run.result.theory.empty() || !run.result.prop1.empty())
                    detail::write_text_file(stem.string() + "_theory.txt", [&](std::ostream &os) {
                        write_theory_report(os, run.result);
                    }, &out.files);
            }
        }
        out.runs.push_back(std::move(run));
    }
    return out;
}

struct CompareOutput {
    Vec thresholds;
    ExperimentOutput a;
    ExperimentOutput b;
    Vec violation_a; // per-seed cumulative violations (exact trace)
    Vec violation_b;
};

namespace detail {

inline Vec per_seed_violations(const ExperimentOutput &arm, int channels) {
    Vec out = Vec::Constant(static_cast<Eigen::Index>(arm.runs.size()), kNan);
    for (size_t k = 0; k < arm.runs.size(); ++k) {
        const SeedRun &run = arm.runs[k];
        if (run.failed || run.result.reports.empty()) continue;
        Mat trace(static_cast<Eigen::Index>(run.result.reports.size()), channels);
        bool any_nan = false;
        for (size_t t = 0; t < run.result.reports.size(); ++t)
            for (int i = 0; i < channels; ++i) {
                const double v = i < run.result.reports[t].jc_exact.size()
                                     ? run.result.reports[t].jc_exact[i]
                                     : kNan;
                trace(static_cast<Eigen::Index>(t), i) = v;
                any_nan |= std::isnan(v);
            }
        if (!any_nan) out[static_cast<Eigen::Index>(k)] =
            cumulative_violation(trace, run.result.thresholds).total;
    }
    return out;
}

inline std::vector<double> mean_curve(const ExperimentOutput &arm,
                                      const std::function<double(const UpdateReport &)> &pick) {
    size_t len = 0;
    for (const SeedRun &run : arm.runs)
        if (!run.failed) len = std::max(len, run.result.reports.size());
    std::vector<double> mean(len, kNan);
    for (size_t t = 0; t < len; ++t) {
        double sum = 0.0;
        int count = 0;
        for (const SeedRun &run : arm.runs) {
            if (run.failed || t >= run.result.reports.size()) continue;
            const double v = pick(run.result.reports[t]);
            if (std::isnan(v)) continue;
            sum += v;
            ++count;
        }
        if (count > 0) mean[t] = sum / count;
    }
    return mean;
}

} // namespace detail

/**
 * Runs two methods under one config (same environment, thresholds,
 * seeds, and iteration budget) and reports final costs against the
 * threshold plus per-seed cumulative violations of the exact cost
 * trace. Used for the proactive-versus-reactive comparison.
 */
inline CompareOutput compare_methods(ExperimentConfig cfg, Method method_a, Method method_b,
                                     bool write_files = true) {
    cfg.validate();
    CompareOutput out;
    {
        // Resolve once so both arms face the same constraint.
        const Vec d = resolve_thresholds(cfg);
        cfg.thresholds.assign(static_cast<size_t>(d.size()), 0.0);
        for (int i = 0; i < d.size(); ++i) cfg.thresholds[static_cast<size_t>(i)] = d[i];
        out.thresholds = d;
    }
    ExperimentConfig cfg_a = cfg, cfg_b = cfg;
    cfg_a.method = method_a;
    cfg_b.method = method_b;
    out.a = run_experiment(cfg_a, write_files);
    out.b = run_experiment(cfg_b, write_files);

    const auto env = make_environment(cfg, &out.thresholds);
    const int m = env->num_cost_channels();
    out.violation_a = detail::per_seed_violations(out.a, m);
    out.violation_b = detail::per_seed_violations(out.b, m);

    if (write_files) {
        std::filesystem::create_directories(cfg.output_dir);
        const auto dir = std::filesystem::path(cfg.output_dir);
        detail::write_text_file(dir / "compare_summary.txt", [&](std::ostream &os) {
            os << "arm_a: " << method_name(method_a) << "\n";
            os << "arm_b: " << method_name(method_b) << "\n";
            os << "thresholds:";
            for (int i = 0; i < out.thresholds.size(); ++i)
                os << " " << detail::fmt_short(out.thresholds[i]);
            os << "\n";
            os << "seed final_jc_a final_jc_b violation_a violation_b\n";
            for (size_t k = 0; k < out.a.runs.size(); ++k) {
                const SeedRun &ra = out.a.runs[k];
                const SeedRun &rb = out.b.runs[k];
                auto final_jc = [](const SeedRun &r) {
                    if (r.failed || r.result.reports.empty() || r.result.reports.back().jc_exact.size() == 0)
                        return kNan;
                    return r.result.reports.back().jc_exact[0];
                };
                os << ra.seed << " " << detail::fmt_short(final_jc(ra)) << " "
                   << detail::fmt_short(final_jc(rb)) << " "
                   << detail::fmt_short(out.violation_a[static_cast<Eigen::Index>(k)]) << " "
                   << detail::fmt_short(out.violation_b[static_cast<Eigen::Index>(k)]) << "\n";
            }
        }, &out.a.files);
        detail::write_text_file(dir / "compare.svg", [&](std::ostream &os) {
            std::vector<ChartSeries> series;
            series.push_back({std::string(method_name(method_a)) + " return", "#2980b9",
                              detail::mean_curve(out.a, [](const UpdateReport &r) { return r.j_hat; })});
            series.push_back({std::string(method_name(method_b)) + " return", "#16a085",
                              detail::mean_curve(out.b, [](const UpdateReport &r) { return r.j_hat; })});
            series.push_back({std::string(method_name(method_a)) + " cost", "#e67e22",
                              detail::mean_curve(out.a, [](const UpdateReport &r) {
                                  return r.jc_hat.size() ? r.jc_hat[0] : kNan;
                              })});
            series.push_back({std::string(method_name(method_b)) + " cost", "#8e44ad",
                              detail::mean_curve(out.b, [](const UpdateReport &r) {
                                  return r.jc_hat.size() ? r.jc_hat[0] : kNan;
                              })});
            std::optional<double> hline;
            if (out.thresholds.size() > 0 && std::isfinite(out.thresholds[0]))
                hline = out.thresholds[0];
            write_line_chart(os, "mean over seeds", "discounted return / cost", series, hline,
                             "threshold");
        }, &out.a.files);
    }
    return out;
}

struct SweepPoint {
    double value = 0.0;
    double mean_final_j = 0.0;
    double mean_final_jc = 0.0;
    double mean_violation = 0.0;
    int seeds_ok = 0;
};

struct SweepOutput {
    std::string parameter;
    std::vector<SweepPoint> points;
};

/// Sweeps the barrier hardness or the bonus budget over explicit values.
inline SweepOutput sweep_parameter(ExperimentConfig cfg, const std::string &parameter,
                                   const std::vector<double> &values, bool write_files = true) {
    if (parameter != "tau" && parameter != "omega")
        throw std::invalid_argument("sweep: parameter must be tau or omega");
    if (values.empty()) throw std::invalid_argument("sweep: no values given");
    SweepOutput out;
    out.parameter = parameter;
    const std::string base_dir = cfg.output_dir;
    for (double value : values) {
        ExperimentConfig point_cfg = cfg;
        if (parameter == "tau") point_cfg.tau = value;
        else point_cfg.intrinsic.omega = value;
        std::ostringstream tag;
        tag << parameter << "_" << detail::fmt_short(value);
        point_cfg.output_dir = (std::filesystem::path(base_dir) / ("sweep_" + tag.str())).string();
        const ExperimentOutput run = run_experiment(point_cfg, write_files);
        SweepPoint pt;
        pt.value = value;
        double sum_j = 0.0, sum_jc = 0.0, sum_v = 0.0;
        const Vec viol = detail::per_seed_violations(run, static_cast<int>(run.thresholds.size()));
        for (size_t k = 0; k < run.runs.size(); ++k) {
            const SeedRun &r = run.runs[k];
            if (r.failed || r.result.reports.empty()) continue;
            const UpdateReport &last = r.result.reports.back();
            const double j = std::isnan(last.j_exact) ? last.j_hat : last.j_exact;
            double jc = kNan;
            if (last.jc_exact.size() > 0 && !std::isnan(last.jc_exact[0])) jc = last.jc_exact[0];
            else if (last.jc_hat.size() > 0) jc = last.jc_hat[0];
            sum_j += j;
            sum_jc += jc;
            if (!std::isnan(viol[static_cast<Eigen::Index>(k)]))
                sum_v += viol[static_cast<Eigen::Index>(k)];
            ++pt.seeds_ok;
        }
        if (pt.seeds_ok > 0) {
            pt.mean_final_j = sum_j / pt.seeds_ok;
            pt.mean_final_jc = sum_jc / pt.seeds_ok;
            pt.mean_violation = sum_v / pt.seeds_ok;
        }
        out.points.push_back(pt);
    }
    if (write_files) {
        std::filesystem::create_directories(base_dir);
        detail::write_text_file(std::filesystem::path(base_dir) / "sweep_summary.txt",
                                [&](std::ostream &os) {
            os << "parameter: " << parameter << "\n";
            os << "value mean_final_j mean_final_jc mean_violation seeds_ok\n";
            for (const SweepPoint &pt : out.points)
                os << detail::fmt_short(pt.value) << " " << detail::fmt_short(pt.mean_final_j)
                   << " " << detail::fmt_short(pt.mean_final_jc) << " "
                   << detail::fmt_short(pt.mean_violation) << " " << pt.seeds_ok << "\n";
        });
        detail::write_text_file(std::filesystem::path(base_dir) / "sweep.svg", [&](std::ostream &os) {
            std::vector<ChartSeries> series(2);
            series[0] = {"mean final return", "#2980b9", {}};
            series[1] = {"mean final cost", "#e67e22", {}};
            for (const SweepPoint &pt : out.points) {
                series[0].y.push_back(pt.mean_final_j);
                series[1].y.push_back(pt.mean_final_jc);
            }
            write_line_chart(os, "sweep over " + parameter, "value", series, std::nullopt, "",
                             parameter + " index");
        });
    }
    return out;
}

struct EvalOutput {
    int episodes = 0;
    double mean_return = 0.0;
    Vec mean_costs;
    bool exact_available = false;
    double j_exact = kNan;
    Vec jc_exact;
};

/// Frozen evaluation of a stored policy: no updates, fresh seed stream.
inline EvalOutput evaluate_policy(const Environment &env, const PolicyParams &params, int episodes,
                                  int horizon, double discount, std::uint64_t seed) {
    EvalOutput out;
    out.episodes = episodes;
    const RolloutBatch batch = collect(env, params, episodes, horizon, RngStream(seed));
    out.mean_return = average_reward_return(batch, discount);
    out.mean_costs.resize(env.num_cost_channels());
    for (int i = 0; i < env.num_cost_channels(); ++i)
        out.mean_costs[i] = average_cost_return(batch, discount, i);
    if (const TabularEnv *tabular = dynamic_cast<const TabularEnv *>(&env)) {
        const ExactEval ev = exact_policy_eval(tabular->model(), policy_table(params));
        out.exact_available = true;
        out.j_exact = ev.j;
        out.jc_exact = ev.j_c;
    }
    return out;
}

} // namespace pcpo
