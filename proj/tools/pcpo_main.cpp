#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcpo/checks.hpp"

namespace {

pcpo::ExperimentConfig load_or_default(const std::string &path) {
    if (path.empty()) return pcpo::ExperimentConfig{};
    return pcpo::load_config(path);
}

void apply_overrides(pcpo::ExperimentConfig &cfg, const std::string &method,
                     const std::vector<std::uint64_t> &seeds, int iterations,
                     const std::string &output, const std::string &environment,
                     const std::vector<double> &thresholds) {
    if (!method.empty()) cfg.method = pcpo::parse_method(method);
    if (!seeds.empty()) cfg.seeds = seeds;
    if (iterations >= 0) cfg.iterations = iterations;
    if (!output.empty()) cfg.output_dir = output;
    if (!environment.empty()) cfg.environment = environment;
    if (!thresholds.empty()) cfg.thresholds = thresholds;
}

void print_experiment(const pcpo::ExperimentOutput &out) {
    std::cout << "thresholds:";
    for (int i = 0; i < out.thresholds.size(); ++i)
        std::cout << " " << pcpo::detail::fmt_short(out.thresholds[i]);
    std::cout << "\n";
    for (const pcpo::SeedRun &run : out.runs) {
        std::cout << "seed " << run.seed << ": ";
        if (run.failed) {
            std::cout << "FAILED (" << run.error << ")\n";
            continue;
        }
        if (run.result.reports.empty()) {
            std::cout << "no iterations\n";
            continue;
        }
        const pcpo::UpdateReport &last = run.result.reports.back();
        std::cout << "final j_hat " << pcpo::detail::fmt_short(last.j_hat);
        if (!std::isnan(last.j_exact))
            std::cout << ", j_exact " << pcpo::detail::fmt_short(last.j_exact);
        if (last.jc_hat.size() > 0)
            std::cout << ", jc_hat " << pcpo::detail::fmt_short(last.jc_hat[0]);
        if (last.jc_exact.size() > 0 && !std::isnan(last.jc_exact[0]))
            std::cout << ", jc_exact " << pcpo::detail::fmt_short(last.jc_exact[0]);
        std::cout << "\n";
    }
    for (const std::string &f : out.files) std::cout << "wrote " << f << "\n";
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"constrained policy optimization laboratory"};
    app.require_subcommand(1);

    std::string config_path, method, output, environment;
    std::vector<std::uint64_t> seeds;
    std::vector<double> thresholds;
    int iterations = -1;

    auto add_common = [&](CLI::App *cmd) {
        cmd->add_option("--config", config_path, "JSON experiment config");
        cmd->add_option("--method", method, "pcpo|lagrangian|pcpo-no-intrinsic|pcpo-quadratic|pcpo-exponential");
        cmd->add_option("--seeds", seeds, "seed list");
        cmd->add_option("--iterations", iterations, "training iterations");
        cmd->add_option("--output", output, "output directory");
        cmd->add_option("--env", environment, "chain|point_velocity|point_circle|cmdp_file");
        cmd->add_option("--thresholds", thresholds, "cost thresholds (omit to calibrate)");
    };

    CLI::App *train = app.add_subcommand("train", "train one method across seeds");
    add_common(train);

    CLI::App *cmp = app.add_subcommand("compare", "train two methods under one budget");
    add_common(cmp);
    std::string method_a = "pcpo", method_b = "lagrangian";
    cmp->add_option("--method-a", method_a, "first arm");
    cmp->add_option("--method-b", method_b, "second arm");

    CLI::App *sweep = app.add_subcommand("sweep", "sweep tau or omega");
    add_common(sweep);
    std::string sweep_param = "tau";
    std::vector<double> sweep_values;
    sweep->add_option("--param", sweep_param, "tau|omega");
    sweep->add_option("--values", sweep_values, "sweep values")->required();

    CLI::App *check = app.add_subcommand("check", "run built-in verification suites");
    std::string suite = "all";
    check->add_option("--suite", suite, "gradients|barrier|solver|theory|all");

    CLI::App *eval = app.add_subcommand("eval", "evaluate a stored policy without updating it");
    add_common(eval);
    std::string policy_path;
    int eval_episodes = 40;
    std::uint64_t eval_seed = 1234;
    eval->add_option("--policy", policy_path, "policy file written by train")->required();
    eval->add_option("--episodes", eval_episodes, "evaluation episodes");
    eval->add_option("--seed", eval_seed, "evaluation seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (check->parsed()) {
            const std::vector<pcpo::CheckResult> results = pcpo::run_checks(suite);
            return pcpo::report_checks(results, std::cout) == 0 ? 0 : 1;
        }

        pcpo::ExperimentConfig cfg = load_or_default(config_path);
        apply_overrides(cfg, method, seeds, iterations, output, environment, thresholds);

        if (train->parsed()) {
            const pcpo::ExperimentOutput out = pcpo::run_experiment(cfg);
            print_experiment(out);
            for (const pcpo::SeedRun &run : out.runs)
                if (run.failed) return 1;
            return 0;
        }
        if (cmp->parsed()) {
            const pcpo::CompareOutput out =
                pcpo::compare_methods(cfg, pcpo::parse_method(method_a), pcpo::parse_method(method_b));
            std::cout << "== " << method_a << " ==\n";
            print_experiment(out.a);
            std::cout << "== " << method_b << " ==\n";
            print_experiment(out.b);
            std::cout << "violations " << method_a << ":";
            for (int i = 0; i < out.violation_a.size(); ++i)
                std::cout << " " << pcpo::detail::fmt_short(out.violation_a[i]);
            std::cout << "\nviolations " << method_b << ":";
            for (int i = 0; i < out.violation_b.size(); ++i)
                std::cout << " " << pcpo::detail::fmt_short(out.violation_b[i]);
            std::cout << "\n";
            return 0;
        }
        if (sweep->parsed()) {
            const pcpo::SweepOutput out = pcpo::sweep_parameter(cfg, sweep_param, sweep_values);
            std::cout << "value mean_final_j mean_final_jc mean_violation seeds_ok\n";
            for (const pcpo::SweepPoint &pt : out.points)
                std::cout << pcpo::detail::fmt_short(pt.value) << " "
                          << pcpo::detail::fmt_short(pt.mean_final_j) << " "
                          << pcpo::detail::fmt_short(pt.mean_final_jc) << " "
                          << pcpo::detail::fmt_short(pt.mean_violation) << " " << pt.seeds_ok << "\n";
            return 0;
        }
        if (eval->parsed()) {
            std::ifstream in(policy_path);
            if (!in) throw std::runtime_error("cannot open policy file: " + policy_path);
            const pcpo::PolicyParams params = pcpo::load_policy(in);
            const pcpo::Vec d = pcpo::resolve_thresholds(cfg);
            const auto env = pcpo::make_environment(cfg, &d);
            const pcpo::EvalOutput out = pcpo::evaluate_policy(
                *env, params, eval_episodes, cfg.resolved_horizon(), cfg.discount, eval_seed);
            std::cout << "episodes: " << out.episodes << "\n";
            std::cout << "mean_return: " << pcpo::detail::fmt_short(out.mean_return) << "\n";
            std::cout << "mean_costs:";
            for (int i = 0; i < out.mean_costs.size(); ++i)
                std::cout << " " << pcpo::detail::fmt_short(out.mean_costs[i]);
            std::cout << "\n";
            if (out.exact_available) {
                std::cout << "j_exact: " << pcpo::detail::fmt_short(out.j_exact) << "\n";
                std::cout << "jc_exact:";
                for (int i = 0; i < out.jc_exact.size(); ++i)
                    std::cout << " " << pcpo::detail::fmt_short(out.jc_exact[i]);
                std::cout << "\n";
            }
            return 0;
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
