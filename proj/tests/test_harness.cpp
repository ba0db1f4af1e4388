#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "pcpo/config.hpp"
#include "pcpo/harness.hpp"
#include "pcpo/report.hpp"
#include "pcpo/train.hpp"

using namespace pcpo;

namespace {

ExperimentConfig tiny_chain_config() {
    ExperimentConfig cfg;
    cfg.environment = "chain";
    cfg.method = Method::Pcpo;
    cfg.iterations = 3;
    cfg.episodes_per_batch = 4;
    cfg.horizon = 50;
    cfg.seeds = {0};
    cfg.thresholds = {45.0};
    cfg.reference_grid = 0.0;
    cfg.output_dir = "";
    return cfg;
}

std::string run_to_csv(const ExperimentConfig &cfg, std::uint64_t seed) {
    const Vec d = resolve_thresholds(cfg);
    const auto env = make_environment(cfg, &d);
    const TrainResult result = train_single_seed(cfg, *env, d, seed);
    std::ostringstream os;
    write_csv(os, result, env->num_cost_channels());
    return os.str();
}

std::filesystem::path fresh_temp_dir(const std::string &tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("pcpo_test_" + tag);
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("config parsing covers every section and threshold form", "[harness]") {
    const ExperimentConfig defaults = parse_config(nlohmann::json::parse("{}"));
    REQUIRE(defaults.environment == "chain");
    REQUIRE(defaults.method == Method::Pcpo);
    REQUIRE(defaults.iterations == 100);
    REQUIRE(defaults.thresholds.empty());

    const char *text = R"({
        "environment": "point_velocity",
        "method": "lagrangian",
        "iterations": 7,
        "episodes_per_batch": 5,
        "horizon": 33,
        "seeds": [2, 9],
        "thresholds": [45.0, "inf"],
        "discount": 0.9,
        "estimator": {"lambda_reward": 0.8, "value_fit_epochs": 3},
        "trust_region": {"delta": 0.02, "cg_max_iters": 7},
        "barrier": {"tau": 5.0},
        "intrinsic": {"omega": 0.25, "gate_margin": 1.5},
        "lagrangian": {"lambda_lr": 0.05, "lambda_max": 4.0},
        "env_params": {"dt": 0.05, "velocity_threshold": 2.0}
    })";
    const ExperimentConfig cfg = parse_config(nlohmann::json::parse(text));
    REQUIRE(cfg.environment == "point_velocity");
    REQUIRE(cfg.method == Method::Lagrangian);
    REQUIRE(cfg.iterations == 7);
    REQUIRE(cfg.episodes_per_batch == 5);
    REQUIRE(cfg.horizon == 33);
    REQUIRE(cfg.seeds == std::vector<std::uint64_t>{2, 9});
    REQUIRE(cfg.thresholds.size() == 2);
    REQUIRE(cfg.thresholds[0] == 45.0);
    REQUIRE(std::isinf(cfg.thresholds[1]));
    REQUIRE(cfg.discount == 0.9);
    REQUIRE(cfg.estimator.lambda_reward == 0.8);
    REQUIRE(cfg.estimator.value_fit_epochs == 3);
    REQUIRE(cfg.trust_region.delta == 0.02);
    REQUIRE(cfg.trust_region.cg_max_iters == 7);
    REQUIRE(cfg.tau == 5.0);
    REQUIRE(cfg.intrinsic.omega == 0.25);
    REQUIRE(cfg.intrinsic.gate_margin.has_value());
    REQUIRE(*cfg.intrinsic.gate_margin == 1.5);
    REQUIRE(cfg.lagrangian.lambda_lr == 0.05);
    REQUIRE(cfg.lagrangian.lambda_max == 4.0);
    REQUIRE(cfg.env_params.dt == 0.05);
    REQUIRE(cfg.env_params.velocity_threshold == 2.0);

    const ExperimentConfig scalar =
        parse_config(nlohmann::json::parse(R"({"thresholds": 12.5})"));
    REQUIRE(scalar.thresholds == std::vector<double>{12.5});
    const ExperimentConfig autod =
        parse_config(nlohmann::json::parse(R"({"thresholds": "auto"})"));
    REQUIRE(autod.thresholds.empty());

    REQUIRE_THROWS_AS(parse_config(nlohmann::json::parse(R"({"method": "ppo"})")),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(parse_config(nlohmann::json::parse(R"({"thresholds": "soon"})")),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(parse_config(nlohmann::json::parse(R"({"iterations": -1})")),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(parse_config(nlohmann::json::parse(R"({"discount": 1.0})")),
                      std::invalid_argument);
}

TEST_CASE("config derives per-method kernels and horizons", "[harness]") {
    ExperimentConfig cfg;
    REQUIRE(cfg.resolved_horizon() == 700);
    cfg.environment = "point_velocity";
    REQUIRE(cfg.resolved_horizon() == 200);
    cfg.horizon = 123;
    REQUIRE(cfg.resolved_horizon() == 123);

    cfg.method = Method::Pcpo;
    REQUIRE(cfg.barrier_config().kind == BarrierKind::ExtendedLog);
    REQUIRE(cfg.barrier_config().tau == cfg.tau);
    cfg.method = Method::PcpoQuadratic;
    REQUIRE(cfg.barrier_config().kind == BarrierKind::Quadratic);
    REQUIRE(cfg.barrier_config().tau == cfg.tau_quadratic);
    cfg.method = Method::PcpoExponential;
    REQUIRE(cfg.barrier_config().kind == BarrierKind::Exponential);
    REQUIRE(cfg.barrier_config().tau == cfg.tau_exponential);

    cfg.method = Method::Lagrangian;
    REQUIRE_FALSE(cfg.intrinsic_config().enabled);
    cfg.method = Method::PcpoNoIntrinsic;
    REQUIRE_FALSE(cfg.intrinsic_config().enabled);
    cfg.method = Method::Pcpo;
    REQUIRE(cfg.intrinsic_config().enabled);
}

TEST_CASE("training is bitwise deterministic per seed", "[harness]") {
    const ExperimentConfig cfg = tiny_chain_config();
    const std::string first = run_to_csv(cfg, 0);
    const std::string second = run_to_csv(cfg, 0);
    REQUIRE(first == second);
    REQUIRE(first.find("\nnan") == std::string::npos);

    const std::string other_seed = run_to_csv(cfg, 1);
    REQUIRE(first != other_seed);
}

TEST_CASE("different seeds reach different parameters", "[harness]") {
    const ExperimentConfig cfg = tiny_chain_config();
    const Vec d = resolve_thresholds(cfg);
    const auto env = make_environment(cfg, &d);
    const TrainResult a = train_single_seed(cfg, *env, d, 0);
    const TrainResult b = train_single_seed(cfg, *env, d, 1);
    REQUIRE((a.final_params.theta - b.final_params.theta).norm() > 0.0);
    REQUIRE(a.reports.size() == 3);
    REQUIRE(b.reports.size() == 3);
}

TEST_CASE("a zero bonus budget reduces to the bonus-free method exactly", "[harness]") {
    ExperimentConfig with_zero = tiny_chain_config();
    with_zero.method = Method::Pcpo;
    with_zero.intrinsic.omega = 0.0;
    ExperimentConfig plain = tiny_chain_config();
    plain.method = Method::PcpoNoIntrinsic;
    REQUIRE(run_to_csv(with_zero, 3) == run_to_csv(plain, 3));
}

TEST_CASE("with no finite threshold the barrier method is the multiplier method", "[harness]") {
    ExperimentConfig barrier_arm = tiny_chain_config();
    barrier_arm.method = Method::Pcpo;
    barrier_arm.intrinsic.omega = 0.0;
    barrier_arm.thresholds = {std::numeric_limits<double>::infinity()};
    ExperimentConfig multiplier_arm = barrier_arm;
    multiplier_arm.method = Method::Lagrangian;
    REQUIRE(run_to_csv(barrier_arm, 5) == run_to_csv(multiplier_arm, 5));
}

TEST_CASE("threshold resolution passes explicit values through", "[harness]") {
    ExperimentConfig cfg = tiny_chain_config();
    cfg.thresholds = {12.5};
    const Vec d = resolve_thresholds(cfg);
    REQUIRE(d.size() == 1);
    REQUIRE(d[0] == 12.5);
}

TEST_CASE("threshold calibration lands on a binding finite value", "[harness]") {
    ExperimentConfig cfg = tiny_chain_config();
    cfg.thresholds.clear();
    cfg.calibration_iterations = 8;
    const Vec d = resolve_thresholds(cfg);
    REQUIRE(d.size() == 1);
    REQUIRE(std::isfinite(d[0]));
    REQUIRE(d[0] > 0.0);
    REQUIRE(d[0] < 60.0);
}

TEST_CASE("experiment runs write the full artifact set", "[harness]") {
    const auto dir = fresh_temp_dir("artifacts");
    ExperimentConfig cfg = tiny_chain_config();
    cfg.iterations = 2;
    cfg.output_dir = dir.string();
    cfg.checkpoint_every = 1;
    const ExperimentOutput out = run_experiment(cfg);
    REQUIRE(out.runs.size() == 1);
    REQUIRE_FALSE(out.runs[0].failed);
    REQUIRE(out.thresholds[0] == 45.0);
    const std::string stem = (dir / "pcpo_seed0").string();
    for (const char *suffix : {".csv", "_summary.txt", "_policy.txt", ".svg", "_theory.txt"}) {
        INFO(stem << suffix);
        REQUIRE(std::filesystem::exists(stem + suffix));
    }
    REQUIRE(std::filesystem::exists(stem + "_checkpoint1.txt"));
    REQUIRE(std::filesystem::exists(stem + "_checkpoint2.txt"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("a zero-iteration run still writes a header-only trace", "[harness]") {
    const auto dir = fresh_temp_dir("empty_run");
    ExperimentConfig cfg = tiny_chain_config();
    cfg.iterations = 0;
    cfg.output_dir = dir.string();
    const ExperimentOutput out = run_experiment(cfg);
    REQUIRE_FALSE(out.runs[0].failed);
    REQUIRE(out.runs[0].result.reports.empty());
    std::ifstream csv(dir / "pcpo_seed0.csv");
    REQUIRE(csv.good());
    std::string header, extra;
    REQUIRE(std::getline(csv, header));
    REQUIRE_FALSE(std::getline(csv, extra));
    const std::vector<std::string> cols = csv_columns(1);
    std::ostringstream joined;
    for (size_t i = 0; i < cols.size(); ++i) joined << (i ? "," : "") << cols[i];
    REQUIRE(header == joined.str());
    std::filesystem::remove_all(dir);
}

TEST_CASE("method comparison trains both arms on shared thresholds", "[harness]") {
    ExperimentConfig cfg = tiny_chain_config();
    cfg.iterations = 2;
    cfg.seeds = {0, 1};
    const CompareOutput out = compare_methods(cfg, Method::Pcpo, Method::Lagrangian, false);
    REQUIRE(out.thresholds.size() == 1);
    REQUIRE(out.a.runs.size() == 2);
    REQUIRE(out.b.runs.size() == 2);
    REQUIRE(out.violation_a.size() == 2);
    REQUIRE(out.violation_b.size() == 2);
    REQUIRE_FALSE(out.violation_a.hasNaN());
    REQUIRE_FALSE(out.violation_b.hasNaN());
    for (const SeedRun &run : out.a.runs) REQUIRE(run.result.thresholds[0] == 45.0);
    for (const SeedRun &run : out.b.runs) REQUIRE(run.result.thresholds[0] == 45.0);
}

TEST_CASE("trace rows always carry one cell per column", "[harness]") {
    TrainResult result;
    result.reports.push_back(UpdateReport{});
    std::ostringstream os;
    write_csv(os, result, 2);
    std::istringstream in(os.str());
    std::string header, row;
    REQUIRE(std::getline(in, header));
    REQUIRE(std::getline(in, row));
    const auto count_cells = [](const std::string &line) {
        return 1 + std::count(line.begin(), line.end(), ',');
    };
    REQUIRE(count_cells(header) == static_cast<long>(csv_columns(2).size()));
    REQUIRE(count_cells(row) == count_cells(header));
    REQUIRE(row.find("nan") != std::string::npos);
}

TEST_CASE("charts render as self-contained svg", "[harness]") {
    std::vector<ChartSeries> series(2);
    series[0] = {"alpha", "#2980b9", {1.0, 2.0, kNan, 1.5}};
    series[1] = {"beta", "#e67e22", {0.5, 0.25, 0.75, 1.0}};
    std::ostringstream os;
    write_line_chart(os, "smoke", "value", series, 1.0, "limit");
    const std::string svg = os.str();
    REQUIRE(svg.rfind("<svg", 0) == 0);
    REQUIRE(svg.find("polyline") != std::string::npos);
    REQUIRE(svg.find("alpha") != std::string::npos);
    REQUIRE(svg.find("limit") != std::string::npos);
    REQUIRE(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("frozen evaluation reports sampled and exact costs", "[harness]") {
    const ExperimentConfig cfg = tiny_chain_config();
    const Vec d = resolve_thresholds(cfg);
    const auto env = make_environment(cfg, &d);
    const PolicyParams params = make_policy_for(*env);
    const EvalOutput out = evaluate_policy(*env, params, 5, 50, 0.99, 3);
    REQUIRE(out.episodes == 5);
    REQUIRE(std::isfinite(out.mean_return));
    REQUIRE(out.mean_costs.size() == 1);
    REQUIRE(out.mean_costs[0] >= 0.0);
    REQUIRE(out.exact_available);
    REQUIRE(std::isfinite(out.j_exact));
    REQUIRE(out.jc_exact.size() == 1);
    // Sampled and exact cost agree loosely even on a 5-episode probe.
    REQUIRE(out.mean_costs[0] == Catch::Approx(out.jc_exact[0]).margin(0.6 * out.jc_exact[0] + 1.0));
}

TEST_CASE("parameter sweeps cover the grid and reject unknown knobs", "[harness]") {
    ExperimentConfig cfg = tiny_chain_config();
    cfg.iterations = 1;
    const SweepOutput out = sweep_parameter(cfg, "tau", {5.0, 20.0}, false);
    REQUIRE(out.parameter == "tau");
    REQUIRE(out.points.size() == 2);
    for (const SweepPoint &pt : out.points) {
        REQUIRE(pt.seeds_ok == 1);
        REQUIRE(std::isfinite(pt.mean_final_j));
        REQUIRE(std::isfinite(pt.mean_final_jc));
    }
    REQUIRE_THROWS_AS(sweep_parameter(cfg, "delta", {0.1}, false), std::invalid_argument);
    REQUIRE_THROWS_AS(sweep_parameter(cfg, "tau", {}, false), std::invalid_argument);
}
