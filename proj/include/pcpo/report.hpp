#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pcpo/train.hpp"

namespace pcpo {

namespace detail {

/// 17 significant digits round-trips doubles exactly, so identical
/// trajectories serialize to identical bytes.
inline std::string fmt_num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

inline std::string fmt_short(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(6) << x;
    return os.str();
}

} // namespace detail

inline std::vector<std::string> csv_columns(int channels) {
    std::vector<std::string> cols;
    auto per_channel = [&](const std::string &base) {
        for (int i = 0; i < channels; ++i) cols.push_back(base + "_" + std::to_string(i));
    };
    cols.push_back("iteration");
    cols.push_back("j_hat");
    per_channel("jc_hat");
    cols.push_back("j_exact");
    per_channel("jc_exact");
    cols.push_back("f_old");
    cols.push_back("f_new");
    per_channel("g");
    per_channel("phi");
    per_channel("dual");
    per_channel("intr");
    cols.push_back("intr_total");
    cols.push_back("eta");
    cols.push_back("G_old");
    cols.push_back("G_new");
    cols.push_back("grad_norm");
    cols.push_back("step_norm");
    cols.push_back("predicted_kl");
    cols.push_back("actual_kl");
    cols.push_back("cg_iterations");
    cols.push_back("cg_residual");
    cols.push_back("backtracks");
    cols.push_back("accepted");
    cols.push_back("fallback");
    cols.push_back("stationary");
    cols.push_back("value_loss");
    per_channel("value_loss_cost");
    cols.push_back("clip_count");
    return cols;
}

/// One row per iteration; wall-clock time is deliberately absent.
inline void write_csv(std::ostream &out, const TrainResult &result, int channels) {
    const std::vector<std::string> cols = csv_columns(channels);
    for (size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
    for (const UpdateReport &r : result.reports) {
        std::vector<std::string> vals;
        auto num = [&](double x) { vals.push_back(detail::fmt_num(x)); };
        auto vec = [&](const Vec &v) {
            for (int i = 0; i < channels; ++i)
                vals.push_back(detail::fmt_num(i < v.size() ? v[i] : kNan));
        };
        vals.push_back(std::to_string(r.iteration));
        num(r.j_hat);
        vec(r.jc_hat);
        num(r.j_exact);
        vec(r.jc_exact);
        num(r.f_old);
        num(r.f_new);
        vec(r.g);
        vec(r.phi);
        vec(r.dual);
        vec(r.intr);
        num(r.intr_total);
        num(r.eta);
        num(r.g_obj_old);
        num(r.g_obj_new);
        num(r.grad_norm);
        num(r.step_norm);
        num(r.predicted_kl);
        num(r.actual_kl);
        vals.push_back(std::to_string(r.cg_iterations));
        num(r.cg_residual);
        vals.push_back(std::to_string(r.backtracks));
        vals.push_back(r.accepted ? "1" : "0");
        vals.push_back(r.fallback ? "1" : "0");
        vals.push_back(r.stationary ? "1" : "0");
        num(r.value_loss);
        vec(r.value_loss_costs);
        vals.push_back(std::to_string(r.clip_count));
        for (size_t i = 0; i < vals.size(); ++i) out << (i ? "," : "") << vals[i];
        out << "\n";
    }
}

struct ReferenceSolution {
    bool available = false;
    double j = 0.0;
    Vec j_c;
    bool feasible = false;
    long grid_points = 0;
};

inline void write_summary(std::ostream &out, const TrainResult &result, int channels,
                          const ReferenceSolution &reference = {}) {
    using detail::fmt_short;
    out << "method: " << method_name(result.method) << "\n";
    out << "seed: " << result.seed << "\n";
    out << "iterations: " << result.reports.size() << "\n";
    out << "thresholds:";
    for (int i = 0; i < channels; ++i) out << " " << fmt_short(result.thresholds[i]);
    out << "\n";
    out << "initial_j_exact: " << fmt_short(result.initial_j_exact) << "\n";
    out << "initial_jc_exact:";
    for (int i = 0; i < result.initial_jc_exact.size(); ++i)
        out << " " << fmt_short(result.initial_jc_exact[i]);
    out << "\n";
    if (!result.reports.empty()) {
        const UpdateReport &last = result.reports.back();
        out << "final_j_hat: " << fmt_short(last.j_hat) << "\n";
        out << "final_jc_hat:";
        for (int i = 0; i < channels; ++i) out << " " << fmt_short(last.jc_hat[i]);
        out << "\n";
        out << "final_j_exact: " << fmt_short(last.j_exact) << "\n";
        out << "final_jc_exact:";
        for (int i = 0; i < channels; ++i)
            out << " " << fmt_short(i < last.jc_exact.size() ? last.jc_exact[i] : kNan);
        out << "\n";
        const size_t tail = std::min<size_t>(10, result.reports.size());
        double mean_j = 0.0;
        Vec mean_jc = Vec::Zero(channels);
        long accepted = 0, fallbacks = 0;
        for (size_t k = result.reports.size() - tail; k < result.reports.size(); ++k) {
            mean_j += result.reports[k].j_hat;
            for (int i = 0; i < channels; ++i) mean_jc[i] += result.reports[k].jc_hat[i];
        }
        for (const UpdateReport &r : result.reports) {
            accepted += r.accepted ? 1 : 0;
            fallbacks += r.fallback ? 1 : 0;
        }
        mean_j /= static_cast<double>(tail);
        mean_jc /= static_cast<double>(tail);
        out << "mean_j_hat_last" << tail << ": " << fmt_short(mean_j) << "\n";
        out << "mean_jc_hat_last" << tail << ":";
        for (int i = 0; i < channels; ++i) out << " " << fmt_short(mean_jc[i]);
        out << "\n";
        out << "accepted_updates: " << accepted << "/" << result.reports.size() << "\n";
        out << "fallback_steps: " << fallbacks << "\n";

        // Cumulative constraint violation of the exact cost trace, when available.
        if (!std::isnan(result.initial_j_exact) && channels > 0) {
            Mat trace(static_cast<Eigen::Index>(result.reports.size()), channels);
            bool any_nan = false;
            for (size_t k = 0; k < result.reports.size(); ++k)
                for (int i = 0; i < channels; ++i) {
                    const double v =
                        i < result.reports[k].jc_exact.size() ? result.reports[k].jc_exact[i] : kNan;
                    trace(static_cast<Eigen::Index>(k), i) = v;
                    any_nan |= std::isnan(v);
                }
            if (!any_nan) {
                const ViolationSummary viol = cumulative_violation(trace, result.thresholds);
                out << "cumulative_violation: " << fmt_short(viol.total) << "\n";
            }
        }
    }
    if (result.method == Method::Lagrangian) {
        out << "final_lambdas:";
        for (int i = 0; i < result.final_lambdas.size(); ++i)
            out << " " << fmt_short(result.final_lambdas[i]);
        out << "\n";
    }
    if (!result.theory.empty()) {
        long applicable = 0, held_theorem = 0, held_proof = 0;
        for (const TheoryRow &t : result.theory) {
            if (!t.applicable) continue;
            ++applicable;
            held_theorem += t.holds_theorem ? 1 : 0;
            held_proof += t.holds_proof ? 1 : 0;
        }
        out << "bound_rows: " << result.theory.size() << "\n";
        out << "bound_applicable: " << applicable << "\n";
        out << "bound_held_theorem: " << held_theorem << "/" << applicable << "\n";
        out << "bound_held_proof: " << held_proof << "/" << applicable << "\n";
    }
    if (!result.prop1.empty()) {
        long held = 0;
        for (const Prop1Row &p : result.prop1) held += p.holds ? 1 : 0;
        out << "prop1_held: " << held << "/" << result.prop1.size() << "\n";
    }
    if (reference.available) {
        out << "reference_j: " << fmt_short(reference.j) << "\n";
        out << "reference_jc:";
        for (int i = 0; i < reference.j_c.size(); ++i) out << " " << fmt_short(reference.j_c[i]);
        out << "\n";
        out << "reference_feasible: " << (reference.feasible ? "yes" : "no") << "\n";
        out << "reference_grid_points: " << reference.grid_points << "\n";
    }
    out << "wall_ms_total: " << fmt_short(result.total_wall_ms) << "\n";
}

inline void write_theory_report(std::ostream &out, const TrainResult &result) {
    using detail::fmt_short;
    out << "iteration case applicable bound_theorem bound_proof g_diff_exact holds_theorem holds_proof\n";
    long applicable = 0, held_theorem = 0, held_proof = 0;
    for (const TheoryRow &t : result.theory) {
        out << t.iteration << " " << t.case_index << " " << (t.applicable ? 1 : 0) << " "
            << fmt_short(t.bound_theorem) << " " << fmt_short(t.bound_proof) << " "
            << fmt_short(t.g_diff_exact) << " " << (t.holds_theorem ? 1 : 0) << " "
            << (t.holds_proof ? 1 : 0) << "\n";
        if (t.applicable) {
            ++applicable;
            held_theorem += t.holds_theorem ? 1 : 0;
            held_proof += t.holds_proof ? 1 : 0;
        }
    }
    out << "summary applicable=" << applicable << "/" << result.theory.size()
        << " held_theorem=" << held_theorem << "/" << applicable << " held_proof=" << held_proof
        << "/" << applicable << "\n";
    if (!result.prop1.empty()) {
        long held = 0;
        for (const Prop1Row &p : result.prop1) held += p.holds ? 1 : 0;
        out << "prop1 held=" << held << "/" << result.prop1.size() << "\n";
        for (const Prop1Row &p : result.prop1)
            out << "prop1_row " << p.iteration << " lhs=" << fmt_short(p.lhs)
                << " rhs=" << fmt_short(p.rhs) << " holds=" << (p.holds ? 1 : 0) << "\n";
    }
}

struct ChartSeries {
    std::string label;
    std::string color;
    std::vector<double> y;
};

/**
 * Self-contained SVG line chart. Non-finite points break the polyline
 * rather than distorting the scale. An optional horizontal rule marks
 * a threshold or reference value.
 */
inline void write_line_chart(std::ostream &out, const std::string &title,
                             const std::string &y_label, const std::vector<ChartSeries> &series,
                             std::optional<double> hline = std::nullopt,
                             const std::string &hline_label = "",
                             const std::string &x_label = "iteration") {
    const double width = 860, height = 480;
    const double ml = 70, mr = 170, mt = 48, mb = 48;
    const double pw = width - ml - mr, ph = height - mt - mb;

    size_t n = 0;
    double lo = kInf, hi = -kInf;
    for (const ChartSeries &s : series) {
        n = std::max(n, s.y.size());
        for (double v : s.y)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }
    if (hline && std::isfinite(*hline)) {
        lo = std::min(lo, *hline);
        hi = std::max(hi, *hline);
    }
    if (!(lo <= hi)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-12) {
        const double pad = std::max(1e-6, std::abs(hi) * 0.1);
        lo -= pad;
        hi += pad;
    } else {
        const double pad = (hi - lo) * 0.05;
        lo -= pad;
        hi += pad;
    }
    const double xmax = n > 1 ? static_cast<double>(n - 1) : 1.0;
    auto px = [&](double x) { return ml + pw * (x / xmax); };
    auto py = [&](double y) { return mt + ph * (1.0 - (y - lo) / (hi - lo)); };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"16\">" << title << "</text>\n";

    const int ticks = 5;
    out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">\n";
    for (int t = 0; t <= ticks; ++t) {
        const double val = lo + (hi - lo) * t / ticks;
        const double y = py(val);
        out << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << ml + pw << "\" y2=\"" << y
            << "\" stroke=\"#ddd\"/>\n";
        out << "<text x=\"" << ml - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
            << detail::fmt_short(val) << "</text>\n";
    }
    for (int t = 0; t <= ticks; ++t) {
        const double xv = xmax * t / ticks;
        const double x = px(xv);
        out << "<text x=\"" << x << "\" y=\"" << mt + ph + 18 << "\" text-anchor=\"middle\">"
            << static_cast<long>(std::lround(xv)) << "</text>\n";
    }
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
        << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    out << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << y_label
        << "</text>\n";
    out << "</g>\n";
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#999\"/>\n";

    if (hline && std::isfinite(*hline)) {
        const double y = py(*hline);
        out << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << ml + pw << "\" y2=\"" << y
            << "\" stroke=\"#c0392b\" stroke-dasharray=\"6,4\"/>\n";
        if (!hline_label.empty())
            out << "<text x=\"" << ml + pw - 4 << "\" y=\"" << y - 5
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
                << "fill=\"#c0392b\">" << hline_label << "</text>\n";
    }

    double legend_y = mt + 12;
    for (const ChartSeries &s : series) {
        std::ostringstream pts;
        bool open = false;
        for (size_t i = 0; i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i])) {
                if (open) {
                    out << "<polyline fill=\"none\" stroke=\"" << s.color
                        << "\" stroke-width=\"1.6\" points=\"" << pts.str() << "\"/>\n";
                    pts.str("");
                    open = false;
                }
                continue;
            }
            pts << px(static_cast<double>(i)) << "," << py(s.y[i]) << " ";
            open = true;
        }
        if (open)
            out << "<polyline fill=\"none\" stroke=\"" << s.color
                << "\" stroke-width=\"1.6\" points=\"" << pts.str() << "\"/>\n";
        out << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << legend_y << "\" x2=\"" << ml + pw + 34
            << "\" y2=\"" << legend_y << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << ml + pw + 40 << "\" y=\"" << legend_y + 4
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
        legend_y += 18;
    }
    out << "</svg>\n";
}

/// Return and first-channel cost curves for one training run.
inline void write_run_chart(std::ostream &out, const TrainResult &result, int channels) {
    std::vector<ChartSeries> series;
    ChartSeries jr{"sampled return", "#2980b9", {}};
    ChartSeries je{"exact return", "#16a085", {}};
    for (const UpdateReport &r : result.reports) {
        jr.y.push_back(r.j_hat);
        je.y.push_back(r.j_exact);
    }
    series.push_back(jr);
    bool any_exact = false;
    for (double v : je.y) any_exact |= std::isfinite(v);
    if (any_exact) series.push_back(je);
    for (int i = 0; i < channels; ++i) {
        ChartSeries jc{"cost " + std::to_string(i), i == 0 ? "#e67e22" : "#8e44ad", {}};
        for (const UpdateReport &r : result.reports)
            jc.y.push_back(i < r.jc_hat.size() ? r.jc_hat[i] : kNan);
        series.push_back(jc);
    }
    std::optional<double> hline;
    std::string hlabel;
    if (channels > 0 && std::isfinite(result.thresholds[0])) {
        hline = result.thresholds[0];
        hlabel = "threshold";
    }
    write_line_chart(out,
                     std::string(method_name(result.method)) + " seed " + std::to_string(result.seed),
                     "discounted return / cost", series, hline, hlabel);
}

} // namespace pcpo
