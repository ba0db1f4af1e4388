#pragma once

#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcpo/math.hpp"

namespace pcpo {

/**
 * Finite constrained MDP with state-action rewards and m state-action
 * cost channels. Transition rows are indexed s * n_actions + a.
 * A threshold of +inf marks a channel as unconstrained.
 */
struct TabularCmdp {
    int n_states = 0;
    int n_actions = 0;
    double discount = 0.99;
    Mat transition; // (S*A) x S, row-stochastic
    Mat reward;     // S x A
    std::vector<Mat> costs;
    Vec thresholds;
    Vec initial_dist; // length S, sums to 1

    int num_channels() const { return static_cast<int>(costs.size()); }

    void validate() const {
        if (n_states <= 0 || n_actions <= 0)
            throw std::invalid_argument("cmdp: state/action counts must be positive");
        if (!(discount > 0.0) || !(discount < 1.0))
            throw std::invalid_argument("cmdp: discount must lie in (0, 1)");
        if (transition.rows() != static_cast<Eigen::Index>(n_states) * n_actions ||
            transition.cols() != n_states)
            throw std::invalid_argument("cmdp: transition shape mismatch");
        if (reward.rows() != n_states || reward.cols() != n_actions)
            throw std::invalid_argument("cmdp: reward shape mismatch");
        for (const Mat &c : costs)
            if (c.rows() != n_states || c.cols() != n_actions)
                throw std::invalid_argument("cmdp: cost shape mismatch");
        if (thresholds.size() != num_channels())
            throw std::invalid_argument("cmdp: one threshold per cost channel required");
        if (initial_dist.size() != n_states)
            throw std::invalid_argument("cmdp: initial distribution length mismatch");
        for (Eigen::Index r = 0; r < transition.rows(); ++r) {
            double row = 0.0;
            for (int s2 = 0; s2 < n_states; ++s2) {
                const double p = transition(r, s2);
                if (p < 0.0) throw std::invalid_argument("cmdp: negative transition probability");
                row += p;
            }
            if (std::abs(row - 1.0) > 1e-10)
                throw std::invalid_argument("cmdp: transition row does not sum to 1");
        }
        double init = 0.0;
        for (int s = 0; s < n_states; ++s) {
            if (initial_dist[s] < 0.0) throw std::invalid_argument("cmdp: negative initial probability");
            init += initial_dist[s];
        }
        if (std::abs(init - 1.0) > 1e-10)
            throw std::invalid_argument("cmdp: initial distribution does not sum to 1");
    }
};

/**
 * Exact evaluation of a stochastic policy (rows of `policy` are
 * distributions over actions): values, Q, advantages, normalized
 * discounted occupancy and discounted returns for the reward and
 * every cost channel.
 */
struct ExactEval {
    Vec v;
    Mat q;
    Mat adv;
    std::vector<Vec> v_c;
    std::vector<Mat> q_c;
    std::vector<Mat> adv_c;
    Vec occupancy; // d_pi, sums to 1
    double j = 0.0;
    Vec j_c;
};

namespace detail {

inline void check_policy_table(const TabularCmdp &m, const Mat &policy) {
    if (policy.rows() != m.n_states || policy.cols() != m.n_actions)
        throw std::invalid_argument("policy table shape mismatch");
    for (int s = 0; s < m.n_states; ++s) {
        double row = 0.0;
        for (int a = 0; a < m.n_actions; ++a) {
            if (policy(s, a) < -1e-12) throw std::invalid_argument("policy table has negative entries");
            row += policy(s, a);
        }
        if (std::abs(row - 1.0) > 1e-9)
            throw std::invalid_argument("policy table rows must sum to 1");
    }
}

/// P_pi(s, s') = sum_a pi(a|s) P(s'|s,a)
inline Mat policy_transition(const TabularCmdp &m, const Mat &policy) {
    Mat p = Mat::Zero(m.n_states, m.n_states);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) {
            const double w = policy(s, a);
            if (w == 0.0) continue;
            p.row(s) += w * m.transition.row(s * m.n_actions + a);
        }
    return p;
}

inline Vec solve_checked(const Mat &a, const Vec &b, const char *what) {
    Eigen::PartialPivLU<Mat> lu(a);
    Vec x = lu.solve(b);
    const double residual = (a * x - b).cwiseAbs().maxCoeff();
    if (!(residual <= 1e-8))
        throw std::runtime_error(std::string("linear solve residual too large in ") + what);
    return x;
}

} // namespace detail

inline ExactEval exact_policy_eval(const TabularCmdp &m, const Mat &policy) {
    m.validate();
    detail::check_policy_table(m, policy);
    const Mat p_pi = detail::policy_transition(m, policy);
    const Mat sys = Mat::Identity(m.n_states, m.n_states) - m.discount * p_pi;

    ExactEval out;
    const auto eval_channel = [&](const Mat &table, Vec &v, Mat &q, Mat &adv) {
        Vec r_pi(m.n_states);
        for (int s = 0; s < m.n_states; ++s) r_pi[s] = policy.row(s).dot(table.row(s));
        v = detail::solve_checked(sys, r_pi, "value evaluation");
        q.resize(m.n_states, m.n_actions);
        for (int s = 0; s < m.n_states; ++s)
            for (int a = 0; a < m.n_actions; ++a)
                q(s, a) = table(s, a) + m.discount * m.transition.row(s * m.n_actions + a).dot(v);
        adv = q.colwise() - v;
    };

    eval_channel(m.reward, out.v, out.q, out.adv);
    out.v_c.resize(m.costs.size());
    out.q_c.resize(m.costs.size());
    out.adv_c.resize(m.costs.size());
    for (size_t i = 0; i < m.costs.size(); ++i)
        eval_channel(m.costs[i], out.v_c[i], out.q_c[i], out.adv_c[i]);

    out.occupancy = (1.0 - m.discount) * detail::solve_checked(sys.transpose(), m.initial_dist, "occupancy");
    out.j = m.initial_dist.dot(out.v);
    out.j_c.resize(m.num_channels());
    for (int i = 0; i < m.num_channels(); ++i) out.j_c[i] = m.initial_dist.dot(out.v_c[i]);
    return out;
}

/**
 * Exact J(pi_new) - J(pi_old) via the performance-difference identity:
 * 1/(1-gamma) * E_{s~d_new, a~pi_new}[A_old(s, a)].
 */
inline double performance_difference(const TabularCmdp &m, const Mat &pi_new, const ExactEval &eval_old) {
    detail::check_policy_table(m, pi_new);
    const Mat p_pi = detail::policy_transition(m, pi_new);
    const Mat sys = Mat::Identity(m.n_states, m.n_states) - m.discount * p_pi;
    const Vec d_new = (1.0 - m.discount) * detail::solve_checked(sys.transpose(), m.initial_dist, "occupancy");
    double acc = 0.0;
    for (int s = 0; s < m.n_states; ++s)
        acc += d_new[s] * pi_new.row(s).dot(eval_old.adv.row(s));
    return acc / (1.0 - m.discount);
}

struct BruteForceResult {
    Mat policy;
    double j = -kInf;
    Vec j_c;
    bool feasible = false;
    double grid_points = 0.0;
};

namespace detail {

inline std::vector<Vec> simplex_grid(int n_actions, int k) {
    // All distributions with entries that are multiples of 1/k.
    std::vector<Vec> out;
    Vec current = Vec::Zero(n_actions);
    const std::function<void(int, int)> rec = [&](int slot, int remaining) {
        if (slot == n_actions - 1) {
            current[slot] = static_cast<double>(remaining) / k;
            out.push_back(current);
            return;
        }
        for (int take = 0; take <= remaining; ++take) {
            current[slot] = static_cast<double>(take) / k;
            rec(slot + 1, remaining - take);
        }
    };
    rec(0, k);
    return out;
}

} // namespace detail

/**
 * Exhaustive search over per-state action simplices at the given grid
 * resolution. Returns the best feasible policy, or the minimum-violation
 * policy flagged infeasible when no grid point satisfies the thresholds.
 * Refuses instances whose grid would exceed 1e7 joint points.
 */
inline BruteForceResult brute_force_constrained_optimum(const TabularCmdp &m, double grid_resolution) {
    m.validate();
    if (!(grid_resolution > 0.0) || grid_resolution > 1.0)
        throw std::invalid_argument("grid resolution must lie in (0, 1]");
    const int k = static_cast<int>(std::lround(1.0 / grid_resolution));
    const std::vector<Vec> points = detail::simplex_grid(m.n_actions, k);
    const double total = std::pow(static_cast<double>(points.size()), m.n_states);
    if (total > 1e7) {
        std::ostringstream msg;
        msg << "brute force budget exceeded: " << total << " grid points required (limit 1e7); "
            << "use a coarser resolution";
        throw std::invalid_argument(msg.str());
    }

    BruteForceResult best;
    best.grid_points = total;
    best.j_c = Vec::Zero(m.num_channels());
    double best_violation = kInf;

    Mat policy(m.n_states, m.n_actions);
    std::vector<size_t> idx(m.n_states, 0);
    const size_t per_state = points.size();
    while (true) {
        for (int s = 0; s < m.n_states; ++s) policy.row(s) = points[idx[s]].transpose();
        const ExactEval ev = exact_policy_eval(m, policy);
        double violation = 0.0;
        bool feasible = true;
        for (int i = 0; i < m.num_channels(); ++i) {
            const double over = ev.j_c[i] - m.thresholds[i];
            if (over > 0.0) {
                feasible = false;
                violation += over;
            }
        }
        const bool better = feasible
            ? (!best.feasible || ev.j > best.j)
            : (!best.feasible && violation < best_violation - 1e-15);
        if (better) {
            best.policy = policy;
            best.j = ev.j;
            best.j_c = ev.j_c;
            best.feasible = feasible;
            if (!feasible) best_violation = violation;
        }

        int s = 0;
        for (; s < m.n_states; ++s) {
            if (++idx[s] < per_state) break;
            idx[s] = 0;
        }
        if (s == m.n_states) break;
    }
    return best;
}

/**
 * Plain-text CMDP format: whitespace-separated tokens.
 *
 *   states S
 *   actions A
 *   discount G
 *   transition <S*A*S doubles, row-major over (s, a, s')>
 *   reward <S*A doubles, row-major>
 *   cost <S*A doubles>           (repeat once per channel)
 *   threshold <double>           (one per channel, "inf" allowed)
 *   init_dist <S doubles>
 *
 * Lines starting with '#' are comments.
 */
inline TabularCmdp load_cmdp(std::istream &in) {
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') continue;
        std::istringstream ls(line);
        std::string t;
        while (ls >> t) tokens.push_back(t);
    }
    size_t pos = 0;
    const auto next = [&]() -> const std::string & {
        if (pos >= tokens.size()) throw std::invalid_argument("cmdp file: unexpected end of input");
        return tokens[pos++];
    };
    const auto next_double = [&]() {
        const std::string &t = next();
        if (t == "inf" || t == "+inf") return kInf;
        try {
            return std::stod(t);
        } catch (const std::exception &) {
            throw std::invalid_argument("cmdp file: expected a number, got '" + t + "'");
        }
    };

    TabularCmdp m;
    std::vector<double> thresholds;
    while (pos < tokens.size()) {
        const std::string key = next();
        if (key == "states") m.n_states = static_cast<int>(next_double());
        else if (key == "actions") m.n_actions = static_cast<int>(next_double());
        else if (key == "discount") m.discount = next_double();
        else if (key == "transition") {
            if (m.n_states <= 0 || m.n_actions <= 0)
                throw std::invalid_argument("cmdp file: dimensions must precede tables");
            m.transition.resize(static_cast<Eigen::Index>(m.n_states) * m.n_actions, m.n_states);
            for (Eigen::Index r = 0; r < m.transition.rows(); ++r)
                for (int c = 0; c < m.n_states; ++c) m.transition(r, c) = next_double();
        } else if (key == "reward" || key == "cost") {
            if (m.n_states <= 0 || m.n_actions <= 0)
                throw std::invalid_argument("cmdp file: dimensions must precede tables");
            Mat table(m.n_states, m.n_actions);
            for (int s = 0; s < m.n_states; ++s)
                for (int a = 0; a < m.n_actions; ++a) table(s, a) = next_double();
            if (key == "reward") m.reward = table;
            else m.costs.push_back(table);
        } else if (key == "threshold") {
            thresholds.push_back(next_double());
        } else if (key == "init_dist") {
            m.initial_dist.resize(m.n_states);
            for (int s = 0; s < m.n_states; ++s) m.initial_dist[s] = next_double();
        } else {
            throw std::invalid_argument("cmdp file: unknown key '" + key + "'");
        }
    }
    m.thresholds = Eigen::Map<Vec>(thresholds.data(), static_cast<Eigen::Index>(thresholds.size()));
    m.validate();
    return m;
}

inline void save_cmdp(const TabularCmdp &m, std::ostream &out) {
    m.validate();
    out.precision(17);
    out << "states " << m.n_states << "\nactions " << m.n_actions << "\ndiscount " << m.discount << "\n";
    out << "transition\n";
    for (Eigen::Index r = 0; r < m.transition.rows(); ++r) {
        for (int c = 0; c < m.n_states; ++c) out << m.transition(r, c) << (c + 1 == m.n_states ? "\n" : " ");
    }
    out << "reward\n";
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) out << m.reward(s, a) << (a + 1 == m.n_actions ? "\n" : " ");
    for (const Mat &c : m.costs) {
        out << "cost\n";
        for (int s = 0; s < m.n_states; ++s)
            for (int a = 0; a < m.n_actions; ++a) out << c(s, a) << (a + 1 == m.n_actions ? "\n" : " ");
    }
    for (int i = 0; i < m.num_channels(); ++i) {
        out << "threshold ";
        if (std::isinf(m.thresholds[i])) out << "inf\n";
        else out << m.thresholds[i] << "\n";
    }
    out << "init_dist\n";
    for (int s = 0; s < m.n_states; ++s) out << m.initial_dist[s] << (s + 1 == m.n_states ? "\n" : " ");
}

} // namespace pcpo
