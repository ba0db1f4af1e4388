#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcpo/env.hpp"
#include "pcpo/math.hpp"

namespace pcpo {

enum class PolicyFamily { TabularSoftmax, LinearGaussian };

/**
 * Flat-parameter stochastic policy.
 *
 * TabularSoftmax: theta has length n_states * n_actions, logits for
 * state s live in the contiguous block s * n_actions + a.
 *
 * LinearGaussian: theta = [W row-major (action_dim x feature_dim),
 * log_std (action_dim)]; the mean is W * features and the learned
 * log-std is state independent. Standard deviations are clamped to
 * [1e-6, 1e6] wherever the density is evaluated or sampled.
 */
struct PolicyParams {
    PolicyFamily family = PolicyFamily::TabularSoftmax;
    int n_states = 0;
    int n_actions = 0;
    int feature_dim = 0;
    int action_dim = 0;
    Vec theta;

    Eigen::Index dim() const { return theta.size(); }

    Vec logits(int state) const {
        return theta.segment(static_cast<Eigen::Index>(state) * n_actions, n_actions);
    }
    double weight(int action_row, int feature_col) const {
        return theta[static_cast<Eigen::Index>(action_row) * feature_dim + feature_col];
    }
    Vec mean(const Vec &features) const {
        Vec mu(action_dim);
        for (int d = 0; d < action_dim; ++d)
            mu[d] = theta.segment(static_cast<Eigen::Index>(d) * feature_dim, feature_dim).dot(features);
        return mu;
    }
    Vec stds() const {
        Vec s(action_dim);
        for (int d = 0; d < action_dim; ++d) {
            const double raw = std::exp(theta[static_cast<Eigen::Index>(action_dim) * feature_dim + d]);
            s[d] = std::clamp(raw, 1e-6, 1e6);
        }
        return s;
    }
};

inline PolicyParams make_tabular_policy(int n_states, int n_actions) {
    if (n_states <= 0 || n_actions <= 0)
        throw std::invalid_argument("tabular policy: dimensions must be positive");
    PolicyParams p;
    p.family = PolicyFamily::TabularSoftmax;
    p.n_states = n_states;
    p.n_actions = n_actions;
    p.theta = Vec::Zero(static_cast<Eigen::Index>(n_states) * n_actions);
    return p;
}

inline PolicyParams make_gaussian_policy(int feature_dim, int action_dim, double initial_log_std = 0.0) {
    if (feature_dim <= 0 || action_dim <= 0)
        throw std::invalid_argument("gaussian policy: dimensions must be positive");
    PolicyParams p;
    p.family = PolicyFamily::LinearGaussian;
    p.feature_dim = feature_dim;
    p.action_dim = action_dim;
    p.theta = Vec::Zero(static_cast<Eigen::Index>(action_dim) * feature_dim + action_dim);
    for (int d = 0; d < action_dim; ++d)
        p.theta[static_cast<Eigen::Index>(action_dim) * feature_dim + d] = initial_log_std;
    return p;
}

inline PolicyParams with_theta(const PolicyParams &like, const Vec &theta) {
    if (theta.size() != like.theta.size())
        throw std::invalid_argument("with_theta: parameter length mismatch");
    PolicyParams p = like;
    p.theta = theta;
    return p;
}

/// Initial policy matched to an environment's observation/action spaces.
inline PolicyParams make_policy_for(const Environment &env, double initial_log_std = 0.0) {
    if (env.discrete_actions()) return make_tabular_policy(env.n_states(), env.n_actions());
    return make_gaussian_policy(env.feature_dim(), env.action_dim(), initial_log_std);
}

inline double log_prob(const PolicyParams &p, const Obs &state, const Act &action) {
    if (p.family == PolicyFamily::TabularSoftmax) {
        const Vec l = p.logits(state.index);
        return l[action.index] - logsumexp(l);
    }
    const Vec mu = p.mean(state.features);
    const Vec sd = p.stds();
    double lp = 0.0;
    for (int d = 0; d < p.action_dim; ++d) {
        const double z = (action.value[d] - mu[d]) / sd[d];
        lp += -0.5 * std::log(2.0 * M_PI) - std::log(sd[d]) - 0.5 * z * z;
    }
    return lp;
}

/// Gradient of log pi(action | state) with respect to theta.
inline Vec score(const PolicyParams &p, const Obs &state, const Act &action) {
    Vec g = Vec::Zero(p.dim());
    if (p.family == PolicyFamily::TabularSoftmax) {
        const Vec probs = softmax(p.logits(state.index));
        const Eigen::Index base = static_cast<Eigen::Index>(state.index) * p.n_actions;
        for (int a = 0; a < p.n_actions; ++a) g[base + a] = -probs[a];
        g[base + action.index] += 1.0;
        return g;
    }
    const Vec mu = p.mean(state.features);
    const Vec sd = p.stds();
    for (int d = 0; d < p.action_dim; ++d) {
        const double z = (action.value[d] - mu[d]) / sd[d];
        g.segment(static_cast<Eigen::Index>(d) * p.feature_dim, p.feature_dim) =
            (z / sd[d]) * state.features;
        g[static_cast<Eigen::Index>(p.action_dim) * p.feature_dim + d] = z * z - 1.0;
    }
    return g;
}

/// KL(new || ref) at a single observation, closed form for both families.
inline double kl_at(const PolicyParams &p_new, const PolicyParams &p_ref, const Obs &state) {
    if (p_new.family != p_ref.family)
        throw std::invalid_argument("kl: policy families differ");
    if (p_new.family == PolicyFamily::TabularSoftmax) {
        const Vec ln = p_new.logits(state.index), lr = p_ref.logits(state.index);
        const double zn = logsumexp(ln), zr = logsumexp(lr);
        double kl = 0.0;
        for (int a = 0; a < p_new.n_actions; ++a) {
            const double pn = std::exp(ln[a] - zn);
            if (pn > 0.0) kl += pn * ((ln[a] - zn) - (lr[a] - zr));
        }
        return std::max(kl, 0.0);
    }
    const Vec mu_n = p_new.mean(state.features), mu_r = p_ref.mean(state.features);
    const Vec sd_n = p_new.stds(), sd_r = p_ref.stds();
    double kl = 0.0;
    for (int d = 0; d < p_new.action_dim; ++d) {
        const double vr = sd_r[d] * sd_r[d];
        const double diff = mu_n[d] - mu_r[d];
        kl += std::log(sd_r[d] / sd_n[d]) + (sd_n[d] * sd_n[d] + diff * diff) / (2.0 * vr) - 0.5;
    }
    return std::max(kl, 0.0);
}

/**
 * E_w[KL(pi_new(.|s) || pi_ref(.|s))] over the given states. Weights
 * need not be normalized; they are rescaled to sum to 1.
 */
inline double kl_divergence(const PolicyParams &p_new, const PolicyParams &p_ref,
                            const std::vector<Obs> &states, const Vec &weights) {
    if (static_cast<Eigen::Index>(states.size()) != weights.size())
        throw std::invalid_argument("kl: states/weights length mismatch");
    const double total = weights.sum();
    if (!(total > 0.0)) throw std::invalid_argument("kl: weights must sum to a positive value");
    double kl = 0.0;
    for (size_t i = 0; i < states.size(); ++i) {
        if (weights[static_cast<Eigen::Index>(i)] == 0.0) continue;
        kl += weights[static_cast<Eigen::Index>(i)] * kl_at(p_new, p_ref, states[i]);
    }
    return kl / total;
}

/// Convenience overload for tabular policies: weights indexed by state.
inline double kl_divergence(const PolicyParams &p_new, const PolicyParams &p_ref, const Vec &state_weights) {
    if (p_new.family != PolicyFamily::TabularSoftmax)
        throw std::invalid_argument("kl: state-weight overload requires a tabular policy");
    if (state_weights.size() != p_new.n_states)
        throw std::invalid_argument("kl: state weight length mismatch");
    const double total = state_weights.sum();
    if (!(total > 0.0)) throw std::invalid_argument("kl: weights must sum to a positive value");
    double kl = 0.0;
    for (int s = 0; s < p_new.n_states; ++s) {
        if (state_weights[s] == 0.0) continue;
        Obs o;
        o.index = s;
        kl += state_weights[s] * kl_at(p_new, p_ref, o);
    }
    return kl / total;
}

inline Act sample_action(const PolicyParams &p, const Obs &state, RngStream &rng) {
    Act a;
    if (p.family == PolicyFamily::TabularSoftmax) {
        a.index = rng.categorical(softmax(p.logits(state.index)));
        return a;
    }
    const Vec mu = p.mean(state.features);
    const Vec sd = p.stds();
    a.value.resize(p.action_dim);
    for (int d = 0; d < p.action_dim; ++d) a.value[d] = mu[d] + sd[d] * rng.normal();
    return a;
}

/// Action-probability table of a tabular policy (rows sum to 1).
inline Mat policy_table(const PolicyParams &p) {
    if (p.family != PolicyFamily::TabularSoftmax)
        throw std::invalid_argument("policy_table: tabular policies only");
    Mat t(p.n_states, p.n_actions);
    for (int s = 0; s < p.n_states; ++s) t.row(s) = softmax(p.logits(s)).transpose();
    return t;
}

/**
 * Versioned text format:
 *   pcpo_policy_v1
 *   family tabular_softmax|linear_gaussian
 *   <shape line>
 *   theta <dim doubles>
 */
inline void save_policy(const PolicyParams &p, std::ostream &out) {
    out.precision(17);
    out << "pcpo_policy_v1\n";
    if (p.family == PolicyFamily::TabularSoftmax)
        out << "family tabular_softmax\nstates " << p.n_states << " actions " << p.n_actions << "\n";
    else
        out << "family linear_gaussian\nfeatures " << p.feature_dim << " action_dim " << p.action_dim << "\n";
    out << "theta";
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) out << " " << p.theta[i];
    out << "\n";
}

inline PolicyParams load_policy(std::istream &in) {
    std::string tag;
    in >> tag;
    if (tag != "pcpo_policy_v1")
        throw std::invalid_argument("policy file: unsupported version tag '" + tag + "'");
    std::string key, family;
    in >> key >> family;
    if (key != "family") throw std::invalid_argument("policy file: expected 'family'");
    PolicyParams p;
    if (family == "tabular_softmax") {
        std::string k1, k2;
        int s = 0, a = 0;
        in >> k1 >> s >> k2 >> a;
        if (k1 != "states" || k2 != "actions") throw std::invalid_argument("policy file: bad tabular shape line");
        p = make_tabular_policy(s, a);
    } else if (family == "linear_gaussian") {
        std::string k1, k2;
        int f = 0, d = 0;
        in >> k1 >> f >> k2 >> d;
        if (k1 != "features" || k2 != "action_dim") throw std::invalid_argument("policy file: bad gaussian shape line");
        p = make_gaussian_policy(f, d);
    } else {
        throw std::invalid_argument("policy file: unknown family '" + family + "'");
    }
    in >> key;
    if (key != "theta") throw std::invalid_argument("policy file: expected 'theta'");
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) {
        if (!(in >> p.theta[i])) throw std::invalid_argument("policy file: truncated theta");
    }
    return p;
}

} // namespace pcpo
