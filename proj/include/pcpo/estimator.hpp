#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "pcpo/math.hpp"
#include "pcpo/policy.hpp"
#include "pcpo/sampler.hpp"

namespace pcpo {

struct EstimatorConfig {
    double discount = 0.99;
    double lambda_reward = 0.95;
    double lambda_cost = 0.95;
    double value_learning_rate = 3e-4;
    double l2_coeff = 1e-3;
    int minibatch_size = 64;
    int value_fit_epochs = 10;
    bool normalize_reward_advantages = true;

    void validate() const {
        if (!(discount > 0.0) || !(discount < 1.0))
            throw std::invalid_argument("estimator: discount must lie in (0, 1)");
        if (lambda_reward < 0.0 || lambda_reward > 1.0 || lambda_cost < 0.0 || lambda_cost > 1.0)
            throw std::invalid_argument("estimator: GAE lambdas must lie in [0, 1]");
        if (!(value_learning_rate > 0.0) || l2_coeff < 0.0)
            throw std::invalid_argument("estimator: bad value-fit coefficients");
        if (minibatch_size <= 0 || value_fit_epochs < 0)
            throw std::invalid_argument("estimator: bad value-fit sizes");
    }
};

enum class ValueKind { Table, Linear };

/**
 * Value predictor: a per-state table for tabular observations or a
 * linear regressor on observation features. `degenerate` marks a
 * linear fit that fell back to a constant because every feature was
 * constant across the batch.
 */
struct ValueFunction {
    ValueKind kind = ValueKind::Table;
    Vec w;
    bool degenerate = false;
    double constant = 0.0;

    double predict(const Obs &o) const {
        if (kind == ValueKind::Table) return w[o.index];
        if (degenerate) return constant;
        return w.dot(o.features);
    }
};

inline ValueFunction make_value_function(const Environment &env) {
    ValueFunction v;
    if (env.discrete_actions()) {
        v.kind = ValueKind::Table;
        v.w = Vec::Zero(env.n_states());
    } else {
        v.kind = ValueKind::Linear;
        v.w = Vec::Zero(env.feature_dim());
    }
    return v;
}

struct FitResult {
    ValueFunction value;
    std::vector<double> epoch_losses; // full-batch loss after each epoch (front = before training)
    int lr_halvings = 0;
};

namespace detail {

inline double value_loss(const ValueFunction &v, const std::vector<const Obs *> &states,
                         const Vec &targets, double l2) {
    double loss = 0.0;
    for (size_t i = 0; i < states.size(); ++i) {
        const double e = v.predict(*states[i]) - targets[static_cast<Eigen::Index>(i)];
        loss += 0.5 * e * e;
    }
    loss /= static_cast<double>(states.size());
    loss += 0.5 * l2 * v.w.squaredNorm();
    return loss;
}

inline void gather_states(const RolloutBatch &batch, std::vector<const Obs *> &out) {
    out.clear();
    out.reserve(batch.total_steps());
    for (const Episode &ep : batch.episodes)
        for (const StepRecord &rec : ep.steps) out.push_back(&rec.state);
}

inline std::vector<int> deterministic_shuffle(int n, RngStream &rng) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform() * (i + 1));
        std::swap(order[i], order[std::min(j, i)]);
    }
    return order;
}

} // namespace detail

/**
 * Minibatch SGD on the squared loss with L2 regularization, warm
 * started from `init`. Minibatch order is a fixed shuffle derived from
 * the batch seed, so fits are deterministic. An epoch that raises the
 * full-batch loss by more than 1e-8 is rolled back and the learning
 * rate halved, which keeps the recorded loss sequence non-increasing.
 */
inline FitResult fit_value_function(const RolloutBatch &batch, const Vec &targets,
                                    const ValueFunction &init, const EstimatorConfig &cfg,
                                    std::uint64_t shuffle_salt = 0) {
    cfg.validate();
    const int n = batch.total_steps();
    if (targets.size() != n) throw std::invalid_argument("fit_value_function: target length mismatch");
    if (n == 0) throw std::invalid_argument("fit_value_function: empty batch");

    std::vector<const Obs *> states;
    detail::gather_states(batch, states);

    FitResult out;
    out.value = init;
    ValueFunction &v = out.value;

    if (v.kind == ValueKind::Linear) {
        // Constant-feature batches carry no signal; regress to the target mean.
        Vec mean = Vec::Zero(v.w.size());
        for (const Obs *o : states) mean += o->features;
        mean /= static_cast<double>(n);
        double spread = 0.0;
        for (const Obs *o : states) spread = std::max(spread, (o->features - mean).cwiseAbs().maxCoeff());
        if (spread < 1e-12) {
            v.degenerate = true;
            v.constant = targets.mean();
            out.epoch_losses.assign(static_cast<size_t>(cfg.value_fit_epochs) + 1,
                                    detail::value_loss(v, states, targets, 0.0));
            return out;
        }
        v.degenerate = false;
    }

    RngStream rng(detail::splitmix64(batch.seed ^ (0xF17E5EEDULL + shuffle_salt)));
    double lr = cfg.value_learning_rate;
    out.epoch_losses.push_back(detail::value_loss(v, states, targets, cfg.l2_coeff));

    for (int epoch = 0; epoch < cfg.value_fit_epochs; ++epoch) {
        const Vec before = v.w;
        const std::vector<int> order = detail::deterministic_shuffle(n, rng);
        for (int start = 0; start < n; start += cfg.minibatch_size) {
            const int end = std::min(start + cfg.minibatch_size, n);
            Vec grad = cfg.l2_coeff * v.w;
            for (int i = start; i < end; ++i) {
                const Obs &o = *states[order[static_cast<size_t>(i)]];
                const double e = v.predict(o) - targets[order[static_cast<size_t>(i)]];
                if (v.kind == ValueKind::Table) grad[o.index] += e / (end - start);
                else grad += (e / (end - start)) * o.features;
            }
            v.w -= lr * grad;
        }
        const double loss = detail::value_loss(v, states, targets, cfg.l2_coeff);
        if (loss > out.epoch_losses.back() + 1e-8) {
            v.w = before;
            lr *= 0.5;
            ++out.lr_halvings;
            out.epoch_losses.push_back(out.epoch_losses.back());
        } else {
            out.epoch_losses.push_back(loss);
        }
    }
    return out;
}

/**
 * Per-step advantage estimates for the reward and every cost channel,
 * flattened in batch order, plus the value-fit targets (advantage +
 * baseline, always from raw advantages). `adv_reward_normalized` is
 * the policy-gradient copy; it equals the raw advantages when
 * normalization is disabled or the batch standard deviation is
 * negligible. Cost advantages are batch-centered (mean subtracted,
 * scale untouched): their behavior-policy mean estimates zero, and
 * anchoring it there keeps the constraint surrogate at J_C - d even
 * under a poorly fit critic. The subtracted mean is kept in
 * `mean_adv_costs` as a critic-bias diagnostic.
 */
struct AdvantageEstimates {
    Vec adv_reward;
    Vec adv_reward_normalized;
    std::vector<Vec> adv_costs;
    Vec targets_reward;
    std::vector<Vec> targets_costs;
    double mean_adv_reward = 0.0;
    Vec mean_adv_costs;
};

namespace detail {

inline void gae_channel(const RolloutBatch &batch, const ValueFunction &value, double discount,
                        double lambda, bool use_cost, int channel, Vec &adv, Vec &targets) {
    const int n = batch.total_steps();
    adv.resize(n);
    targets.resize(n);
    Eigen::Index base = 0;
    for (const Episode &ep : batch.episodes) {
        const int len = static_cast<int>(ep.steps.size());
        double running = 0.0;
        for (int t = len - 1; t >= 0; --t) {
            const StepRecord &rec = ep.steps[static_cast<size_t>(t)];
            const double x = use_cost ? rec.costs[channel] : rec.reward;
            const double v_s = value.predict(rec.state);
            const double v_next = rec.terminal ? 0.0 : value.predict(rec.next_state);
            const double delta = x + discount * v_next - v_s;
            running = delta + discount * lambda * (rec.terminal ? 0.0 : running);
            adv[base + t] = running;
            targets[base + t] = running + v_s;
        }
        base += len;
    }
}

} // namespace detail

inline AdvantageEstimates gae(const RolloutBatch &batch, const ValueFunction &value_reward,
                              const std::vector<ValueFunction> &value_costs, const EstimatorConfig &cfg) {
    cfg.validate();
    if (static_cast<int>(value_costs.size()) != batch.cost_channels)
        throw std::invalid_argument("gae: one cost value function per channel required");
    AdvantageEstimates est;
    detail::gae_channel(batch, value_reward, cfg.discount, cfg.lambda_reward, false, 0,
                        est.adv_reward, est.targets_reward);
    est.adv_costs.resize(value_costs.size());
    est.targets_costs.resize(value_costs.size());
    est.mean_adv_costs.resize(static_cast<Eigen::Index>(value_costs.size()));
    for (size_t i = 0; i < value_costs.size(); ++i) {
        detail::gae_channel(batch, value_costs[i], cfg.discount, cfg.lambda_cost, true,
                            static_cast<int>(i), est.adv_costs[i], est.targets_costs[i]);
        est.mean_adv_costs[static_cast<Eigen::Index>(i)] = est.adv_costs[i].mean();
        est.adv_costs[i].array() -= est.mean_adv_costs[static_cast<Eigen::Index>(i)];
    }
    est.mean_adv_reward = est.adv_reward.mean();

    est.adv_reward_normalized = est.adv_reward;
    if (cfg.normalize_reward_advantages && est.adv_reward.size() > 1) {
        const double mean = est.adv_reward.mean();
        const double sd = std::sqrt((est.adv_reward.array() - mean).square().sum() /
                                    static_cast<double>(est.adv_reward.size()));
        if (sd > 1e-8) est.adv_reward_normalized = (est.adv_reward.array() - mean) / sd;
    }
    return est;
}

constexpr double kImportanceWeightCap = 1e6;

struct SurrogateValue {
    double value = 0.0;
    long clipped = 0; // importance weights capped at 1e6
};

namespace detail {

template <typename PerStep>
inline long for_each_step(const RolloutBatch &batch, PerStep &&fn) {
    long flat = 0;
    for (const Episode &ep : batch.episodes)
        for (const StepRecord &rec : ep.steps) fn(rec, flat++);
    return flat;
}

} // namespace detail

/**
 * Importance-weighted surrogate: mean over steps of
 * exp(logp_new - logp_behavior) * advantage.
 */
inline SurrogateValue surrogate_objective(const RolloutBatch &batch, const Vec &adv,
                                          const PolicyParams &p_new) {
    const int n = batch.total_steps();
    if (adv.size() != n) throw std::invalid_argument("surrogate: advantage length mismatch");
    if (n == 0) throw std::invalid_argument("surrogate: empty batch");
    SurrogateValue out;
    detail::for_each_step(batch, [&](const StepRecord &rec, long flat) {
        double w = std::exp(log_prob(p_new, rec.state, rec.action) - rec.log_prob_behavior);
        if (w > kImportanceWeightCap) {
            w = kImportanceWeightCap;
            ++out.clipped;
        }
        out.value += w * adv[flat];
    });
    out.value /= n;
    return out;
}

/**
 * Constraint surrogate g_i(theta) = J_C + 1/(1-gamma) * IS-mean of the
 * cost advantages - threshold. With centered cost advantages the middle
 * term vanishes at the behavior policy, so g(theta_old) = J_C - d.
 */
inline SurrogateValue constraint_surrogate(const RolloutBatch &batch, const Vec &adv_cost,
                                           double jc_hat, double threshold, double discount,
                                           const PolicyParams &p_new) {
    SurrogateValue s = surrogate_objective(batch, adv_cost, p_new);
    s.value = jc_hat + s.value / (1.0 - discount) - threshold;
    return s;
}

struct PolicyGradients {
    Vec grad_f;
    std::vector<Vec> grad_g;
};

/**
 * Gradients of the surrogates at the behavior policy: the importance
 * weight is 1 there, so grad f = mean(score * adv) and each
 * grad g_i = 1/(1-gamma) * mean(score * cost adv). The reward side
 * uses the normalized advantages, matching the objective the line
 * search evaluates.
 */
inline PolicyGradients gradients(const RolloutBatch &batch, const AdvantageEstimates &est,
                                 const PolicyParams &p_old, double discount) {
    const int n = batch.total_steps();
    if (n == 0) throw std::invalid_argument("gradients: empty batch");
    PolicyGradients out;
    out.grad_f = Vec::Zero(p_old.dim());
    out.grad_g.assign(est.adv_costs.size(), Vec::Zero(p_old.dim()));
    detail::for_each_step(batch, [&](const StepRecord &rec, long flat) {
        const Vec sc = score(p_old, rec.state, rec.action);
        out.grad_f += est.adv_reward_normalized[flat] * sc;
        for (size_t i = 0; i < est.adv_costs.size(); ++i)
            out.grad_g[i] += est.adv_costs[i][flat] * sc;
    });
    out.grad_f /= n;
    for (Vec &g : out.grad_g) g /= static_cast<double>(n) * (1.0 - discount);
    return out;
}

/**
 * Exact enumeration mode for tabular policies: sums over all (s, a)
 * weighted by the given state weights and pi_theta instead of by
 * batch samples.
 */
inline double surrogate_exact(const Vec &state_weights, const Mat &adv_table, const PolicyParams &p) {
    if (p.family != PolicyFamily::TabularSoftmax)
        throw std::invalid_argument("surrogate_exact: tabular policies only");
    if (state_weights.size() != p.n_states || adv_table.rows() != p.n_states ||
        adv_table.cols() != p.n_actions)
        throw std::invalid_argument("surrogate_exact: shape mismatch");
    double f = 0.0;
    for (int s = 0; s < p.n_states; ++s) {
        if (state_weights[s] == 0.0) continue;
        f += state_weights[s] * softmax(p.logits(s)).dot(adv_table.row(s).transpose());
    }
    return f;
}

inline Vec surrogate_gradient_exact(const Vec &state_weights, const Mat &adv_table, const PolicyParams &p) {
    if (p.family != PolicyFamily::TabularSoftmax)
        throw std::invalid_argument("surrogate_gradient_exact: tabular policies only");
    Vec grad = Vec::Zero(p.dim());
    for (int s = 0; s < p.n_states; ++s) {
        if (state_weights[s] == 0.0) continue;
        const Vec probs = softmax(p.logits(s));
        const double mean_adv = probs.dot(adv_table.row(s).transpose());
        for (int a = 0; a < p.n_actions; ++a)
            grad[static_cast<Eigen::Index>(s) * p.n_actions + a] =
                state_weights[s] * probs[a] * (adv_table(s, a) - mean_adv);
    }
    return grad;
}

inline double constraint_surrogate_exact(const Vec &state_weights, const Mat &adv_cost_table,
                                         double jc, double threshold, double discount,
                                         const PolicyParams &p) {
    return jc + surrogate_exact(state_weights, adv_cost_table, p) / (1.0 - discount) - threshold;
}

} // namespace pcpo
