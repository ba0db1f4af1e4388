#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "pcpo/env.hpp"
#include "pcpo/math.hpp"
#include "pcpo/policy.hpp"

namespace pcpo {

struct StepRecord {
    Obs state;
    Act action;
    double reward = 0.0;
    Vec costs;
    double log_prob_behavior = 0.0;
    Obs next_state;
    bool terminal = false;
    bool truncated = false;
};

struct Episode {
    std::vector<StepRecord> steps;
};

struct RolloutBatch {
    std::vector<Episode> episodes;
    std::uint64_t seed = 0;
    int horizon = 0;
    int cost_channels = 0;

    int total_steps() const {
        int n = 0;
        for (const Episode &ep : episodes) n += static_cast<int>(ep.steps.size());
        return n;
    }
};

/**
 * Collect `n_episodes` rollouts of at most `horizon` steps under the
 * given policy. Each episode draws from a dedicated substream derived
 * from (base seed, episode index), so the batch is identical no matter
 * how episodes would be distributed across workers. Episodes that
 * reach the horizon without terminating are marked truncated on their
 * final step so advantage estimation bootstraps from the next state.
 */
inline RolloutBatch collect(const Environment &env, const PolicyParams &params,
                            int n_episodes, int horizon, const RngStream &base) {
    if (n_episodes <= 0 || horizon <= 0)
        throw std::invalid_argument("collect: episode count and horizon must be positive");
    RolloutBatch batch;
    batch.seed = base.seed();
    batch.horizon = horizon;
    batch.cost_channels = env.num_cost_channels();
    batch.episodes.resize(n_episodes);
    for (int e = 0; e < n_episodes; ++e) {
        RngStream rng = base.substream(static_cast<std::uint64_t>(e));
        Episode &ep = batch.episodes[e];
        ep.steps.reserve(horizon);
        Obs state = env.reset(rng);
        for (int t = 0; t < horizon; ++t) {
            StepRecord rec;
            rec.state = state;
            rec.action = sample_action(params, state, rng);
            rec.log_prob_behavior = log_prob(params, state, rec.action);
            if (!std::isfinite(rec.log_prob_behavior))
                throw std::runtime_error("collect: non-finite behavior log-probability");
            StepOutcome outcome = env.step(state, rec.action, rng);
            rec.reward = outcome.reward;
            rec.costs = outcome.costs;
            rec.next_state = outcome.next;
            rec.terminal = outcome.terminal;
            rec.truncated = !outcome.terminal && (t + 1 == horizon);
            state = rec.next_state;
            ep.steps.push_back(rec);
            if (rec.terminal) break;
        }
    }
    return batch;
}

/// Discounted cost return of each episode for one channel.
inline Vec episode_cost_returns(const RolloutBatch &batch, double discount, int channel) {
    if (channel < 0 || channel >= batch.cost_channels)
        throw std::invalid_argument("episode_cost_returns: channel out of range");
    Vec out(static_cast<Eigen::Index>(batch.episodes.size()));
    for (size_t e = 0; e < batch.episodes.size(); ++e) {
        double acc = 0.0, w = 1.0;
        for (const StepRecord &rec : batch.episodes[e].steps) {
            acc += w * rec.costs[channel];
            w *= discount;
        }
        out[static_cast<Eigen::Index>(e)] = acc;
    }
    return out;
}

inline Vec episode_reward_returns(const RolloutBatch &batch, double discount) {
    Vec out(static_cast<Eigen::Index>(batch.episodes.size()));
    for (size_t e = 0; e < batch.episodes.size(); ++e) {
        double acc = 0.0, w = 1.0;
        for (const StepRecord &rec : batch.episodes[e].steps) {
            acc += w * rec.reward;
            w *= discount;
        }
        out[static_cast<Eigen::Index>(e)] = acc;
    }
    return out;
}

/// Empirical estimate of J_C for one channel: mean episode discounted cost return.
inline double average_cost_return(const RolloutBatch &batch, double discount, int channel) {
    if (batch.episodes.empty()) throw std::invalid_argument("average_cost_return: empty batch");
    return episode_cost_returns(batch, discount, channel).mean();
}

inline double average_reward_return(const RolloutBatch &batch, double discount) {
    if (batch.episodes.empty()) throw std::invalid_argument("average_reward_return: empty batch");
    return episode_reward_returns(batch, discount).mean();
}

/// Empirical state-visitation weights over a tabular batch (sums to 1).
inline Vec state_visitation(const RolloutBatch &batch, int n_states) {
    Vec w = Vec::Zero(n_states);
    for (const Episode &ep : batch.episodes)
        for (const StepRecord &rec : ep.steps) {
            if (rec.state.index < 0 || rec.state.index >= n_states)
                throw std::invalid_argument("state_visitation: non-tabular batch");
            w[rec.state.index] += 1.0;
        }
    const double total = w.sum();
    if (total > 0.0) w /= total;
    return w;
}

/**
 * Line-delimited dump for offline auditing, one step per record:
 *   episode step state action reward cost_0..cost_{m-1} logp terminal truncated [adv...]
 * Tabular states/actions print as indices, continuous ones as
 * space-separated components.
 */
inline void dump_batch(const RolloutBatch &batch, std::ostream &out,
                       const Vec *adv_reward = nullptr, const std::vector<Vec> *adv_costs = nullptr) {
    out.precision(17);
    Eigen::Index flat = 0;
    for (size_t e = 0; e < batch.episodes.size(); ++e) {
        const Episode &ep = batch.episodes[e];
        for (size_t t = 0; t < ep.steps.size(); ++t, ++flat) {
            const StepRecord &rec = ep.steps[t];
            out << e << " " << t << " ";
            if (rec.state.index >= 0) out << rec.state.index;
            else
                for (Eigen::Index i = 0; i < rec.state.features.size(); ++i)
                    out << (i ? " " : "") << rec.state.features[i];
            out << " ";
            if (rec.action.index >= 0) out << rec.action.index;
            else
                for (Eigen::Index i = 0; i < rec.action.value.size(); ++i)
                    out << (i ? " " : "") << rec.action.value[i];
            out << " " << rec.reward;
            for (Eigen::Index i = 0; i < rec.costs.size(); ++i) out << " " << rec.costs[i];
            out << " " << rec.log_prob_behavior << " " << (rec.terminal ? 1 : 0) << " "
                << (rec.truncated ? 1 : 0);
            if (adv_reward) out << " " << (*adv_reward)[flat];
            if (adv_costs)
                for (const Vec &ac : *adv_costs) out << " " << ac[flat];
            out << "\n";
        }
    }
}

} // namespace pcpo
