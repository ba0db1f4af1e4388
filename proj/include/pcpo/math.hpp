#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace pcpo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

/**
 * Numerically stable log(sum(exp(x))).
 */
inline double logsumexp(const Vec &x) {
    if (x.size() == 0) throw std::invalid_argument("logsumexp: empty input");
    const double m = x.maxCoeff();
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) s += std::exp(x[i] - m);
    return m + std::log(s);
}

inline Vec softmax(const Vec &logits) {
    const double lse = logsumexp(logits);
    Vec p(logits.size());
    for (Eigen::Index i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
    return p;
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}
} // namespace detail

/**
 * Deterministic random stream.
 *
 * Draws are defined directly on top of the mt19937_64 bit stream
 * (uniforms take the top 53 bits, normals use Box-Muller, categorical
 * sampling walks the CDF), so sequences are identical across standard
 * library implementations. Substreams are derived from (seed, index)
 * and are independent of how many episodes any worker processes.
 */
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    /// Derived stream for episode or iteration `index`.
    RngStream substream(std::uint64_t index) const {
        return RngStream(detail::splitmix64(seed_ ^ (0xA5A5A5A5DEADBEEFULL + index)));
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; two uniforms per draw, no cached spare.
    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Index draw from an unnormalized nonnegative weight vector.
    int categorical(const Vec &weights) {
        if (weights.size() == 0) throw std::invalid_argument("categorical: empty weights");
        const double total = weights.sum();
        if (!(total > 0.0) || !std::isfinite(total))
            throw std::invalid_argument("categorical: weights must sum to a positive finite value");
        const double u = uniform() * total;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size() - 1);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace pcpo
