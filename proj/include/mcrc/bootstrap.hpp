#pragma once

#include "mcrc/error.hpp"
#include "mcrc/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace mcrc {

struct Interval {
    double low = 0;
    double high = 0;

    friend bool operator==(const Interval&, const Interval&) = default;
};

struct BootstrapOptions {
    double level = 0.95;
    int n_resamples = 1000;
    std::uint64_t seed = 0;
};

/// Linear-interpolation quantile of an ascending sample, q in [0, 1].
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw Error(ErrorCode::invalid_argument, "quantile of empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

/// Percentile bootstrap over whole groups drawn with replacement.
///
/// `statistic` receives the resampled groups as a vector of pointers and
/// returns a value; non-finite values (e.g. a resample with an empty
/// denominator) are discarded. Resample i draws from its own stream derived
/// from (seed, i), so results do not depend on evaluation order.
template <class Group, class Statistic>
Interval bootstrap_ci(const std::vector<Group>& groups, Statistic&& statistic,
                      const BootstrapOptions& options = {}) {
    if (groups.size() < 2) throw Error(ErrorCode::invalid_argument, "bootstrap needs at least 2 groups");
    if (options.n_resamples < 1000)
        throw Error(ErrorCode::invalid_argument, "bootstrap needs at least 1000 resamples");
    if (!(options.level > 0.0 && options.level < 1.0))
        throw Error(ErrorCode::invalid_argument, "bootstrap level must be in (0, 1)");

    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(options.n_resamples));
    std::vector<const Group*> sample(groups.size());
    for (int i = 0; i < options.n_resamples; ++i) {
        SplitMix64 rng(derive_seed(options.seed, static_cast<std::uint64_t>(i)));
        for (auto& slot : sample) slot = &groups[rng.below(groups.size())];
        const double v = statistic(sample);
        if (std::isfinite(v)) values.push_back(v);
    }
    if (values.empty())
        throw Error(ErrorCode::invalid_argument, "bootstrap statistic undefined on every resample");
    std::sort(values.begin(), values.end());
    const double alpha = 1.0 - options.level;
    return {sorted_quantile(values, alpha / 2.0), sorted_quantile(values, 1.0 - alpha / 2.0)};
}

}  // namespace mcrc
