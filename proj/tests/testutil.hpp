// Shared helpers for the test suites. The reference estimators here are
// deliberately naive re-implementations (straight loops, no index
// structures, no shared code with the library) so they can serve as
// independent oracles.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "klnn/cloud.hpp"
#include "klnn/rng.hpp"

namespace testutil {

inline klnn::PointCloud random_cloud(int n, int d, std::uint64_t seed,
                                     bool gaussian = true) {
    klnn::SplitMix64 rng(seed);
    klnn::PointCloud cloud(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            cloud.at(i, j) = gaussian ? rng.normal() : rng.uniform();
    return cloud;
}

struct BruteNeighbor {
    int index;
    double distance;
};

/// O(n^2) exact k-NN with (distance, index) tie-breaking.
inline std::vector<BruteNeighbor> brute_knn(const klnn::PointCloud& cloud, int center,
                                            int m) {
    std::vector<BruteNeighbor> all;
    for (int j = 0; j < cloud.n(); ++j) {
        if (j == center) continue;
        double sq = 0.0;
        for (int a = 0; a < cloud.d(); ++a) {
            const double diff = cloud.at(j, a) - cloud.at(center, a);
            sq += diff * diff;
        }
        all.push_back({j, std::sqrt(sq)});
    }
    std::sort(all.begin(), all.end(), [](const BruteNeighbor& a, const BruteNeighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
    });
    if (static_cast<int>(all.size()) > m) all.resize(static_cast<std::size_t>(m));
    return all;
}

/// Two-sided Kolmogorov-Smirnov statistic of samples against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> samples, Cdf&& cdf) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        ks = std::max(ks, std::abs(f - static_cast<double>(i) / n));
        ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return ks;
}

}  // namespace testutil
