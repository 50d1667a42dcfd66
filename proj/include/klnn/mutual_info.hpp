#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "klnn/cloud.hpp"
#include "klnn/entropy.hpp"
#include "klnn/error.hpp"
#include "klnn/neighbors.hpp"
#include "klnn/parallel.hpp"
#include "klnn/special.hpp"

namespace klnn {

/// Paired samples (X_i, Y_i); rows correspond by index.
struct JointSample {
    PointCloud x;
    PointCloud y;

    JointSample(PointCloud xs, PointCloud ys) : x(std::move(xs)), y(std::move(ys)) {
        if (x.n() != y.n())
            throw InvalidArgument("JointSample: X and Y row counts differ");
    }

    int n() const { return x.n(); }
    PointCloud joint() const { return PointCloud::concat(x, y); }
};

/// Marginal-bias handling for the coupled-bandwidth marginal entropies.
/// No correction is applied by default: the coupled bandwidths do not follow
/// the marginal order-statistic limit, so the klnn constants do not apply.
enum class MarginalBias { none, table };

struct MiConfig {
    EstimatorConfig entropy;  // shared by all component entropy calls
    MarginalBias marginal_bias = MarginalBias::none;
};

/// I = H(X) + H(Y) - H(X,Y), each term the classical k-NN estimate.
inline EstimateReport mi_3kl(const JointSample& js, int k,
                             const EstimatorConfig& base = {}) {
    const EstimateReport hx = entropy_kl(js.x, k, base);
    const EstimateReport hy = entropy_kl(js.y, k, base);
    const EstimateReport hxy = entropy_kl(js.joint(), k, base);
    EstimateReport rep;
    rep.value = hx.value + hy.value - hxy.value;
    rep.n = js.n();
    rep.d = js.x.d() + js.y.d();
    rep.estimator = "3kl";
    rep.k = k;
    rep.seed = base.seed;
    rep.notes.emplace_back("H(X)", std::to_string(hx.value));
    rep.notes.emplace_back("H(Y)", std::to_string(hy.value));
    rep.notes.emplace_back("H(X,Y)", std::to_string(hxy.value));
    return rep;
}

/// The coupled-bandwidth k-NN mutual information estimator ("algorithm 1"):
///   I = psi(k) + psi(n) - mean_i[ psi(n_x(i)+1) + psi(n_y(i)+1) ],
/// where the joint metric is the max of the two block Euclidean norms and
/// n_x(i) counts samples with ||X_j - X_i|| strictly inside the joint k-NN
/// radius of i (symmetrically for y).
inline EstimateReport mi_ksg(const JointSample& js, int k,
                             const EstimatorConfig& base = {}) {
    const int n = js.n();
    if (k < 1) throw InvalidArgument("mi_ksg: k must be >= 1");
    if (n < k + 1) throw InvalidArgument("mi_ksg: need n >= k + 1");
    js.x.check_finite();
    js.y.check_finite();
    std::vector<double> terms(static_cast<std::size_t>(n));
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t lo, std::size_t hi) {
            std::vector<double> dx(static_cast<std::size_t>(n));
            std::vector<double> dy(static_cast<std::size_t>(n));
            std::vector<std::pair<double, int>> joint;
            joint.reserve(static_cast<std::size_t>(n) - 1);
            for (std::size_t ui = lo; ui < hi; ++ui) {
                const int i = static_cast<int>(ui);
                joint.clear();
                for (int j = 0; j < n; ++j) {
                    dx[static_cast<std::size_t>(j)] =
                        std::sqrt(sq_dist(js.x.row(i), js.x.row(j)));
                    dy[static_cast<std::size_t>(j)] =
                        std::sqrt(sq_dist(js.y.row(i), js.y.row(j)));
                    if (j != i)
                        joint.emplace_back(std::max(dx[static_cast<std::size_t>(j)],
                                                    dy[static_cast<std::size_t>(j)]),
                                           j);
                }
                std::nth_element(joint.begin(), joint.begin() + (k - 1), joint.end());
                const double eps = joint[static_cast<std::size_t>(k) - 1].first;
                if (!(eps > 0.0))
                    throw DegenerateBandwidth(
                        "mi_ksg: zero joint k-NN radius at sample " + std::to_string(i) +
                        " (duplicate joint points)");
                int nx = 0, ny = 0;
                for (int j = 0; j < n; ++j) {
                    if (j == i) continue;
                    if (dx[static_cast<std::size_t>(j)] < eps) ++nx;
                    if (dy[static_cast<std::size_t>(j)] < eps) ++ny;
                }
                terms[ui] = digamma(nx + 1.0) + digamma(ny + 1.0);
            }
        },
        base.workers);
    double mean = 0.0;
    for (double t : terms) mean += t;
    mean /= n;
    EstimateReport rep;
    rep.value = digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) - mean;
    rep.n = n;
    rep.d = js.x.d() + js.y.d();
    if (base.keep_per_point) rep.per_point = terms;
    rep.estimator = "ksg";
    rep.k = k;
    rep.seed = base.seed;
    rep.notes.emplace_back("joint_metric", "max-of-marginals");
    return rep;
}

/// I = H(X) + H(Y) - H(X,Y) with three independent klnn estimates. With a
/// table bias source this needs entries for (k, d_x), (k, d_y), (k, d_x+d_y).
inline EstimateReport mi_3lnn(const JointSample& js, const MiConfig& cfg) {
    const EstimateReport hx = entropy_klnn(js.x, cfg.entropy);
    const EstimateReport hy = entropy_klnn(js.y, cfg.entropy);
    const EstimateReport hxy = entropy_klnn(js.joint(), cfg.entropy);
    EstimateReport rep;
    rep.value = hx.value + hy.value - hxy.value;
    rep.n = js.n();
    rep.d = js.x.d() + js.y.d();
    rep.skipped = hx.skipped + hy.skipped + hxy.skipped;
    rep.clamped = hx.clamped + hy.clamped + hxy.clamped;
    rep.fallbacks = hx.fallbacks + hy.fallbacks + hxy.fallbacks;
    rep.estimator = "3lnn";
    rep.k = cfg.entropy.k;
    rep.m_used = hxy.m_used;
    rep.seed = cfg.entropy.seed;
    rep.notes.emplace_back("H(X)", std::to_string(hx.value));
    rep.notes.emplace_back("H(Y)", std::to_string(hy.value));
    rep.notes.emplace_back("H(X,Y)", std::to_string(hxy.value));
    return rep;
}

/// The coupled construction: the joint entropy is the klnn estimate, the
/// marginal entropies reuse the joint-space radii rho_{k,i}(X,Y) as
/// bandwidths. The joint radius generally exceeds the budget-th marginal
/// neighbor distance, so the marginal calls run with the full contributor
/// set (m = n - 1): truncating at the log-n budget inside the kernel's
/// reach would discard most of the local mass. Joint coupling metric is
/// Euclidean on the concatenated vector; reported in the notes alongside
/// KSG's max metric for contrast.
inline EstimateReport mi_lnn_ksg(const JointSample& js, const MiConfig& cfg) {
    const PointCloud joint = js.joint();
    const EstimateReport hxy = entropy_klnn(joint, cfg.entropy);
    const int m_used = detail::resolve_budget(cfg.entropy, joint.n());
    const std::vector<double> radii =
        coupled_radii(joint, cfg.entropy.k, std::min(m_used, joint.n() - 1));
    EstimatorConfig marginal_cfg = cfg.entropy;
    marginal_cfg.m = js.n() - 1;
    if (cfg.marginal_bias == MarginalBias::none) {
        marginal_cfg.bias_source = BiasSource::none;
        marginal_cfg.bias_value = 0.0;
    }
    const EstimateReport hx = entropy_lnn_coupled(js.x, radii, marginal_cfg);
    const EstimateReport hy = entropy_lnn_coupled(js.y, radii, marginal_cfg);
    EstimateReport rep;
    rep.value = hx.value + hy.value - hxy.value;
    rep.n = js.n();
    rep.d = js.x.d() + js.y.d();
    rep.skipped = hx.skipped + hy.skipped + hxy.skipped;
    rep.clamped = hx.clamped + hy.clamped + hxy.clamped;
    rep.fallbacks = hx.fallbacks + hy.fallbacks + hxy.fallbacks;
    rep.estimator = "lnn-ksg";
    rep.k = cfg.entropy.k;
    rep.m_used = hxy.m_used;
    rep.seed = cfg.entropy.seed;
    rep.notes.emplace_back("coupling_metric", "euclidean-joint");
    rep.notes.emplace_back("ksg_metric", "max-of-marginals");
    rep.notes.emplace_back("marginal_bias",
                           cfg.marginal_bias == MarginalBias::none ? "none" : "table");
    rep.notes.emplace_back("H(X)", std::to_string(hx.value));
    rep.notes.emplace_back("H(Y)", std::to_string(hy.value));
    rep.notes.emplace_back("H(X,Y)", std::to_string(hxy.value));
    return rep;
}

}  // namespace klnn
