#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "klnn/bias.hpp"
#include "klnn/cloud.hpp"
#include "klnn/density.hpp"
#include "klnn/error.hpp"
#include "klnn/neighbors.hpp"
#include "klnn/parallel.hpp"
#include "klnn/special.hpp"

namespace klnn {

enum class BiasSource { none, inline_constant, table };

struct EstimatorConfig {
    int k = 5;
    int m = 0;                 // explicit truncation budget; 0 = auto
    double m_multiplier = 1.0; // auto budget = ceil(m_multiplier * ln n)
    BiasSource bias_source = BiasSource::none;
    double bias_value = 0.0;   // used when bias_source == inline_constant
    const BiasTable* bias_table = nullptr;
    SingularSigmaPolicy sigma_policy = SingularSigmaPolicy::fallback_p1;
    double clamp = kDefaultClamp;
    bool keep_per_point = false;
    unsigned workers = 0;
    std::uint64_t seed = 0;    // echoed into reports for replay bookkeeping
};

struct EstimateReport {
    double value = 0.0;  // nats
    int n = 0;
    int d = 0;
    std::vector<double> per_point;  // per-sample -log fhat terms (pre-bias)
    int skipped = 0;
    int clamped = 0;
    int fallbacks = 0;     // singular-sigma points resolved by the p1 fallback
    bool m_truncated = false;  // requested m exceeded n-1
    std::string estimator;
    int k = 0;
    int m_used = 0;
    double bias_subtracted = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> notes;

    double value_bits() const { return value / std::log(2.0); }
};

namespace detail {

inline int resolve_budget(const EstimatorConfig& cfg, int n) {
    int m = cfg.m;
    if (m <= 0)
        m = static_cast<int>(std::ceil(cfg.m_multiplier * std::log(static_cast<double>(n))));
    return std::max(m, cfg.k);
}

inline double resolve_bias(const EstimatorConfig& cfg, int k, int d) {
    switch (cfg.bias_source) {
        case BiasSource::none:
            return 0.0;
        case BiasSource::inline_constant:
            return cfg.bias_value;
        case BiasSource::table:
            if (!cfg.bias_table)
                throw MissingEntry("bias_source is table but no table is attached");
            return cfg.bias_table->get(k, d).mean;
    }
    return 0.0;
}

struct TermStats {
    std::vector<double> terms;   // NaN where skipped
    int skipped = 0;
    int clamped = 0;
    int fallbacks = 0;
};

/// Per-point -log fhat for the local-likelihood resubstitution family.
/// degree selects how much of the closed form applies (0: kernel mass only,
/// 1: adds the mean shift, 2: the full covariance-corrected form).
/// Contributors are the nearest neighbors up to budget m.
inline TermStats resub_terms(const PointCloud& cloud, const NeighborIndex& index,
                             const std::vector<double>& bandwidths, int budget,
                             int degree, SingularSigmaPolicy policy, double clamp,
                             unsigned workers) {
    const int n = cloud.n();
    const int d = cloud.d();
    const double log_n = std::log(static_cast<double>(n));
    TermStats out;
    out.terms.assign(static_cast<std::size_t>(n),
                     std::numeric_limits<double>::quiet_NaN());
    std::vector<int> skipped(static_cast<std::size_t>(n), 0);
    std::vector<int> clamped(static_cast<std::size_t>(n), 0);
    std::vector<int> fell_back(static_cast<std::size_t>(n), 0);

    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t lo, std::size_t hi) {
            for (std::size_t ui = lo; ui < hi; ++ui) {
                const int i = static_cast<int>(ui);
                const double h = bandwidths[ui];
                if (!(h > 0.0))
                    throw DegenerateBandwidth(
                        "resubstitution: zero bandwidth at sample " + std::to_string(i) +
                        " (duplicate points; consider the jitter option)");
                const NeighborList nl = index.knn_of_sample(i, std::min(budget, n - 1));
                const LocalMoments mom = local_moments(cloud, cloud.row(i), h, nl);
                if (!(mom.s0 > 0.0)) {
                    // every weight underflowed (bandwidth far below the local
                    // spacing): the fitted density is 0, -log fhat clamps high
                    out.terms[ui] = clamp;
                    clamped[ui] = 1;
                    continue;
                }
                double term = log_n + (d / 2.0) * kLog2Pi + d * std::log(h) -
                              std::log(mom.s0);
                if (degree == 1) {
                    term += 0.5 * mom.s1.dot(mom.s1) / (mom.s0 * mom.s0);
                } else if (degree == 2) {
                    bool ok = false;
                    try {
                        const SmallMatrix sigma = mom.sigma();
                        auto [det, inv] = det_inv_sym(sigma);
                        if (det > 0.0) {
                            term += 0.5 * std::log(det) +
                                    0.5 * inv.quadratic_form(mom.s1) / (mom.s0 * mom.s0);
                            ok = true;
                        }
                    } catch (const SingularMatrix&) {
                    }
                    if (!ok) {
                        switch (policy) {
                            case SingularSigmaPolicy::error:
                                throw SingularSigma(
                                    "resubstitution: singular Sigma at sample " +
                                    std::to_string(i));
                            case SingularSigmaPolicy::fallback_p1:
                                term += 0.5 * mom.s1.dot(mom.s1) / (mom.s0 * mom.s0);
                                fell_back[ui] = 1;
                                break;
                            case SingularSigmaPolicy::skip:
                                skipped[ui] = 1;
                                continue;
                        }
                    }
                }
                if (term > clamp) {
                    term = clamp;
                    clamped[ui] = 1;
                } else if (term < -clamp) {
                    term = -clamp;
                    clamped[ui] = 1;
                }
                out.terms[ui] = term;
            }
        },
        workers);

    for (int i = 0; i < n; ++i) {
        out.skipped += skipped[static_cast<std::size_t>(i)];
        out.clamped += clamped[static_cast<std::size_t>(i)];
        out.fallbacks += fell_back[static_cast<std::size_t>(i)];
    }
    return out;
}

inline EstimateReport finish_report(const PointCloud& cloud, TermStats&& stats,
                                    const EstimatorConfig& cfg, double bias,
                                    std::string name, int m_used) {
    const int n = cloud.n();
    if (stats.skipped == n)
        throw EstimationFailure(name + ": every sample was skipped");
    double sum = 0.0;
    std::vector<double> kept;
    if (cfg.keep_per_point) kept.reserve(static_cast<std::size_t>(n - stats.skipped));
    for (double t : stats.terms) {
        if (std::isnan(t)) continue;
        sum += t;
        if (cfg.keep_per_point) kept.push_back(t);
    }
    EstimateReport rep;
    rep.value = sum / (n - stats.skipped) - bias;
    rep.n = n;
    rep.d = cloud.d();
    rep.per_point = std::move(kept);
    rep.skipped = stats.skipped;
    rep.clamped = stats.clamped;
    rep.fallbacks = stats.fallbacks;
    rep.m_truncated = m_used > n - 1;
    rep.estimator = std::move(name);
    rep.k = cfg.k;
    rep.m_used = std::min(m_used, n - 1);
    rep.bias_subtracted = bias;
    rep.seed = cfg.seed;
    return rep;
}

}  // namespace detail

/// Degree-2 resubstitution with externally supplied per-point bandwidths
/// (typically joint-space k-NN radii) in place of the marginal rho_{k,i};
/// contributor sets keep the same nearest-neighbor budget, so supplying the
/// marginal radii reproduces entropy_klnn bit for bit. Callers whose
/// bandwidths exceed the budget-th neighbor distance must widen cfg.m or
/// the truncation discards real kernel mass (see mi_lnn_ksg). Bias handling
/// follows cfg.bias_source; the default none reflects that coupled
/// bandwidths do not follow the marginal order-statistic limit.
inline EstimateReport entropy_lnn_coupled(const PointCloud& cloud,
                                          const std::vector<double>& bandwidths,
                                          const EstimatorConfig& cfg) {
    if (cfg.k < 3) throw UnsupportedK("entropy_lnn_coupled: k must be >= 3");
    const int n = cloud.n();
    if (n < cfg.k + 2)
        throw InvalidArgument("entropy_lnn_coupled: need n >= k + 2");
    if (static_cast<int>(bandwidths.size()) != n)
        throw InvalidArgument("entropy_lnn_coupled: one bandwidth per sample required");
    const int m_used = detail::resolve_budget(cfg, n);
    const double bias = detail::resolve_bias(cfg, cfg.k, cloud.d());
    NeighborIndex index(cloud);
    detail::TermStats stats =
        detail::resub_terms(cloud, index, bandwidths, std::min(m_used, n - 1), 2,
                            cfg.sigma_policy, cfg.clamp, cfg.workers);
    return detail::finish_report(cloud, std::move(stats), cfg, bias, "lnn-coupled",
                                 m_used);
}

/// The bias-corrected degree-2 estimator:
///   H = -(1/n) sum_i { log S0_i / (n (2pi)^{d/2} rho_{k,i}^d |Sigma_i|^{1/2})
///                      - S1_i^T Sigma_i^{-1} S1_i / (2 S0_i^2) }  -  B_{k,d},
/// moments over the m nearest neighbors at bandwidth rho_{k,i}.
inline EstimateReport entropy_klnn(const PointCloud& cloud, const EstimatorConfig& cfg) {
    if (cfg.k < 3) throw UnsupportedK("entropy_klnn: k must be >= 3");
    const int n = cloud.n();
    if (n < cfg.k + 2) throw InvalidArgument("entropy_klnn: need n >= k + 2");
    const int m_used = detail::resolve_budget(cfg, n);
    const int m_eff = std::min(m_used, n - 1);
    const double bias = detail::resolve_bias(cfg, cfg.k, cloud.d());
    NeighborIndex index(cloud);
    std::vector<double> bandwidths(static_cast<std::size_t>(n));
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i)
                bandwidths[i] =
                    index.knn_of_sample(static_cast<int>(i), m_eff).rho(cfg.k);
        },
        cfg.workers);
    detail::TermStats stats = detail::resub_terms(
        cloud, index, bandwidths, m_eff, 2, cfg.sigma_policy, cfg.clamp, cfg.workers);
    return detail::finish_report(cloud, std::move(stats), cfg, bias, "klnn", m_used);
}

/// Classical k-NN resubstitution estimator:
///   H = (d/n) sum_i log rho_{k,i} + log c_d + log n - psi(k).
inline EstimateReport entropy_kl(const PointCloud& cloud, int k,
                                 const EstimatorConfig& base = {}) {
    if (k < 1) throw InvalidArgument("entropy_kl: k must be >= 1");
    const int n = cloud.n();
    if (n < k + 1) throw InvalidArgument("entropy_kl: need n >= k + 1");
    const int d = cloud.d();
    NeighborIndex index(cloud);
    const double log_cd = log_unit_ball_volume(d);
    const double log_n = std::log(static_cast<double>(n));
    const double log_k = std::log(static_cast<double>(k));
    std::vector<double> terms(static_cast<std::size_t>(n));
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const double rho = index.knn_of_sample(static_cast<int>(i), k).rho(k);
                if (!(rho > 0.0))
                    throw DegenerateBandwidth(
                        "entropy_kl: zero k-NN distance at sample " +
                        std::to_string(i) + " (duplicate points)");
                // per-point -log fhat of the k-NN density estimate
                terms[i] = d * std::log(rho) + log_cd + log_n - log_k;
            }
        },
        base.workers);
    double sum = 0.0;
    for (double t : terms) sum += t;
    EstimateReport rep;
    rep.value = sum / n - (digamma(static_cast<double>(k)) - log_k);
    rep.n = n;
    rep.d = d;
    if (base.keep_per_point) rep.per_point = terms;
    rep.estimator = "kl";
    rep.k = k;
    rep.m_used = k;
    rep.bias_subtracted = digamma(static_cast<double>(k)) - log_k;
    rep.seed = base.seed;
    return rep;
}

enum class BandwidthRule { fixed, rot, pow_d4, pow_d2 };

struct KdeBandwidth {
    BandwidthRule rule = BandwidthRule::rot;
    double value = 0.0;  // used when rule == fixed
};

namespace detail {

inline double sigma_hat(const PointCloud& cloud) {
    // average per-coordinate standard deviation
    const int n = cloud.n(), d = cloud.d();
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += cloud.at(i, j);
        mean /= n;
        double ss = 0.0;
        for (int i = 0; i < n; ++i) {
            const double c = cloud.at(i, j) - mean;
            ss += c * c;
        }
        acc += std::sqrt(ss / (n > 1 ? n - 1 : 1));
    }
    return acc / d;
}

}  // namespace detail

inline double kde_bandwidth(const PointCloud& cloud, const KdeBandwidth& bw) {
    switch (bw.rule) {
        case BandwidthRule::fixed:
            return bw.value;
        case BandwidthRule::rot:
            return 1.06 * detail::sigma_hat(cloud) *
                   std::pow(static_cast<double>(cloud.n()), -0.2);
        case BandwidthRule::pow_d4:
            return 1.06 * detail::sigma_hat(cloud) *
                   std::pow(static_cast<double>(cloud.n()), -1.0 / (cloud.d() + 4));
        case BandwidthRule::pow_d2:
            return 1.06 * detail::sigma_hat(cloud) *
                   std::pow(static_cast<double>(cloud.n()), -1.0 / (cloud.d() + 2));
    }
    return bw.value;
}

/// Gaussian-KDE resubstitution estimator with leave-one-out evaluation:
///   H = -(1/n) sum_i log[ S0_{-i} / (n (2pi)^{d/2} h^d) ].
inline EstimateReport entropy_kde(const PointCloud& cloud, const KdeBandwidth& bw,
                                  const EstimatorConfig& base = {}) {
    const int n = cloud.n();
    if (n < 2) throw EstimationFailure("entropy_kde: need at least two samples");
    const int d = cloud.d();
    const double h = kde_bandwidth(cloud, bw);
    if (!(h > 0.0)) throw DegenerateBandwidth("entropy_kde: bandwidth must be positive");
    const double log_norm =
        std::log(static_cast<double>(n)) + (d / 2.0) * kLog2Pi + d * std::log(h);
    const double inv_2h2 = 1.0 / (2.0 * h * h);
    std::vector<double> terms(static_cast<std::size_t>(n));
    std::vector<int> clamped(static_cast<std::size_t>(n), 0);
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const auto xi = cloud.row(static_cast<int>(i));
                double s0 = 0.0;
                for (int j = 0; j < n; ++j) {
                    if (static_cast<std::size_t>(j) == i) continue;
                    s0 += std::exp(-sq_dist(xi, cloud.row(j)) * inv_2h2);
                }
                double term = log_norm - std::log(s0);  // -log kde
                if (!(term <= base.clamp)) {            // catches +inf from s0 == 0
                    term = base.clamp;
                    clamped[i] = 1;
                } else if (term < -base.clamp) {
                    term = -base.clamp;
                    clamped[i] = 1;
                }
                terms[i] = term;
            }
        },
        base.workers);
    double sum = 0.0;
    int nclamped = 0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        sum += terms[i];
        nclamped += clamped[i];
    }
    EstimateReport rep;
    rep.value = sum / n;
    rep.n = n;
    rep.d = d;
    if (base.keep_per_point) rep.per_point = terms;
    rep.clamped = nclamped;
    rep.estimator = "kde";
    rep.seed = base.seed;
    rep.notes.emplace_back("bandwidth", std::to_string(h));
    return rep;
}

enum class CalibKernel { gaussian, step };
enum class CalibSource { uniform_cube, gaussian };

struct CalibrateOptions {
    int trials = 20;
    CalibSource source = CalibSource::uniform_cube;
    unsigned workers = 0;
};

/// Empirical bias of the (uncorrected) degree-p, kernel-K estimator at fixed
/// k: the asymptotic bias is distribution-free, so running the raw estimator
/// on samples from a known distribution and averaging H_raw - H_true over
/// replicates estimates the constant for any (k, d, p, K) combination.
inline BiasEstimate calibrate_bias_generic(int k, int d, int degree, CalibKernel kernel,
                                           int samples, int m, std::uint64_t seed,
                                           const CalibrateOptions& opts = {}) {
    if (degree < 0 || degree > 2)
        throw Unsupported("calibrate_bias_generic: degree must be 0, 1, or 2");
    if (kernel == CalibKernel::step && degree != 0)
        throw Unsupported("calibrate_bias_generic: step kernel has a closed form only at degree 0");
    if (degree >= 1 && k < 3)
        throw UnsupportedK("calibrate_bias_generic: degree >= 1 needs k >= 3");
    if (k < 1) throw InvalidArgument("calibrate_bias_generic: k must be >= 1");
    if (samples < k + 2) throw InvalidArgument("calibrate_bias_generic: samples too small");

    const double h_true =
        opts.source == CalibSource::uniform_cube ? 0.0 : d * 0.5 * (kLog2Pi + 1.0);
    Welford acc;
    for (int t = 0; t < opts.trials; ++t) {
        SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        PointCloud cloud(samples, d);
        for (int i = 0; i < samples; ++i)
            for (int j = 0; j < d; ++j)
                cloud.at(i, j) = opts.source == CalibSource::uniform_cube
                                     ? rng.uniform()
                                     : rng.normal();
        double raw;
        if (kernel == CalibKernel::step) {
            EstimatorConfig cfg;
            cfg.workers = opts.workers;
            const EstimateReport rep = entropy_kl(cloud, k, cfg);
            raw = rep.value + rep.bias_subtracted;  // undo the psi(k) - log k correction
        } else {
            const int budget =
                m > 0 ? m
                      : static_cast<int>(std::ceil(7.0 * std::log(static_cast<double>(samples))));
            NeighborIndex index(cloud);
            const int m_eff = std::min(std::max(budget, k), samples - 1);
            std::vector<double> bw(static_cast<std::size_t>(samples));
            parallel_for(
                static_cast<std::size_t>(samples),
                [&](std::size_t lo, std::size_t hi) {
                    for (std::size_t i = lo; i < hi; ++i)
                        bw[i] = index.knn_of_sample(static_cast<int>(i), m_eff).rho(k);
                },
                opts.workers);
            detail::TermStats stats = detail::resub_terms(
                cloud, index, bw, m_eff, degree, SingularSigmaPolicy::fallback_p1,
                kDefaultClamp, opts.workers);
            double sum = 0.0;
            for (double x : stats.terms)
                if (!std::isnan(x)) sum += x;
            raw = sum / (samples - stats.skipped);
        }
        acc.add(raw - h_true);
    }
    BiasEstimate est;
    est.k = k;
    est.d = d;
    est.m = m;
    est.samples = opts.trials;
    est.mean = acc.mean;
    est.std_error = acc.std_error();
    est.second_moment = acc.second_moment();
    est.clamp = kDefaultClamp;
    est.form = ExponentForm::appendix_scaled;
    est.seed = seed;
    return est;
}

}  // namespace klnn
