#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "klnn/cloud.hpp"
#include "klnn/error.hpp"
#include "klnn/linalg.hpp"
#include "klnn/neighbors.hpp"
#include "klnn/special.hpp"

namespace klnn {

/// Fallback policy when the local second-moment matrix is singular.
enum class SingularSigmaPolicy { error, fallback_p1, skip };

/// Kernel-weighted local moments at a query point:
///   S0 = sum_j w_j,  S1 = sum_j (X_j - x)/h w_j,
///   S2 = sum_j (X_j - x)(X_j - x)^T / h^2 w_j,   w_j = exp(-||X_j - x||^2 / 2h^2)
/// n is the full sample count used in normalizations even when the
/// contributor set is truncated or excludes the center.
struct LocalMoments {
    double h = 0.0;
    int n = 0;
    int d = 0;
    double s0 = 0.0;
    Vec s1;
    SmallMatrix s2;

    /// Sigma = S2/S0 - (S1/S0)(S1/S0)^T; PSD by Cauchy-Schwarz.
    SmallMatrix sigma() const {
        SmallMatrix out(d);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                out(a, b) = s2(a, b) / s0 - s1[a] * s1[b] / (s0 * s0);
        return out;
    }
};

/// Recovered degree-2 exponential-polynomial parameters:
/// log f(u) ~ a0 + a1.(u-x) + (u-x).a2 (u-x) near x.
struct LldeParams {
    double a0 = 0.0;
    Vec a1;
    SmallMatrix a2;
    double h = 0.0;
    int n = 0;
};

namespace detail {

template <typename ContribFn>
LocalMoments accumulate_moments(const PointCloud& cloud, std::span<const double> center,
                                double h, int n_norm, ContribFn&& for_each_contrib) {
    if (!(h > 0.0))
        throw DegenerateBandwidth("local_moments: bandwidth must be positive (h=" +
                                  std::to_string(h) + ")");
    const int d = cloud.d();
    LocalMoments m;
    m.h = h;
    m.n = n_norm;
    m.d = d;
    m.s1 = Vec(d);
    m.s2 = SmallMatrix(d);
    const double inv_h = 1.0 / h;
    const double inv_2h2 = 1.0 / (2.0 * h * h);
    std::vector<double> diff(static_cast<std::size_t>(d));
    int count = 0;
    for_each_contrib([&](int j) {
        const auto row = cloud.row(j);
        double sq = 0.0;
        for (int a = 0; a < d; ++a) {
            diff[static_cast<std::size_t>(a)] = row[static_cast<std::size_t>(a)] -
                                                center[static_cast<std::size_t>(a)];
            sq += diff[static_cast<std::size_t>(a)] * diff[static_cast<std::size_t>(a)];
        }
        const double w = std::exp(-sq * inv_2h2);
        m.s0 += w;
        for (int a = 0; a < d; ++a) {
            const double da = diff[static_cast<std::size_t>(a)] * inv_h;
            m.s1[a] += da * w;
            for (int b = a; b < d; ++b)
                m.s2(a, b) += da * (diff[static_cast<std::size_t>(b)] * inv_h) * w;
        }
        ++count;
    });
    if (count == 0)
        throw EmptyNeighborhood("local_moments: empty contributor set");
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < a; ++b) m.s2(a, b) = m.s2(b, a);
    return m;
}

}  // namespace detail

/// Moments over an explicit (usually truncated) neighbor list.
inline LocalMoments local_moments(const PointCloud& cloud, std::span<const double> center,
                                  double h, const NeighborList& contributors,
                                  std::optional<int> n_norm = std::nullopt) {
    return detail::accumulate_moments(
        cloud, center, h, n_norm.value_or(cloud.n()), [&](auto&& fn) {
            for (const Neighbor& nb : contributors.entries) fn(nb.index);
        });
}

/// Moments over the whole cloud; exclude >= 0 drops that sample (the center
/// must not contribute to its own fit in resubstitution use).
inline LocalMoments local_moments_all(const PointCloud& cloud,
                                      std::span<const double> center, double h,
                                      int exclude = -1,
                                      std::optional<int> n_norm = std::nullopt) {
    return detail::accumulate_moments(
        cloud, center, h, n_norm.value_or(cloud.n()), [&](auto&& fn) {
            for (int j = 0; j < cloud.n(); ++j)
                if (j != exclude) fn(j);
        });
}

/// Gaussian KDE: S0 / (n (2 pi)^{d/2} h^d). exclude >= 0 applies the
/// leave-one-out convention (resubstitution default); the normalization
/// keeps the full n either way.
inline double kde_p0(const PointCloud& cloud, std::span<const double> x, double h,
                     int exclude = -1) {
    if (!(h > 0.0)) throw DegenerateBandwidth("kde_p0: bandwidth must be positive");
    const LocalMoments m = detail::accumulate_moments(
        cloud, x, h, cloud.n(), [&](auto&& fn) {
            for (int j = 0; j < cloud.n(); ++j)
                if (j != exclude) fn(j);
        });
    const int d = cloud.d();
    return m.s0 / (cloud.n() * std::exp(d * 0.5 * kLog2Pi) * std::pow(h, d));
}

/// k-NN density estimate: k / (n c_d rho_k^d).
inline double knn_density(double rho_k, int k, int n, int d) {
    if (k < 1 || n < 1 || d < 1)
        throw InvalidArgument("knn_density: k, n, d must all be >= 1");
    if (!(rho_k > 0.0))
        throw DegenerateBandwidth("knn_density: rho_k must be positive (duplicate samples?)");
    return k / (n * unit_ball_volume(d) * std::pow(rho_k, d));
}

/// Degree-1 closed form: S0/(n (2 pi)^{d/2} h^d) exp(-||S1||^2 / 2 S0^2).
inline double llde_p1(const LocalMoments& m) {
    if (!(m.s0 > 0.0)) throw EmptyNeighborhood("llde_p1: S0 must be positive");
    const double q = m.s1.dot(m.s1) / (m.s0 * m.s0);
    return m.s0 / (m.n * std::exp(m.d * 0.5 * kLog2Pi) * std::pow(m.h, m.d)) *
           std::exp(-0.5 * q);
}

/// Degree-2 closed form:
/// S0/(n (2 pi)^{d/2} h^d |Sigma|^{1/2}) exp(-S1^T Sigma^{-1} S1 / 2 S0^2).
inline double llde_p2(const LocalMoments& m) {
    if (!(m.s0 > 0.0)) throw EmptyNeighborhood("llde_p2: S0 must be positive");
    const SmallMatrix sigma = m.sigma();
    double det;
    SmallMatrix inv(m.d);
    try {
        std::tie(det, inv) = det_inv_sym(sigma);
    } catch (const SingularMatrix& e) {
        throw SingularSigma(std::string("llde_p2: Sigma is singular (det=") +
                            std::to_string(e.det()) + ")");
    }
    if (det <= 0.0) throw SingularSigma("llde_p2: Sigma determinant not positive");
    const double q = inv.quadratic_form(m.s1) / (m.s0 * m.s0);
    return m.s0 /
           (m.n * std::exp(m.d * 0.5 * kLog2Pi) * std::pow(m.h, m.d) * std::sqrt(det)) *
           std::exp(-0.5 * q);
}

/// Inverts the degree-2 stationarity system:
///   M^{-1} = h^2 Sigma,  a1 = M h S1 / S0,  a2 = (h^{-2} I - M)/2,
///   a0 = log llde_p2.
/// M must come out positive definite or the fit is not a maximizer.
inline LldeParams recover_params_p2(const LocalMoments& m) {
    const SmallMatrix sigma = m.sigma();
    double det_sigma;
    SmallMatrix sigma_inv(m.d);
    try {
        std::tie(det_sigma, sigma_inv) = det_inv_sym(sigma);
    } catch (const SingularMatrix& e) {
        throw RecoveryFailure(std::string("recover_params_p2: Sigma singular (det=") +
                              std::to_string(e.det()) + ")");
    }
    SmallMatrix M = sigma_inv;
    M *= 1.0 / (m.h * m.h);
    try {
        (void)M.cholesky();
    } catch (const SingularMatrix&) {
        throw RecoveryFailure("recover_params_p2: M = (h^2 Sigma)^{-1} not positive definite");
    }
    LldeParams p;
    p.h = m.h;
    p.n = m.n;
    p.a1 = M.matvec(m.s1);
    p.a1 *= m.h / m.s0;
    p.a2 = SmallMatrix::identity(m.d);
    p.a2 *= 1.0 / (m.h * m.h);
    for (int a = 0; a < m.d; ++a)
        for (int b = 0; b < m.d; ++b) p.a2(a, b) = 0.5 * (p.a2(a, b) - M(a, b));
    p.a0 = std::log(llde_p2(m));
    return p;
}

/// Residuals of the three stationarity equations, evaluated with the
/// closed-form right-hand sides:
///   S0/n = (2 pi)^{d/2} |M|^{-1/2} exp(a0 + a1^T M^{-1} a1 / 2)
///   S1/n = S0 M^{-1} a1 / (n h)
///   S2/n = S0 (M^{-1} + M^{-1} a1 a1^T M^{-1}) / (n h^2)
/// Diagnostic only; returns {|r0|, ||r1||, ||r2||_F}.
inline std::array<double, 3> verify_stationarity(const LldeParams& p,
                                                 const LocalMoments& m) {
    const int d = m.d;
    SmallMatrix M = SmallMatrix::identity(d);
    M *= 1.0 / (p.h * p.h);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) M(a, b) -= 2.0 * p.a2(a, b);
    auto [det_m, m_inv] = det_inv_sym(M);
    const Vec mi_a1 = m_inv.matvec(p.a1);
    const double n = static_cast<double>(m.n);

    const double rhs0 = std::exp(d * 0.5 * kLog2Pi) / std::sqrt(det_m) *
                        std::exp(p.a0 + 0.5 * p.a1.dot(mi_a1));
    const double r0 = std::abs(m.s0 / n - rhs0);

    double r1sq = 0.0;
    for (int a = 0; a < d; ++a) {
        const double rhs = m.s0 * mi_a1[a] / (n * p.h);
        const double diff = m.s1[a] / n - rhs;
        r1sq += diff * diff;
    }

    double r2sq = 0.0;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            const double rhs =
                m.s0 * (m_inv(a, b) + mi_a1[a] * mi_a1[b]) / (n * p.h * p.h);
            const double diff = m.s2(a, b) / n - rhs;
            r2sq += diff * diff;
        }

    return {r0, std::sqrt(r1sq), std::sqrt(r2sq)};
}

}  // namespace klnn
