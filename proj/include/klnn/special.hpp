#pragma once

#include <cmath>
#include <string>

#include "klnn/error.hpp"

namespace klnn {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

/// Volume of the unit Euclidean ball in R^d: pi^{d/2} / Gamma(d/2 + 1).
inline double unit_ball_volume(int d) {
    if (d <= 0)
        throw InvalidArgument("unit_ball_volume: d must be >= 1, got " + std::to_string(d));
    return std::pow(M_PI, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
}

inline double log_unit_ball_volume(int d) {
    if (d <= 0)
        throw InvalidArgument("log_unit_ball_volume: d must be >= 1, got " + std::to_string(d));
    return (d / 2.0) * std::log(M_PI) - std::lgamma(d / 2.0 + 1.0);
}

/// Digamma psi(x) for x > 0. Recurrence shift to x >= 6, then the asymptotic
/// expansion log x - 1/(2x) - sum B_{2n}/(2n x^{2n}) with Bernoulli terms
/// through x^-14; accurate to ~1e-13 relative over the shifted range.
inline double digamma(double x) {
    if (!(x > 0.0))
        throw InvalidArgument("digamma: requires x > 0, got " + std::to_string(x));
    double acc = 0.0;
    while (x < 6.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // B2/2 = 1/12, B4/4 = -1/120, B6/6 = 1/252, B8/8 = -1/240,
    // B10/10 = 1/132, B12/12 = -691/32760, B14/14 = 1/12
    const double series =
        inv2 * (1.0 / 12.0 -
        inv2 * (1.0 / 120.0 -
        inv2 * (1.0 / 252.0 -
        inv2 * (1.0 / 240.0 -
        inv2 * (1.0 / 132.0 -
        inv2 * (691.0 / 32760.0 -
        inv2 * (1.0 / 12.0)))))));
    return acc + std::log(x) - 0.5 * inv - series;
}

}  // namespace klnn
