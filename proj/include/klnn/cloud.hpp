#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "klnn/error.hpp"
#include "klnn/linalg.hpp"

namespace klnn {

/// n samples in R^d, row-major.
class PointCloud {
public:
    PointCloud() = default;
    PointCloud(int n, int d) : n_(n), d_(d), pts_(check(n, d), 0.0) {}
    PointCloud(int n, int d, std::vector<double> data)
        : n_(n), d_(d), pts_(std::move(data)) {
        if (pts_.size() != check(n, d))
            throw InvalidArgument("PointCloud: data size does not match n*d");
    }

    int n() const { return n_; }
    int d() const { return d_; }

    double& at(int i, int j) { return pts_[static_cast<std::size_t>(i) * d_ + j]; }
    double at(int i, int j) const { return pts_[static_cast<std::size_t>(i) * d_ + j]; }

    std::span<const double> row(int i) const {
        return {pts_.data() + static_cast<std::size_t>(i) * d_, static_cast<std::size_t>(d_)};
    }
    std::span<double> row(int i) {
        return {pts_.data() + static_cast<std::size_t>(i) * d_, static_cast<std::size_t>(d_)};
    }

    const std::vector<double>& data() const { return pts_; }
    std::vector<double>& data() { return pts_; }

    Vec row_vec(int i) const {
        Vec v(d_);
        for (int j = 0; j < d_; ++j) v[j] = at(i, j);
        return v;
    }

    void check_finite() const {
        for (double x : pts_)
            if (!std::isfinite(x))
                throw InvalidArgument("PointCloud: non-finite coordinate");
    }

    /// Row-wise concatenation of coordinate blocks, pairing by index.
    static PointCloud concat(const PointCloud& a, const PointCloud& b) {
        if (a.n() != b.n())
            throw InvalidArgument("PointCloud::concat: row counts differ");
        PointCloud out(a.n(), a.d() + b.d());
        for (int i = 0; i < a.n(); ++i) {
            for (int j = 0; j < a.d(); ++j) out.at(i, j) = a.at(i, j);
            for (int j = 0; j < b.d(); ++j) out.at(i, a.d() + j) = b.at(i, j);
        }
        return out;
    }

private:
    static std::size_t check(int n, int d) {
        if (n < 1) throw InvalidArgument("PointCloud: n must be >= 1, got " + std::to_string(n));
        if (d < 1) throw InvalidArgument("PointCloud: d must be >= 1, got " + std::to_string(d));
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(d);
    }

    int n_ = 0;
    int d_ = 0;
    std::vector<double> pts_;
};

/// Column block [from, from + count) as its own cloud.
inline PointCloud slice_cols(const PointCloud& cloud, int from, int count) {
    if (from < 0 || count < 1 || from + count > cloud.d())
        throw InvalidArgument("slice_cols: column range out of bounds");
    PointCloud out(cloud.n(), count);
    for (int i = 0; i < cloud.n(); ++i)
        for (int j = 0; j < count; ++j) out.at(i, j) = cloud.at(i, from + j);
    return out;
}

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

}  // namespace klnn
