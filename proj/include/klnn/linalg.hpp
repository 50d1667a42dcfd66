#pragma once

#include <cmath>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "klnn/error.hpp"

namespace klnn {

inline constexpr int kMaxDim = 16;

/// Dense real vector for d-dimensional quantities (d small, <=dims of the
/// companion SmallMatrix).
class Vec {
public:
    Vec() = default;
    explicit Vec(int dim, double fill = 0.0) : v_(check_dim(dim), fill) {}

    int dim() const { return static_cast<int>(v_.size()); }
    double& operator[](int i) { return v_[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& data() const { return v_; }

    double dot(const Vec& o) const {
        double s = 0.0;
        for (int i = 0; i < dim(); ++i) s += v_[i] * o[i];
        return s;
    }

    double norm() const { return std::sqrt(dot(*this)); }

    Vec& operator*=(double a) {
        for (double& x : v_) x *= a;
        return *this;
    }

    Vec& operator+=(const Vec& o) {
        for (int i = 0; i < dim(); ++i) v_[i] += o[i];
        return *this;
    }

private:
    static int check_dim(int d) {
        if (d < 1 || d > kMaxDim)
            throw InvalidArgument("Vec: dim must be in [1, " +
                                  std::to_string(kMaxDim) + "], got " +
                                  std::to_string(d));
        return d;
    }

    std::vector<double> v_;
};

/// Small dense matrix, row-major. Symmetry is a caller-maintained property;
/// routines that require it (det_inv_sym, cholesky) check explicitly.
class SmallMatrix {
public:
    SmallMatrix() = default;
    explicit SmallMatrix(int dim, double fill = 0.0)
        : dim_(check_dim(dim)), a_(static_cast<std::size_t>(dim) * dim, fill) {}

    static SmallMatrix identity(int dim) {
        SmallMatrix m(dim);
        for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
        return m;
    }

    int dim() const { return dim_; }
    double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * dim_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * dim_ + j]; }

    double trace() const {
        double t = 0.0;
        for (int i = 0; i < dim_; ++i) t += (*this)(i, i);
        return t;
    }

    bool is_symmetric(double rel_tol = 1e-9) const {
        double scale = 0.0;
        for (double x : a_) scale = std::max(scale, std::abs(x));
        for (int i = 0; i < dim_; ++i)
            for (int j = i + 1; j < dim_; ++j)
                if (std::abs((*this)(i, j) - (*this)(j, i)) > rel_tol * std::max(scale, 1e-300))
                    return false;
        return true;
    }

    Vec matvec(const Vec& x) const {
        Vec y(dim_);
        for (int i = 0; i < dim_; ++i) {
            double s = 0.0;
            for (int j = 0; j < dim_; ++j) s += (*this)(i, j) * x[j];
            y[i] = s;
        }
        return y;
    }

    /// x^T A x
    double quadratic_form(const Vec& x) const {
        double s = 0.0;
        for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j) s += x[i] * (*this)(i, j) * x[j];
        return s;
    }

    SmallMatrix& operator+=(const SmallMatrix& o) {
        for (std::size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
        return *this;
    }

    SmallMatrix& operator*=(double c) {
        for (double& x : a_) x *= c;
        return *this;
    }

    /// Lower-triangular Cholesky factor; requires symmetric positive-definite.
    SmallMatrix cholesky() const {
        if (!is_symmetric())
            throw InvalidArgument("cholesky: matrix not symmetric");
        SmallMatrix L(dim_);
        for (int i = 0; i < dim_; ++i) {
            for (int j = 0; j <= i; ++j) {
                double s = (*this)(i, j);
                for (int p = 0; p < j; ++p) s -= L(i, p) * L(j, p);
                if (i == j) {
                    if (s <= 0.0)
                        throw SingularMatrix("cholesky: matrix not positive definite", s);
                    L(i, i) = std::sqrt(s);
                } else {
                    L(i, j) = s / L(j, j);
                }
            }
        }
        return L;
    }

private:
    static int check_dim(int d) {
        if (d < 1 || d > kMaxDim)
            throw InvalidArgument("SmallMatrix: dim must be in [1, " +
                                  std::to_string(kMaxDim) + "], got " +
                                  std::to_string(d));
        return d;
    }

    int dim_ = 0;
    std::vector<double> a_;
};

namespace detail {

/// Scale-aware singularity floor: 1e-12 * (|trace|/dim)^dim. An absolute
/// floor would misfire across data scales since the moment matrices shrink
/// or grow with the bandwidth.
inline double singularity_floor(const SmallMatrix& m) {
    const double scale = std::abs(m.trace()) / m.dim();
    return 1e-12 * std::pow(scale, m.dim());
}

/// Gauss-Jordan with partial pivoting: det and inverse in one sweep.
inline std::pair<double, SmallMatrix> pivoted_det_inv(const SmallMatrix& m) {
    const int n = m.dim();
    SmallMatrix a = m;
    SmallMatrix inv = SmallMatrix::identity(n);
    double det = 1.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (piv != col) {
            for (int c = 0; c < n; ++c) {
                std::swap(a(piv, c), a(col, c));
                std::swap(inv(piv, c), inv(col, c));
            }
            det = -det;
        }
        const double p = a(col, col);
        det *= p;
        if (p == 0.0) return {0.0, inv};
        const double ip = 1.0 / p;
        for (int c = 0; c < n; ++c) {
            a(col, c) *= ip;
            inv(col, c) *= ip;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f == 0.0) continue;
            for (int c = 0; c < n; ++c) {
                a(r, c) -= f * a(col, c);
                inv(r, c) -= f * inv(col, c);
            }
        }
    }
    return {det, inv};
}

}  // namespace detail

/// Determinant and inverse of a symmetric matrix. Closed-form cofactors for
/// dim <= 3, pivoted elimination above. Throws SingularMatrix when |det|
/// falls below the scale-aware floor.
inline std::pair<double, SmallMatrix> det_inv_sym(const SmallMatrix& m) {
    if (!m.is_symmetric())
        throw InvalidArgument("det_inv_sym: matrix not symmetric");
    const int n = m.dim();
    const double floor = detail::singularity_floor(m);
    double det = 0.0;
    SmallMatrix inv(n);
    if (n == 1) {
        det = m(0, 0);
        if (std::abs(det) <= floor)
            throw SingularMatrix("det_inv_sym: singular 1x1 matrix", det);
        inv(0, 0) = 1.0 / det;
        return {det, inv};
    }
    if (n == 2) {
        det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
        if (std::abs(det) <= floor)
            throw SingularMatrix("det_inv_sym: singular 2x2 matrix", det);
        const double id = 1.0 / det;
        inv(0, 0) = m(1, 1) * id;
        inv(1, 1) = m(0, 0) * id;
        inv(0, 1) = inv(1, 0) = -m(0, 1) * id;
        return {det, inv};
    }
    if (n == 3) {
        const double a = m(0, 0), b = m(0, 1), c = m(0, 2);
        const double d = m(1, 1), e = m(1, 2), f = m(2, 2);
        const double ca = d * f - e * e;
        const double cb = c * e - b * f;
        const double cc = b * e - c * d;
        det = a * ca + b * cb + c * cc;
        if (std::abs(det) <= floor)
            throw SingularMatrix("det_inv_sym: singular 3x3 matrix", det);
        const double id = 1.0 / det;
        inv(0, 0) = ca * id;
        inv(0, 1) = inv(1, 0) = cb * id;
        inv(0, 2) = inv(2, 0) = cc * id;
        inv(1, 1) = (a * f - c * c) * id;
        inv(1, 2) = inv(2, 1) = (b * c - a * e) * id;
        inv(2, 2) = (a * d - b * b) * id;
        return {det, inv};
    }
    auto [dt, iv] = detail::pivoted_det_inv(m);
    if (std::abs(dt) <= floor)
        throw SingularMatrix("det_inv_sym: singular matrix", dt);
    // restore exact symmetry lost to elimination round-off
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double s = 0.5 * (iv(i, j) + iv(j, i));
            iv(i, j) = iv(j, i) = s;
        }
    return {dt, iv};
}

}  // namespace klnn
