#pragma once

// Straight-line reimplementations used as test oracles. Nothing here calls
// into the library's numerics.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double matern(const VectorXd& a, const VectorXd& b, double sf2, const VectorXd& ls)
{
    long double r2 = 0.0L;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const long double t = (static_cast<long double>(a[i]) - b[i]) / ls[i];
        r2 += t * t;
    }
    const long double r = std::sqrt(r2);
    const long double s5 = std::sqrt(5.0L);
    return static_cast<double>(sf2 * (1.0L + s5 * r + 5.0L * r2 / 3.0L) * std::exp(-s5 * r));
}

inline MatrixXd gram(const MatrixXd& X, double sf2, const VectorXd& ls)
{
    MatrixXd K(X.rows(), X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.rows(); ++j) K(i, j) = matern(X.row(i), X.row(j), sf2, ls);
    return K;
}

/// Posterior mean and variance by explicit inversion, all in internal units.
inline void dense_posterior(const MatrixXd& X, const VectorXd& y, double sf2, const VectorXd& ls, double noise,
                            const VectorXd& u, double& mean, double& var)
{
    MatrixXd K = gram(X, sf2, ls);
    K.diagonal().array() += noise;
    const MatrixXd Kinv = K.inverse();
    VectorXd k(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) k[i] = matern(X.row(i), u, sf2, ls);
    mean = k.dot(Kinv * y);
    var = sf2 - k.dot(Kinv * k);
}

/// log N(y; 0, K + noise I) by dense determinant and inverse.
inline double dense_lml(const MatrixXd& X, const VectorXd& y, double sf2, const VectorXd& ls, double noise)
{
    MatrixXd K = gram(X, sf2, ls);
    K.diagonal().array() += noise;
    // NaN where K is numerically singular; the dense inverse means nothing there.
    const double det = K.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) return std::numeric_limits<double>::quiet_NaN();
    const double logdet = std::log(det);
    return -0.5 * y.dot(K.inverse() * y) - 0.5 * logdet - 0.5 * y.size() * std::log(2.0 * M_PI);
}

/// Argmin of f over an evenly spaced grid of n points on [lo, hi].
inline double grid_argmin(const std::function<double(double)>& f, double lo, double hi, int n)
{
    double best = lo, fb = f(lo);
    for (int i = 1; i < n; ++i) {
        const double x = lo + (hi - lo) * i / (n - 1);
        const double v = f(x);
        if (v < fb) {
            fb = v;
            best = x;
        }
    }
    return best;
}

}  // namespace oracle
