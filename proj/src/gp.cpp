#include "parbo/gp.hpp"

#include "parbo/afopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace parbo {

KernelParams KernelParams::isotropic(int dim, double length_scale, double signal_variance,
                                     double noise_variance)
{
    KernelParams p;
    p.signal_variance = signal_variance;
    p.length_scales = Vector::Constant(dim, length_scale);
    p.noise_variance = noise_variance;
    return p;
}

void KernelParams::validate(int dim) const
{
    if (length_scales.size() != dim)
        throw InvalidArgument("kernel has " + std::to_string(length_scales.size()) +
                              " length scales, design dimension is " + std::to_string(dim));
    if (!(signal_variance > 0.0)) throw InvalidArgument("signal_variance must be positive");
    if (!(noise_variance >= 0.0)) throw InvalidArgument("noise_variance must be nonnegative");
    if (!(length_scales.array() > 0.0).all())
        throw InvalidArgument("length scales must be positive");
}

double matern25(const Vector& a, const Vector& b, const KernelParams& params)
{
    if (a.size() != params.length_scales.size() || b.size() != params.length_scales.size())
        throw InvalidArgument("matern25: dimension mismatch");
    return matern25_profile(scaled_distance(a, b, params.length_scales), params.signal_variance);
}

Matrix kernel_matrix(const Matrix& A, const Matrix& B, const KernelParams& params)
{
    const Eigen::ArrayXd inv_l = params.length_scales.array().inverse();
    const Matrix As = A * inv_l.matrix().asDiagonal();
    const Matrix Bs = B * inv_l.matrix().asDiagonal();
    Matrix K(A.rows(), B.rows());
    for (Eigen::Index j = 0; j < B.rows(); ++j)
        for (Eigen::Index i = 0; i < A.rows(); ++i)
            K(i, j) = matern25_profile((As.row(i) - Bs.row(j)).norm(), params.signal_variance);
    return K;
}

Standardization Standardization::from_data(const BoxDomain& domain, const Dataset& data)
{
    Standardization s;
    s.domain = domain;
    const int n = data.size();
    if (n == 0) return s;
    const Vector y = data.value_vector();
    s.y_mean = y.mean();
    if (n > 1) {
        const double var = (y.array() - s.y_mean).square().sum() / n;
        if (var > 0.0 && std::isfinite(var)) s.y_scale = std::sqrt(var);
    }
    return s;
}

Matrix Standardization::x_to_internal(const std::vector<Vector>& xs) const
{
    Matrix X(static_cast<Eigen::Index>(xs.size()), domain.dim());
    for (std::size_t i = 0; i < xs.size(); ++i) X.row(i) = domain.to_unit(xs[i]).transpose();
    return X;
}

Matrix jittered_cholesky(const Matrix& K, double* jitter_used)
{
    const Eigen::Index n = K.rows();
    if (n == 0) {
        if (jitter_used) *jitter_used = 0.0;
        return Matrix(0, 0);
    }
    const double scale = std::max(K.diagonal().mean(), std::numeric_limits<double>::min());
    double jitter = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Matrix A = K;
        if (jitter > 0.0) A.diagonal().array() += jitter * scale;
        Eigen::LLT<Matrix> llt(A);
        if (llt.info() == Eigen::Success) {
            Matrix L = llt.matrixL();
            if ((L.diagonal().array() > 0.0).all()) {
                if (jitter_used) *jitter_used = jitter * scale;
                return L;
            }
        }
        jitter = (jitter == 0.0) ? 1e-10 : jitter * 10.0;
    }
    throw NumericalError("kernel matrix not positive definite after jitter escalation to 1e-4 (n=" +
                         std::to_string(n) + ", mean diagonal=" + std::to_string(scale) + ")");
}

GpModel GpModel::condition(const Dataset& train, const KernelParams& params,
                           const Standardization& scaling)
{
    params.validate(scaling.domain.dim());
    GpModel m;
    m.params_ = params;
    m.scaling_ = scaling;
    m.train_ = train;
    const int n = train.size();
    m.inputs_ = scaling.x_to_internal(train.points);
    m.targets_ = Vector(n);
    for (int i = 0; i < n; ++i) m.targets_[i] = scaling.y_to_internal(train.values[i]);
    if (n == 0) {
        m.chol_ = Matrix(0, 0);
        m.alpha_ = Vector(0);
        m.lml_ = 0.0;
        return m;
    }
    Matrix K = kernel_matrix(m.inputs_, m.inputs_, params);
    K.diagonal().array() += params.noise_variance;
    m.chol_ = jittered_cholesky(K, &m.jitter_);
    m.alpha_ = m.chol_.triangularView<Eigen::Lower>().solve(m.targets_);
    m.chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(m.alpha_);
    m.lml_ = -0.5 * m.targets_.dot(m.alpha_) - m.chol_.diagonal().array().log().sum() -
             0.5 * n * std::log(2.0 * std::numbers::pi);
    return m;
}

GpModel GpModel::condition(const Dataset& train, const KernelParams& params,
                           const BoxDomain& domain)
{
    return condition(train, params, Standardization::from_data(domain, train));
}

void GpModel::posterior_internal(const Vector& u, double& mean, double& variance) const
{
    const double prior = params_.signal_variance;
    if (inputs_.rows() == 0) {
        mean = 0.0;
        variance = prior;
        return;
    }
    const Vector k = kernel_matrix(inputs_, u.transpose(), params_).col(0);
    mean = k.dot(alpha_);
    const Vector v = chol_.triangularView<Eigen::Lower>().solve(k);
    variance = prior - v.squaredNorm();
}

Prediction GpModel::posterior(const Vector& x) const
{
    if (x.size() != dim()) throw InvalidArgument("posterior: query dimension mismatch");
    double mean = 0.0;
    double var = 0.0;
    posterior_internal(scaling_.x_to_internal(x), mean, var);
    return {scaling_.y_from_internal(mean), scaling_.y_scale * std::sqrt(std::max(var, 0.0))};
}

double GpModel::mean(const Vector& x) const
{
    if (x.size() != dim()) throw InvalidArgument("mean: query dimension mismatch");
    if (inputs_.rows() == 0) return scaling_.y_from_internal(0.0);
    const Vector k = kernel_matrix(inputs_, scaling_.x_to_internal(x).transpose(), params_).col(0);
    return scaling_.y_from_internal(k.dot(alpha_));
}

JointPrediction GpModel::joint_posterior(const std::vector<Vector>& xs) const
{
    const Matrix U = scaling_.x_to_internal(xs);
    const Eigen::Index q = U.rows();
    Matrix cov = kernel_matrix(U, U, params_);
    Vector mean = Vector::Zero(q);
    if (inputs_.rows() > 0) {
        const Matrix Kxq = kernel_matrix(inputs_, U, params_);
        mean = Kxq.transpose() * alpha_;
        const Matrix V = chol_.triangularView<Eigen::Lower>().solve(Kxq);
        cov.noalias() -= V.transpose() * V;
    }
    const double s = scaling_.y_scale;
    JointPrediction out;
    out.mean = (mean.array() * s + scaling_.y_mean).matrix();
    out.covariance = cov * (s * s);
    return out;
}

double GpModel::sample(const Vector& x, Rng& rng) const
{
    const Prediction p = posterior(x);
    if (p.stddev == 0.0) return p.mean;
    return p.mean + p.stddev * rng.normal();
}

GpModel GpModel::with_observations(const std::vector<Vector>& xs, const std::vector<double>& ys) const
{
    if (xs.size() != ys.size()) throw InvalidArgument("with_observations: size mismatch");
    if (xs.empty()) return *this;
    GpModel m = *this;
    const Eigen::Index n = inputs_.rows();
    const Eigen::Index p = static_cast<Eigen::Index>(xs.size());
    const Matrix U = scaling_.x_to_internal(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) m.train_.add(xs[i], ys[i]);
    m.inputs_.conservativeResize(n + p, dim());
    m.inputs_.bottomRows(p) = U;
    m.targets_.conservativeResize(n + p);
    for (Eigen::Index i = 0; i < p; ++i) m.targets_[n + i] = scaling_.y_to_internal(ys[i]);

    Matrix K22 = kernel_matrix(U, U, params_);
    K22.diagonal().array() += params_.noise_variance + jitter_;
    Matrix L(n + p, n + p);
    L.setZero();
    bool ok = false;
    if (n > 0) {
        const Matrix K12 = kernel_matrix(inputs_, U, params_);
        const Matrix B = chol_.triangularView<Eigen::Lower>().solve(K12);  // n x p
        const Matrix S = K22 - B.transpose() * B;
        Eigen::LLT<Matrix> llt(S);
        if (llt.info() == Eigen::Success && (Matrix(llt.matrixL()).diagonal().array() > 0).all()) {
            L.topLeftCorner(n, n) = chol_;
            L.bottomLeftCorner(p, n) = B.transpose();
            L.bottomRightCorner(p, p) = llt.matrixL();
            ok = true;
        }
    }
    if (!ok) {
        // Schur complement lost definiteness (near-duplicate inputs): full refactorization.
        Matrix K = kernel_matrix(m.inputs_, m.inputs_, params_);
        K.diagonal().array() += params_.noise_variance;
        L = jittered_cholesky(K, &m.jitter_);
    }
    m.chol_ = std::move(L);
    m.alpha_ = m.chol_.triangularView<Eigen::Lower>().solve(m.targets_);
    m.chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(m.alpha_);
    m.lml_ = -0.5 * m.targets_.dot(m.alpha_) - m.chol_.diagonal().array().log().sum() -
             0.5 * static_cast<double>(n + p) * std::log(2.0 * std::numbers::pi);
    return m;
}

Vector GpModel::length_scales_user() const
{
    return (params_.length_scales.array() * scaling_.domain.width().array()).matrix();
}

Vector LogHyper::pack(const KernelParams& p)
{
    const int d = p.dim();
    Vector theta(d + 2);
    theta[0] = std::log(p.signal_variance);
    theta.segment(1, d) = p.length_scales.array().log().matrix();
    theta[d + 1] = std::log(std::max(p.noise_variance / p.signal_variance, 1e-300));
    return theta;
}

KernelParams LogHyper::unpack(const Vector& theta)
{
    const int d = static_cast<int>(theta.size()) - 2;
    KernelParams p;
    p.signal_variance = std::exp(theta[0]);
    p.length_scales = theta.segment(1, d).array().exp().matrix();
    p.noise_variance = p.signal_variance * std::exp(theta[d + 1]);
    return p;
}

LmlValue log_marginal_likelihood(const Matrix& X, const Vector& y, const Vector& theta)
{
    const Eigen::Index n = X.rows();
    const int d = static_cast<int>(X.cols());
    const KernelParams p = LogHyper::unpack(theta);
    const double sf2 = p.signal_variance;
    const double ratio = p.noise_variance / sf2;

    // Correlation matrix C and per-dimension derivative blocks.
    const Eigen::ArrayXd inv_l = p.length_scales.array().inverse();
    Matrix C(n, n);
    std::vector<Matrix> dC(d, Matrix(n, n));
    const double s5 = std::sqrt(5.0);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
            const Eigen::ArrayXd diff = (X.row(i) - X.row(j)).transpose().array() * inv_l;
            const double r = std::sqrt(diff.square().sum());
            const double e = std::exp(-s5 * r);
            const double c = (1.0 + s5 * r + 5.0 * r * r / 3.0) * e;
            C(i, j) = C(j, i) = c;
            // d c / d log l_k = (5/3)(1 + sqrt5 r) exp(-sqrt5 r) (dx_k / l_k)^2
            const double g = (5.0 / 3.0) * (1.0 + s5 * r) * e;
            for (int k = 0; k < d; ++k) dC[k](i, j) = dC[k](j, i) = g * diff[k] * diff[k];
        }
    }
    Matrix K = sf2 * C;
    K.diagonal().array() += sf2 * ratio;
    Eigen::LLT<Matrix> llt(K);
    if (llt.info() != Eigen::Success) throw NumericalError("LML: kernel matrix not positive definite");
    const Matrix L = llt.matrixL();
    const Vector alpha = llt.solve(y);
    LmlValue out;
    out.value = -0.5 * y.dot(alpha) - L.diagonal().array().log().sum() -
                0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    // dLML/dtheta = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta)
    const Matrix Kinv = llt.solve(Matrix::Identity(n, n));
    const Matrix W = alpha * alpha.transpose() - Kinv;
    out.gradient = Vector(d + 2);
    out.gradient[0] = 0.5 * (W.array() * K.array()).sum();
    for (int k = 0; k < d; ++k) out.gradient[1 + k] = 0.5 * sf2 * (W.array() * dC[k].array()).sum();
    out.gradient[d + 1] = 0.5 * sf2 * ratio * W.trace();
    return out;
}

GpModel fit(const Dataset& train, const BoxDomain& domain, const KernelParams& init, Rng& rng,
            const FitOptions& options)
{
    if (train.empty()) throw InvalidArgument("fit: training set is empty");
    const int d = domain.dim();
    init.validate(d);
    const Standardization scaling = Standardization::from_data(domain, train);
    const Matrix X = scaling.x_to_internal(train.points);
    Vector y(train.size());
    for (int i = 0; i < train.size(); ++i) y[i] = scaling.y_to_internal(train.values[i]);

    Vector lower(d + 2), upper(d + 2);
    lower[0] = std::log(options.min_signal_variance);
    upper[0] = std::log(options.max_signal_variance);
    lower.segment(1, d).setConstant(std::log(options.min_length_scale));
    upper.segment(1, d).setConstant(std::log(options.max_length_scale));
    const double floor = std::log(options.noise_floor_ratio);
    lower[d + 1] = floor;
    upper[d + 1] = options.fit_noise ? std::log(options.noise_ceiling_ratio) : floor + 1e-12;
    const BoxDomain bounds(lower, upper);

    Vector theta0 = LogHyper::pack(init);
    theta0 = bounds.clamp(theta0);
    std::vector<Vector> starts{theta0};
    for (int r = 1; r < std::max(1, options.restarts); ++r) {
        Vector t(d + 2);
        for (int i = 0; i < d + 2; ++i)
            t[i] = bounds.lower[i] + rng.uniform() * (bounds.upper[i] - bounds.lower[i]);
        // Length-scale draws over the full 1e-3..1e3 range are mostly useless;
        // keep random restarts within two decades of the unit cube.
        for (int i = 1; i <= d; ++i) t[i] = std::log(0.02) + rng.uniform() * (std::log(5.0) - std::log(0.02));
        starts.push_back(bounds.clamp(t));
    }

    const GradientObjective neg_lml = [&](const Vector& theta, Vector* grad) {
        try {
            LmlValue v = log_marginal_likelihood(X, y, theta);
            if (grad) *grad = -v.gradient;
            return -v.value;
        } catch (const NumericalError&) {
            if (grad) grad->setZero(theta.size());
            return std::numeric_limits<double>::infinity();
        }
    };
    LocalOptions lo;
    lo.max_iterations = options.max_iterations;
    lo.gradient_tolerance = 1e-6;
    lo.relative_tolerance = 1e-10;

    Vector best_theta = theta0;
    try {
        best_theta = minimize_box_from(neg_lml, bounds, starts, lo).x;
    } catch (const OptimizationError&) {
        // every start non-finite: fall back to the initial hyperparameters
    }
    KernelParams p = LogHyper::unpack(best_theta);
    p.noise_variance = std::max(p.noise_variance, options.noise_floor_ratio * p.signal_variance);
    return GpModel::condition(train, p, scaling);
}

}  // namespace parbo
