#pragma once

#include "parbo/core.hpp"

#include <cmath>
#include <optional>

namespace parbo {

/// Matérn-5/2 ARD hyperparameters. A GpModel stores these in its internal
/// coordinates: inputs mapped to the unit cube of the model's domain and
/// outputs standardized to zero mean and unit variance.
struct KernelParams {
    static constexpr double smoothness = 2.5;

    double signal_variance = 1.0;
    Vector length_scales;
    double noise_variance = 1e-8;

    static KernelParams isotropic(int dim, double length_scale = 0.3, double signal_variance = 1.0,
                                  double noise_variance = 1e-8);
    int dim() const { return static_cast<int>(length_scales.size()); }
    void validate(int dim) const;
};

/// ARD-scaled Euclidean distance between two points.
template <typename DerivedA, typename DerivedB>
double scaled_distance(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                       const Vector& length_scales)
{
    return ((a - b).array() / length_scales.array()).matrix().norm();
}

/// sigma^2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r) at scaled distance r.
inline double matern25_profile(double r, double signal_variance)
{
    const double s5r = std::sqrt(5.0) * r;
    return signal_variance * (1.0 + s5r + 5.0 * r * r / 3.0) * std::exp(-s5r);
}

double matern25(const Vector& a, const Vector& b, const KernelParams& params);

/// n x m cross-covariance between the rows of A and B (noise-free).
Matrix kernel_matrix(const Matrix& A, const Matrix& B, const KernelParams& params);

/// Affine maps between user coordinates and the model's internal ones.
struct Standardization {
    BoxDomain domain;
    double y_mean = 0.0;
    double y_scale = 1.0;

    static Standardization from_data(const BoxDomain& domain, const Dataset& data);
    Vector x_to_internal(const Vector& x) const { return domain.to_unit(x); }
    Matrix x_to_internal(const std::vector<Vector>& xs) const;
    double y_to_internal(double y) const { return (y - y_mean) / y_scale; }
    double y_from_internal(double z) const { return y_mean + y_scale * z; }
};

struct Prediction {
    double mean = 0.0;
    double stddev = 0.0;
};

struct JointPrediction {
    Vector mean;
    Matrix covariance;
};

/// Exact GP posterior with cached Cholesky factor. Immutable once built.
class GpModel {
public:
    GpModel() = default;

    /// Conditions a GP with fixed hyperparameters on `train`.
    static GpModel condition(const Dataset& train, const KernelParams& params,
                             const Standardization& scaling);
    /// Convenience: standardization derived from `train`.
    static GpModel condition(const Dataset& train, const KernelParams& params,
                             const BoxDomain& domain);

    Prediction posterior(const Vector& x) const;
    /// posterior(x).mean without the O(n^2) variance solve.
    double mean(const Vector& x) const;
    /// Posterior in internal (standardized) units, variance before clamping.
    void posterior_internal(const Vector& u, double& mean, double& variance) const;
    /// Joint posterior of the latent function at several points (user units).
    JointPrediction joint_posterior(const std::vector<Vector>& xs) const;

    /// Draw from Normal(posterior mean, posterior variance) at x.
    double sample(const Vector& x, Rng& rng) const;

    /// Same hyperparameters and standardization, extra observations appended
    /// by a block Cholesky update.
    GpModel with_observations(const std::vector<Vector>& xs, const std::vector<double>& ys) const;

    double log_marginal_likelihood() const { return lml_; }

    const KernelParams& params() const { return params_; }
    const Standardization& scaling() const { return scaling_; }
    const Dataset& train() const { return train_; }
    const Matrix& chol() const { return chol_; }
    const Vector& alpha() const { return alpha_; }
    /// Internal training inputs (rows in the unit cube).
    const Matrix& inputs() const { return inputs_; }
    double jitter() const { return jitter_; }
    int dim() const { return scaling_.domain.dim(); }
    /// Length scales expressed in user units of the domain.
    Vector length_scales_user() const;

private:
    KernelParams params_;
    Standardization scaling_;
    Dataset train_;
    Matrix inputs_;
    Vector targets_;
    Matrix chol_;
    Vector alpha_;
    double jitter_ = 0.0;
    double lml_ = 0.0;
};

/// Lower Cholesky factor of K with jitter escalation 1e-10, 1e-9, ..., 1e-4
/// (relative to the mean diagonal). Throws NumericalError when all fail.
Matrix jittered_cholesky(const Matrix& K, double* jitter_used = nullptr);

struct LmlValue {
    double value = 0.0;
    Vector gradient;  // w.r.t. log-hyperparameters
};

/// Log-hyperparameter layout: [log signal_variance, log l_1..l_d, log noise_ratio]
/// where noise_variance = signal_variance * noise_ratio.
struct LogHyper {
    static Vector pack(const KernelParams& p);
    static KernelParams unpack(const Vector& theta);
};

/// Log marginal likelihood and its gradient for internal inputs X (rows) and
/// standardized targets y.
LmlValue log_marginal_likelihood(const Matrix& X, const Vector& y, const Vector& theta);

struct FitOptions {
    int restarts = 5;
    double noise_floor_ratio = 1e-8;
    double noise_ceiling_ratio = 1e-1;
    bool fit_noise = true;
    double min_length_scale = 1e-3;
    double max_length_scale = 1e3;
    double min_signal_variance = 1e-3;
    double max_signal_variance = 1e3;
    int max_iterations = 200;
};

/// Multistart maximization of the log marginal likelihood in log space;
/// restart 0 starts from `init`, the rest from uniform draws in the bounds.
GpModel fit(const Dataset& train, const BoxDomain& domain, const KernelParams& init, Rng& rng,
            const FitOptions& options = {});

}  // namespace parbo
