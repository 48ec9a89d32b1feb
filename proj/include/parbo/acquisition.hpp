#pragma once

#include "parbo/core.hpp"
#include "parbo/gp.hpp"

#include <functional>
#include <vector>

namespace parbo {

using ScalarFunction = std::function<double(const Vector&)>;

enum class AcqMode { plain, with_reference };

struct AcqSpec {
    double kappa = 2.0;
    AcqMode mode = AcqMode::plain;
    /// Deterministic reference g; required when mode == with_reference.
    ScalarFunction reference;

    void validate() const;
};

/// Thrown when a q-batch has two points closer than epsilon or a singular
/// joint covariance.
struct BatchRejectedError : Error {
    using Error::Error;
};

/// mu - kappa sigma; with a reference, (g + mu_eps) - kappa sigma_eps where
/// `model` is the residual GP.
double lcb(const GpModel& model, const Vector& x, const AcqSpec& spec);

/// k i.i.d. Exponential(rate) draws.
std::vector<double> sample_kappas(int count, double rate, Rng& rng);

/// Square root A of a PSD matrix (A A^T = C) by pivoted LDL^T; negative
/// pivots from roundoff are clamped to zero.
Matrix psd_sqrt(const Matrix& C);

/// Mean LCB over S fantasy GPs. Each fantasy draws values at all pending
/// points jointly from the current posterior and conditions a copy of the
/// model on them with hyperparameters frozen. Fantasies are drawn once at
/// construction, so the object is a deterministic function of x.
class FantasyAf {
public:
    struct Options {
        /// Re-fit hyperparameters of every fantasy GP (slow, exact).
        bool refit = false;
        FitOptions fit;
    };

    FantasyAf(const GpModel& model, std::vector<Vector> pending, int s_count, AcqSpec spec,
              Rng& rng);
    FantasyAf(const GpModel& model, std::vector<Vector> pending, int s_count, AcqSpec spec,
              Rng& rng, const Options& options);

    double operator()(const Vector& x) const;
    const std::vector<GpModel>& fantasies() const { return fantasies_; }
    const std::vector<std::vector<double>>& fantasy_values() const { return values_; }

private:
    const GpModel* base_;
    AcqSpec spec_;
    std::vector<GpModel> fantasies_;
    std::vector<std::vector<double>> values_;
};

/// One-shot form; pending = [] passes through to lcb().
double fantasy_mean_af(const GpModel& model, const std::vector<Vector>& pending, const Vector& x,
                       int s_count, const AcqSpec& spec, Rng& rng);

/// Minimum pairwise Euclidean distance between batch points, measured in the
/// unit cube of the model domain.
double unit_min_distance(const GpModel& model, const std::vector<Vector>& batch);

/// Monte-Carlo q-LCB estimate with fixed standard-normal draws z (q x S).
/// aggregate_min switches the inner reduction from max to min.
class QLcb {
public:
    QLcb(const GpModel& model, int q, int s_count, double kappa, Rng& rng, bool aggregate_min = false,
         double epsilon = 1e-3);

    /// Throws BatchRejectedError on an epsilon violation or singular covariance.
    double operator()(const std::vector<Vector>& batch) const;
    /// No distance check; a singular joint covariance still throws.
    double unchecked(const std::vector<Vector>& batch) const;

    int q() const { return static_cast<int>(z_.rows()); }
    double epsilon() const { return epsilon_; }
    const Matrix& draws() const { return z_; }

private:
    const GpModel* model_;
    Matrix z_;
    double kappa_;
    bool aggregate_min_;
    double epsilon_;
};

/// Fresh draws on every call.
double q_lcb(const GpModel& model, const std::vector<Vector>& batch, double kappa, int s_count,
             Rng& rng, bool aggregate_min = false, double epsilon = 1e-3);

}  // namespace parbo
