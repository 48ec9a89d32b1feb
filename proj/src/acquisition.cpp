#include "parbo/acquisition.hpp"

#include <algorithm>
#include <cmath>

namespace parbo {

void AcqSpec::validate() const
{
    if (!(kappa >= 0.0)) throw ConfigError("kappa must be >= 0, got " + std::to_string(kappa));
    if (mode == AcqMode::with_reference && !reference)
        throw ConfigError("acquisition with_reference mode requires a reference function");
}

double lcb(const GpModel& model, const Vector& x, const AcqSpec& spec)
{
    const Prediction p = model.posterior(x);
    if (spec.mode == AcqMode::with_reference) {
        if (!spec.reference) throw ConfigError("acquisition with_reference mode requires a reference function");
        return (spec.reference(x) + p.mean) - spec.kappa * p.stddev;
    }
    return p.mean - spec.kappa * p.stddev;
}

std::vector<double> sample_kappas(int count, double rate, Rng& rng)
{
    if (count < 1) throw InvalidArgument("sample_kappas: count must be >= 1");
    std::vector<double> out(count);
    for (double& k : out) k = rng.exponential(rate);
    return out;
}

Matrix psd_sqrt(const Matrix& C)
{
    Eigen::LDLT<Matrix> ldlt(C);
    const Matrix L = ldlt.matrixL();
    const Vector D = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    // C = P^T L D L^T P
    return ldlt.transpositionsP().transpose() * (L * D.asDiagonal());
}

FantasyAf::FantasyAf(const GpModel& model, std::vector<Vector> pending, int s_count, AcqSpec spec,
                     Rng& rng)
    : FantasyAf(model, std::move(pending), s_count, std::move(spec), rng, Options{})
{
}

FantasyAf::FantasyAf(const GpModel& model, std::vector<Vector> pending, int s_count, AcqSpec spec,
                     Rng& rng, const Options& options)
    : base_(&model), spec_(std::move(spec))
{
    if (s_count < 1) throw InvalidArgument("fantasy AF needs s_count >= 1");
    spec_.validate();
    if (pending.empty()) return;
    const JointPrediction joint = model.joint_posterior(pending);
    const Matrix A = psd_sqrt(joint.covariance);
    const Eigen::Index p = static_cast<Eigen::Index>(pending.size());
    for (int s = 0; s < s_count; ++s) {
        Vector z(p);
        for (Eigen::Index i = 0; i < p; ++i) z[i] = rng.normal();
        const Vector y = joint.mean + A * z;
        std::vector<double> ys(y.data(), y.data() + p);
        if (options.refit) {
            Dataset d = model.train();
            for (Eigen::Index i = 0; i < p; ++i) d.add(pending[i], ys[i]);
            Rng fit_rng = rng.fork(static_cast<std::uint64_t>(s));
            fantasies_.push_back(fit(d, model.scaling().domain, model.params(), fit_rng, options.fit));
        } else {
            fantasies_.push_back(model.with_observations(pending, ys));
        }
        values_.push_back(std::move(ys));
    }
}

double FantasyAf::operator()(const Vector& x) const
{
    if (fantasies_.empty()) return lcb(*base_, x, spec_);
    double sum = 0.0;
    for (const GpModel& m : fantasies_) sum += lcb(m, x, spec_);
    return sum / static_cast<double>(fantasies_.size());
}

double fantasy_mean_af(const GpModel& model, const std::vector<Vector>& pending, const Vector& x,
                       int s_count, const AcqSpec& spec, Rng& rng)
{
    return FantasyAf(model, pending, s_count, spec, rng)(x);
}

double unit_min_distance(const GpModel& model, const std::vector<Vector>& batch)
{
    std::vector<Vector> u;
    u.reserve(batch.size());
    for (const Vector& x : batch) u.push_back(model.scaling().domain.to_unit(x));
    return min_pairwise_distance(u);
}

QLcb::QLcb(const GpModel& model, int q, int s_count, double kappa, Rng& rng, bool aggregate_min,
           double epsilon)
    : model_(&model), z_(q, s_count), kappa_(kappa), aggregate_min_(aggregate_min), epsilon_(epsilon)
{
    if (q < 1 || s_count < 1) throw InvalidArgument("q_lcb needs q >= 1 and s_count >= 1");
    if (!(kappa >= 0.0)) throw InvalidArgument("q_lcb: kappa must be >= 0");
    for (Eigen::Index s = 0; s < z_.cols(); ++s)
        for (Eigen::Index i = 0; i < z_.rows(); ++i) z_(i, s) = rng.normal();
}

double QLcb::operator()(const std::vector<Vector>& batch) const
{
    if (batch.size() > 1) {
        const double dmin = unit_min_distance(*model_, batch);
        if (dmin < epsilon_)
            throw BatchRejectedError("batch points closer than epsilon (" + std::to_string(dmin) +
                                     " < " + std::to_string(epsilon_) + ")");
    }
    return unchecked(batch);
}

double QLcb::unchecked(const std::vector<Vector>& batch) const
{
    if (static_cast<Eigen::Index>(batch.size()) != z_.rows())
        throw InvalidArgument("q_lcb: batch size does not match the draw matrix");
    const JointPrediction joint = model_->joint_posterior(batch);
    Matrix C = joint.covariance;
    // Small relative jitter keeps the factorization defined for nearby points.
    const double scale = std::max(C.diagonal().maxCoeff(), 0.0);
    C.diagonal().array() += 1e-10 * scale + 1e-300;
    Eigen::LLT<Matrix> llt(C);
    if (llt.info() != Eigen::Success) throw BatchRejectedError("joint posterior covariance is singular");
    const Matrix A = llt.matrixL();
    const Matrix spread = (A * z_).cwiseAbs();
    double total = 0.0;
    for (Eigen::Index s = 0; s < z_.cols(); ++s) {
        const Vector v = joint.mean - kappa_ * spread.col(s);
        total += aggregate_min_ ? v.minCoeff() : v.maxCoeff();
    }
    return total / static_cast<double>(z_.cols());
}

double q_lcb(const GpModel& model, const std::vector<Vector>& batch, double kappa, int s_count,
             Rng& rng, bool aggregate_min, double epsilon)
{
    return QLcb(model, static_cast<int>(batch.size()), s_count, kappa, rng, aggregate_min, epsilon)(batch);
}

}  // namespace parbo
