#include "parbo/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace parbo {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

std::vector<LevelSetRegion> make_bands(const std::shared_ptr<const GpModel>& ref,
                                       const std::vector<double>& thresholds)
{
    std::vector<LevelSetRegion> bands;
    for (std::size_t k = 0; k + 1 < thresholds.size(); ++k) {
        LevelSetRegion r;
        r.surrogate = ref;
        r.alpha_lo = thresholds[k];
        r.alpha_hi = thresholds[k + 1];
        bands.push_back(r);
    }
    return bands;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int PartitionScheme::count() const
{
    switch (kind) {
    case PartitionKind::levelset: return static_cast<int>(bands.size());
    case PartitionKind::hyperbox: return static_cast<int>(boxes.size());
    case PartitionKind::variable: return static_cast<int>(variables.size());
    }
    return 0;
}

PartitionScheme levelset_custom(std::shared_ptr<const GpModel> reference, const BoxDomain& domain,
                                const std::vector<double>& thresholds)
{
    if (!reference) throw InvalidArgument("level-set partition needs a reference model");
    if (thresholds.size() < 2) throw InvalidArgument("level-set partition needs at least two thresholds");
    for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
        if (!(thresholds[i] < thresholds[i + 1]))
            throw InvalidArgument("level-set thresholds must be strictly increasing");
    PartitionScheme s;
    s.kind = PartitionKind::levelset;
    s.domain = domain;
    s.thresholds = thresholds;
    s.bands = make_bands(reference, thresholds);
    return s;
}

PartitionScheme levelset_uniform(std::shared_ptr<const GpModel> reference, const BoxDomain& domain,
                                 int k_count, int probe_count, Rng& rng)
{
    if (!reference) throw InvalidArgument("level-set partition needs a reference model");
    if (k_count < 1) throw InvalidArgument("level-set partition needs K >= 1");
    const std::vector<Vector> probes = latin_hypercube(domain, std::max(probe_count, 1), rng);
    std::vector<double> values(probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) values[i] = reference->mean(probes[i]);

    std::vector<int> order(probes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values[a] < values[b]; });
    const int refine = std::min<int>(5, static_cast<int>(order.size()));

    const GradientObjective mean_fn = finite_difference(
        [&](const Vector& x) { return reference->mean(x); }, domain, 1e-6);
    const GradientObjective neg_mean_fn = finite_difference(
        [&](const Vector& x) { return -reference->mean(x); }, domain, 1e-6);
    double lo = values[order.front()];
    double hi = values[order.back()];
    for (int i = 0; i < refine; ++i) {
        lo = std::min(lo, local_minimize(mean_fn, domain, probes[order[i]]).value);
        hi = std::max(hi, -local_minimize(neg_mean_fn, domain, probes[order[order.size() - 1 - i]]).value);
    }

    std::vector<double> t(k_count + 1);
    if (k_count == 1) {
        t = {-inf, inf};
    } else {
        if (hi - lo < 1e-12)
            throw NumericalError("reference is flat over the domain (range " + std::to_string(hi - lo) +
                                 "); cannot form " + std::to_string(k_count) + " level-set bands");
        const double delta = (hi - lo) / k_count;
        for (int k = 0; k <= k_count; ++k) t[k] = lo + k * delta;
        t[k_count] = hi;
    }
    PartitionScheme s;
    s.kind = PartitionKind::levelset;
    s.domain = domain;
    s.thresholds = t;
    std::vector<double> open = t;
    open.front() = -inf;
    open.back() = inf;
    s.bands = make_bands(reference, open);
    return s;
}

int band_of(const std::vector<double>& thresholds, double value)
{
    const int k = static_cast<int>(thresholds.size()) - 1;
    if (k < 1 || value < thresholds.front() || value > thresholds.back()) return -1;
    for (int i = 0; i < k; ++i)
        if (value <= thresholds[i + 1]) return i;
    return k - 1;
}

PartitionScheme hyperboxes(const BoxDomain& domain, int per_dim_splits, double overlap)
{
    if (per_dim_splits < 1) throw InvalidArgument("hyperboxes: per_dim_splits must be >= 1");
    if (!(overlap >= 0.0 && overlap <= 1.0)) throw InvalidArgument("hyperboxes: overlap must lie in [0, 1]");
    const int d = domain.dim();
    long total = 1;
    for (int i = 0; i < d; ++i) {
        total *= per_dim_splits;
        if (total > 1'000'000) throw InvalidArgument("hyperboxes: too many boxes");
    }
    PartitionScheme s;
    s.kind = PartitionKind::hyperbox;
    s.domain = domain;
    std::vector<int> idx(d, 0);
    for (long b = 0; b < total; ++b) {
        long rem = b;
        for (int i = 0; i < d; ++i) {
            idx[i] = static_cast<int>(rem % per_dim_splits);
            rem /= per_dim_splits;
        }
        Vector lo(d), hi(d);
        for (int i = 0; i < d; ++i) {
            const double w = domain.upper[i] - domain.lower[i];
            const double l = idx[i] == 0 ? domain.lower[i]
                                         : domain.lower[i] + w * idx[i] / per_dim_splits;
            const double u = idx[i] == per_dim_splits - 1
                                 ? domain.upper[i]
                                 : domain.lower[i] + w * (idx[i] + 1) / per_dim_splits;
            lo[i] = overlap == 1.0 ? domain.lower[i] : l - overlap * (l - domain.lower[i]);
            hi[i] = overlap == 1.0 ? domain.upper[i] : u + overlap * (domain.upper[i] - u);
        }
        s.boxes.emplace_back(lo, hi);
    }
    return s;
}

bool box_member(const BoxDomain& box, const BoxDomain& domain, const Vector& x)
{
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] < box.lower[i]) return false;
        if (box.upper[i] >= domain.upper[i]) {
            if (x[i] > box.upper[i]) return false;
        } else if (x[i] >= box.upper[i]) {
            return false;
        }
    }
    return true;
}

PartitionScheme variable_partitions(const Matrix& length_scales)
{
    const Eigen::Index K = length_scales.rows();
    const Eigen::Index d = length_scales.cols();
    if (K < 1 || d < 1) throw InvalidArgument("variable_partitions: empty length-scale matrix");
    if (!(length_scales.array() > 0.0).all())
        throw InvalidArgument("variable_partitions: length scales must be positive");
    const Matrix imp = length_scales.cwiseInverse();
    Matrix score(K, d);
    for (Eigen::Index k = 0; k < K; ++k) {
        std::vector<double> row(d);
        for (Eigen::Index j = 0; j < d; ++j) row[j] = imp(k, j);
        score.row(k) = imp.row(k) / median(row);
    }

    PartitionScheme s;
    s.kind = PartitionKind::variable;
    s.variables.assign(K, {});
    for (Eigen::Index j = 0; j < d; ++j) {
        int chosen = -1;
        double best = -1.0;
        for (Eigen::Index k = 0; k < K; ++k)
            if (score(k, j) >= 1.0 && score(k, j) > best) {
                best = score(k, j);
                chosen = static_cast<int>(k);
            }
        if (chosen < 0) {
            for (Eigen::Index k = 0; k < K; ++k)
                if (imp(k, j) > best) {
                    best = imp(k, j);
                    chosen = static_cast<int>(k);
                }
        }
        bool identical = K > 1;
        for (Eigen::Index k = 1; k < K && identical; ++k) identical = imp(k, j) == imp(0, j);
        if (identical) {
            chosen = 0;
            warn("variable " + std::to_string(j) +
                 " has identical importance in every subsystem; assigned to subsystem 0");
        }
        s.variables[chosen].push_back(static_cast<int>(j));
    }
    return s;
}

void validate_variable_sets(const std::vector<std::vector<int>>& sets, int dim)
{
    std::vector<int> owner(dim, -1);
    for (std::size_t k = 0; k < sets.size(); ++k) {
        if (sets[k].empty()) throw ConfigError("variable partition " + std::to_string(k) + " is empty");
        for (int j : sets[k]) {
            if (j < 0 || j >= dim)
                throw ConfigError("variable partition " + std::to_string(k) + " references index " +
                                  std::to_string(j) + " outside 0.." + std::to_string(dim - 1));
            if (owner[j] >= 0)
                throw ConfigError("variable partitions must be disjoint: index " + std::to_string(j) +
                                  " appears in partitions " + std::to_string(owner[j]) + " and " +
                                  std::to_string(k));
            owner[j] = static_cast<int>(k);
        }
    }
    for (int j = 0; j < dim; ++j)
        if (owner[j] < 0) throw ConfigError("variable " + std::to_string(j) + " is not assigned to any partition");
}

}  // namespace parbo
