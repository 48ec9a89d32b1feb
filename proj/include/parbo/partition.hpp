#pragma once

#include "parbo/afopt.hpp"
#include "parbo/core.hpp"
#include "parbo/gp.hpp"

#include <memory>
#include <vector>

namespace parbo {

enum class PartitionKind { levelset, hyperbox, variable };

struct PartitionScheme {
    PartitionKind kind = PartitionKind::hyperbox;
    /// levelset: K+1 nondecreasing thresholds and the K bands built from them.
    std::vector<double> thresholds;
    std::vector<LevelSetRegion> bands;
    /// hyperbox: K expanded boxes.
    std::vector<BoxDomain> boxes;
    BoxDomain domain;
    /// variable: K disjoint index sets.
    std::vector<std::vector<int>> variables;

    int count() const;
};

/// Thresholds from the range of the reference mean over probes, refined by
/// local descent from the extreme probes, split into K equal bands. The outer
/// bands are open-ended so values beyond the probed range stay covered.
PartitionScheme levelset_uniform(std::shared_ptr<const GpModel> reference, const BoxDomain& domain,
                                 int k_count, int probe_count, Rng& rng);

/// Bands between consecutive user thresholds (strictly increasing, K+1 values,
/// +-infinity allowed at the ends).
PartitionScheme levelset_custom(std::shared_ptr<const GpModel> reference, const BoxDomain& domain,
                                const std::vector<double>& thresholds);

/// Band index of a reference value; a value on a threshold goes to the band
/// below. Returns -1 outside [thresholds.front(), thresholds.back()].
int band_of(const std::vector<double>& thresholds, double value);

/// splits^d equal boxes, each expanded by overlap phi toward the domain bounds.
PartitionScheme hyperboxes(const BoxDomain& domain, int per_dim_splits, double overlap);

/// Box membership: lower bound inclusive, upper bound exclusive unless it is
/// the domain's upper bound.
bool box_member(const BoxDomain& box, const BoxDomain& domain, const Vector& x);

/// Assigns each variable to a subsystem from a K x d matrix of ARD length
/// scales (rows = subsystems). Importance is 1/l; a variable is "paired" with
/// subsystem k when its importance is at least the median importance of row k.
/// A variable paired with several subsystems goes to the one with the
/// highest ratio importance / row median; a variable paired with none goes to
/// the subsystem of highest raw importance. Ties go to the lowest index.
PartitionScheme variable_partitions(const Matrix& length_scales);

/// Disjoint, in-range, nonempty, and covering {0..dim-1}; throws ConfigError.
void validate_variable_sets(const std::vector<std::vector<int>>& sets, int dim);

}  // namespace parbo
