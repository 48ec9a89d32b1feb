#pragma once

#include "parbo/core.hpp"
#include "parbo/gp.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace parbo {

using Objective = std::function<double(const Vector&)>;
/// Value plus optional gradient: the callee fills *grad when grad != nullptr.
using GradientObjective = std::function<double(const Vector&, Vector* grad)>;

struct EmptyRegionError : OptimizationError {
    using OptimizationError::OptimizationError;
};

struct LocalOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-9;
    double relative_tolerance = 1e-13;
    int memory = 8;
    /// Central-difference step in unit-cube coordinates.
    double fd_step = 1e-6;
};

struct Minimum {
    Vector x;
    double value = 0.0;
};

/// Projected limited-memory BFGS on a box with Armijo backtracking along the
/// projection arc. Returns the best point visited.
Minimum local_minimize(const GradientObjective& f, const BoxDomain& box, const Vector& x0,
                       const LocalOptions& options = {});

/// Wraps a scalar function with central-difference gradients (one-sided at
/// active bounds) in the unit cube of `box`.
GradientObjective finite_difference(const Objective& f, const BoxDomain& box, double step);

inline int default_starts(int dim) { return 10 * dim; }

/// Best of local descents from `starts` Latin-hypercube points. Starts with a
/// non-finite objective are dropped; throws OptimizationError if all are.
Minimum minimize_box(const Objective& af, const BoxDomain& domain, int starts, Rng& rng,
                     const LocalOptions& options = {});

/// Same, from explicit starting points and with user-supplied gradients.
Minimum minimize_box_from(const GradientObjective& f, const BoxDomain& domain,
                          const std::vector<Vector>& starts, const LocalOptions& options = {});

/// Band alpha_lo <= mean of `surrogate` <= alpha_hi. Infinite bounds allowed.
struct LevelSetRegion {
    std::shared_ptr<const GpModel> surrogate;
    double alpha_lo = -std::numeric_limits<double>::infinity();
    double alpha_hi = std::numeric_limits<double>::infinity();

    bool vacuous() const { return std::isinf(alpha_lo) && std::isinf(alpha_hi); }
    double tolerance() const;
    double value(const Vector& x) const { return surrogate->mean(x); }
    /// Distance of `v` outside [alpha_lo, alpha_hi]; zero inside.
    double violation(double v) const;
    bool feasible(const Vector& x) const { return violation(value(x)) <= tolerance(); }
};

struct LevelSetOptions {
    int probe_count = 4096;
    double initial_penalty = 1e3;
    double max_penalty = 1e9;
};

/// Minimizes `af` over {x in domain : x in region} by an exact penalty on the
/// band violation (in standardized surrogate units) with x10 escalation,
/// followed by bisection toward the best feasible probe if needed.
Minimum minimize_levelset(const Objective& af, const BoxDomain& domain,
                          const LevelSetRegion& region, int starts, Rng& rng,
                          const LocalOptions& options = {},
                          const LevelSetOptions& ls_options = {});

/// Minimizes over the coordinates in `free` with the complement pinned to
/// `fixed_values` (ordered as the complement indices). Returns the free block.
Minimum minimize_subspace(const Objective& af, const BoxDomain& domain,
                          const std::vector<int>& free, const Vector& fixed_values, int starts,
                          Rng& rng, const LocalOptions& options = {});

/// Complement of `free` in {0, ..., dim-1}, ascending.
std::vector<int> complement_indices(const std::vector<int>& free, int dim);

/// Full point from a free block and complement values.
Vector embed(const std::vector<int>& free, const Vector& free_values,
             const std::vector<int>& fixed, const Vector& fixed_values);

}  // namespace parbo
