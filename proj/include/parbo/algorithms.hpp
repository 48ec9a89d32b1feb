#pragma once

#include "parbo/acquisition.hpp"
#include "parbo/afopt.hpp"
#include "parbo/core.hpp"
#include "parbo/gp.hpp"
#include "parbo/partition.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace parbo {

/// One experiment outcome. `parts` holds the per-subsystem values f_k when
/// the problem is decomposed (they sum to f) and is empty otherwise.
struct Observation {
    double f = 0.0;
    Vector parts;
};

struct Problem {
    BoxDomain domain;
    std::function<Observation(const Vector&)> evaluate;

    /// Deterministic reference g used by Ref-BO and by reference-in-AF modes.
    ScalarFunction reference;
    /// Surrogate of g; its mean bounds the LS-BO level sets.
    std::shared_ptr<const GpModel> reference_model;
    /// Per-subsystem references g_k for VP-BO with reference-in-AF.
    std::vector<ScalarFunction> subsystem_references;

    /// K of the decomposition f = sum_k f_k, 0 when there is none.
    int subsystem_count = 0;
    /// Simulated seconds for one experiment at x; unset means 0.
    std::function<double(const Vector&)> experiment_cost;

    void validate() const;
};

enum class Algorithm { sbo, refbo, hpbo, hsbo, mcbo, qbo, lsbo, vpbo };

const std::vector<Algorithm>& all_algorithms();
std::string to_string(Algorithm a);
/// Throws InvalidArgument for unknown names.
Algorithm parse_algorithm(const std::string& name);

/// How VP-BO moves the fixed context x_{-k} between rounds.
enum class AnchorRule {
    /// Block j of the anchor takes x_j from the evaluated point with the
    /// smallest f_j; x_{-k} is assembled from the blocks j != k.
    block_best,
    /// x_{-k} takes the complement coordinates of the evaluated point with the
    /// smallest f_k.
    column_argmin,
};

struct AlgoConfig {
    Algorithm algorithm = Algorithm::sbo;
    double kappa = 2.0;
    /// K: experiments per round (q for q-BO, subsystems for VP-BO).
    int batch = 1;
    /// L: rounds after the initial design.
    int iterations = 10;
    /// S: fantasies (MC-BO) or Monte-Carlo draws (q-BO).
    int samples = 16;
    /// HS-BO box overlap.
    double phi = 0.0;
    /// q-BO minimum pairwise distance in unit-cube coordinates.
    double epsilon = 1e-3;
    /// Level-set bands (LS-BO), boxes (HS-BO) or variable blocks (VP-BO).
    /// LS-BO builds K uniform bands from problem.reference_model and HS-BO
    /// builds splits^d boxes from K when unset.
    std::optional<PartitionScheme> partition;
    bool use_reference_in_af = false;
    std::uint64_t seed = 0;

    /// HP-BO: kappa ~ Exponential(kappa_rate), or config.kappa when fixed.
    double kappa_rate = 1.0;
    bool fixed_kappa = false;
    /// Multistart count per AF subproblem; 0 means 10 x subproblem dimension.
    int starts = 0;
    /// HS-BO: also append an observation to every other box whose interior
    /// contains it. The proposing box always keeps its own point.
    bool share_overlap = true;
    /// q-BO: min instead of max inside the Monte-Carlo average.
    bool aggregate_min = false;
    /// q-BO: one fixed draw matrix per round instead of fresh draws per call.
    bool common_random_numbers = true;
    /// MC-BO: refit hyperparameters of every fantasy GP.
    bool refit_fantasies = false;
    AnchorRule anchor = AnchorRule::block_best;

    FitOptions fit = default_fit();
    double initial_length_scale = 0.3;
    LocalOptions local;

    static FitOptions default_fit();
    /// Range and presence checks for the chosen algorithm; fields the
    /// algorithm does not use are reported through warn().
    void validate(int dim) const;
};

struct TraceEntry {
    int iteration = 0;
    std::vector<Vector> batch;
    std::vector<double> values;
    /// VP-BO: rows = evaluated points, columns = subsystem values. For entry 0
    /// the initial points are re-measured to obtain them.
    Matrix subsystem_values;
    Vector best_x;
    double best_f = 0.0;
    /// Cumulative simulated experiment seconds (max over each round's batch).
    double experiment_time = 0.0;
    /// Cumulative experiment time plus measured computation.
    double wall_time = 0.0;
};

struct RunTrace {
    Algorithm algorithm = Algorithm::sbo;
    std::uint64_t seed = 0;
    /// entries[0] holds the initial design and its incumbent, at zero time.
    std::vector<TraceEntry> entries;
    bool failed = false;
    std::string error;

    int iterations() const { return entries.empty() ? 0 : static_cast<int>(entries.size()) - 1; }
    int evaluations() const;
    double final_best() const { return entries.back().best_f; }
    double experiment_time() const { return entries.back().experiment_time; }
    double wall_time() const { return entries.back().wall_time; }
    /// (wall - experiment) / experiment; 0 without experiment time.
    double overhead_ratio() const;
    /// First cumulative experiment time with best_f <= target, or +inf.
    double time_to_reach(double target) const;
    int rounds_to_reach(double target) const;
};

/// Equality of every field except the measured wall-clock column.
bool same_deterministic(const RunTrace& a, const RunTrace& b);

/// Latin hypercube of max(3, d + 1) points, evaluated.
Dataset initial_design(const Problem& problem, Rng& rng);
int initial_design_size(int dim);

RunTrace run(const Problem& problem, const AlgoConfig& config, const Dataset& init);

RunTrace run_sbo(const Problem& problem, const AlgoConfig& config, const Dataset& init);
RunTrace run_refbo(const Problem& problem, const AlgoConfig& config, const Dataset& init);
RunTrace run_hpbo(const Problem& problem, const AlgoConfig& config, const Dataset& init);
RunTrace run_hsbo(const Problem& problem, const AlgoConfig& config, const Dataset& init);
RunTrace run_mcbo(const Problem& problem, const AlgoConfig& config, const Dataset& init);
RunTrace run_qbo(const Problem& problem, const AlgoConfig& config, const Dataset& init);
RunTrace run_lsbo(const Problem& problem, const AlgoConfig& config, const Dataset& init);
RunTrace run_vpbo(const Problem& problem, const AlgoConfig& config, const Dataset& init);

/// HS-BO splits per dimension for K boxes; throws unless K is a perfect d-th power.
int hyperbox_splits(int k_count, int dim);

/// Moves batch members apart until every pair is at least epsilon apart in
/// unit coordinates. Throws OptimizationError when that is impossible.
std::vector<Vector> repair_batch(const BoxDomain& domain, std::vector<Vector> batch, double epsilon,
                                 Rng& rng);

}  // namespace parbo
