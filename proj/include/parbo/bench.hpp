#pragma once

#include "parbo/algorithms.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace parbo {

struct IoError : Error {
    using Error::Error;
};

/// One benchmarked configuration. `name` labels output files and must be
/// unique within a benchmark.
struct NamedAlgo {
    std::string name;
    AlgoConfig config;
};

struct BenchmarkConfig {
    std::vector<NamedAlgo> algorithms;
    int run_count = 25;
    std::uint64_t seed_base = 0;
    /// Canonical text describing the problem; part of the config hash.
    std::string problem_description;
    /// Reference global value for the rounds-to-within-1% column; NaN means
    /// the best value found by any run.
    double target = std::numeric_limits<double>::quiet_NaN();
    /// Worker threads across runs; 0 means hardware concurrency.
    int threads = 0;

    void validate(int dim) const;
};

/// Piecewise-constant mean incumbent on a common time axis.
struct SummaryCurve {
    std::vector<double> time;
    std::vector<double> mean;
    std::vector<double> lo;
    std::vector<double> hi;
};

struct AlgoResult {
    std::string name;
    Algorithm algorithm = Algorithm::sbo;
    std::vector<RunTrace> runs;
    /// Indices into runs of traces with failed == true.
    std::vector<int> failed;
    SummaryCurve by_experiment_time;
    SummaryCurve by_wall_time;
    /// Final incumbent of every successful run.
    std::vector<double> final_best;
};

struct BenchmarkResult {
    std::vector<AlgoResult> algorithms;
    /// initial[r] was given to every algorithm in run r.
    std::vector<Dataset> initial;
    double target = 0.0;
    /// UTC ISO-8601 stamps, informational only.
    std::string started;
    std::string finished;
};

/// Seed of run r; the initial design of run r is drawn from it as well.
std::uint64_t run_seed(std::uint64_t seed_base, int run);
Dataset shared_initial_design(const Problem& problem, std::uint64_t seed_base, int run);

BenchmarkResult run_benchmark(const Problem& problem, const BenchmarkConfig& config);

/// Incumbent of a trace at time t (step function, right-continuous).
double incumbent_at(const RunTrace& trace, double t, bool wall);
/// Mean and envelope over the union of the traces' time stamps.
SummaryCurve summarize(const std::vector<const RunTrace*>& traces, bool wall);
/// Recomputes the curves and final values from `runs` and `failed`.
void aggregate(AlgoResult& result);

struct SummaryRow {
    std::string name;
    int successful_runs = 0;
    int failed_runs = 0;
    double final_mean = 0.0;
    /// Mean rounds until the incumbent is within 1% of the target, over the
    /// runs that get there; NaN when none do.
    double rounds_to_1pct = 0.0;
    int runs_within_1pct = 0;
    /// Median of (wall - experiment) / experiment over successful runs.
    double overhead_ratio = 0.0;
};

std::vector<SummaryRow> summary_table(const BenchmarkResult& result);
std::string format_summary(const std::vector<SummaryRow>& rows);

enum class ExportFormat { csv, json };

constexpr int trace_schema_version = 1;

/// FNV-1a of the canonical benchmark text, as 16 hex digits.
std::string config_hash(const BenchmarkConfig& config);
std::string canonical_text(const BenchmarkConfig& config);

/// Writes runs/<name>/<run>.csv (deterministic columns), runs/<name>/<run>.wall.csv,
/// summary/<name>.csv, summary/<name>.wall.csv and manifest.json; json
/// writes result.json with the same content instead of the CSV files.
void export_result(const BenchmarkResult& result, const BenchmarkConfig& config, const std::string& dir,
                   ExportFormat format = ExportFormat::csv);

/// Reads an exported CSV tree back (trace values, incumbents and times).
BenchmarkResult import_result(const std::string& dir);

/// One trace as CSV rows: header then one row per evaluated point.
std::string trace_csv(const RunTrace& trace, int dim);
std::string trace_wall_csv(const RunTrace& trace);

}  // namespace parbo
