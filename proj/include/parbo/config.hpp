#pragma once

#include "parbo/bench.hpp"
#include "parbo/reactor.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace parbo {

constexpr int config_schema_version = 1;

/// A partition as written in the config file. Level-set and hyperbox
/// partitions need the problem before they become a PartitionScheme.
struct PartitionSpec {
    PartitionKind kind = PartitionKind::hyperbox;
    /// levelset: K+1 increasing thresholds, +-inf allowed at the ends.
    std::vector<double> thresholds;
    /// hyperbox: splits per dimension and overlap phi.
    int splits = 1;
    double overlap = 0.0;
    /// variable: disjoint index sets covering every coordinate.
    std::vector<std::vector<int>> sets;

    int count(int dim) const;
};

/// A local minimum of the reactor landscape recorded at calibration.
struct GoldenMinimum {
    double T1 = 0.0;
    double T2 = 0.0;
    double f = 0.0;
};

struct AlgoEntry {
    std::string name;
    AlgoConfig config;
    /// Key into RunConfig::partitions; empty when the algorithm has none.
    std::string partition;
};

/// Parsed run-config file. Only the reactor case study is a problem kind.
struct RunConfig {
    int schema_version = config_schema_version;
    std::string source;

    reactor::ReactorParams reactor = reactor::ReactorParams::defaults();
    reactor::CaseStudyOptions case_options;
    /// Calibrated minima, global first.
    std::vector<GoldenMinimum> golden;

    std::map<std::string, PartitionSpec> partitions;
    std::vector<AlgoEntry> algorithms;

    int run_count = 25;
    std::uint64_t seed_base = 0;
    double target = std::numeric_limits<double>::quiet_NaN();
    int threads = 0;
    /// Labels of [algorithms.*] tables run by `bench`, in order.
    std::vector<std::string> bench_algorithms;

    const AlgoEntry& algorithm(const std::string& name) const;
};

/// Parses TOML text. Errors are ConfigError with "source:line:" prefixes.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

/// Checks everything that does not need the reactor solved: partitions,
/// algorithm settings, reactor parameters and cross references.
void validate(const RunConfig& config);

/// Turns a PartitionSpec into a scheme for the given problem.
PartitionScheme build_partition(const PartitionSpec& spec, const Problem& problem);

/// The config's algorithms with partitions resolved against `problem`.
AlgoConfig resolve_algorithm(const RunConfig& config, const AlgoEntry& entry, const Problem& problem);
BenchmarkConfig build_benchmark(const RunConfig& config, const Problem& problem);

/// Canonical description of the problem part, hashed into the manifest.
std::string problem_text(const RunConfig& config);

}  // namespace parbo
