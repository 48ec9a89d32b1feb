// parbo: validate run configs, run one algorithm, or run a whole benchmark.
//
// Exit codes: 0 success, 1 failure (invalid config, solver or I/O error,
// failed runs), 2 usage error.

#include "parbo/bench.hpp"
#include "parbo/config.hpp"
#include "parbo/reactor.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace parbo;

struct UsageError : Error {
    using Error::Error;
};

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

ExportFormat parse_format(const std::string& s)
{
    if (s == "csv") return ExportFormat::csv;
    if (s == "json") return ExportFormat::json;
    throw UsageError("--format must be csv or json");
}

int thread_cap(int configured)
{
    const char* env = std::getenv("PARBO_THREADS");
    if (!env || !*env) return configured;
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (*end || cap < 1) throw UsageError(std::string("PARBO_THREADS must be a positive integer, got '") + env + "'");
    return configured == 0 ? static_cast<int>(cap) : std::min(configured, static_cast<int>(cap));
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    out.close();
    if (!out) throw IoError("write failed for " + path.string());
}

int cmd_validate(const std::string& path)
{
    const RunConfig c = load_config(path);
    validate(c);
    std::cout << path << ": valid (" << c.algorithms.size() << " algorithms, " << c.partitions.size()
              << " partitions, benchmark runs " << c.bench_algorithms.size() << " x " << c.run_count << ")\n";
    return 0;
}

int cmd_run(const std::string& path, const std::string& algo, std::uint64_t seed, const std::string& out,
            const std::string& format)
{
    const RunConfig c = load_config(path);
    validate(c);
    const AlgoEntry* entry = nullptr;
    for (const AlgoEntry& e : c.algorithms)
        if (e.name == algo) entry = &e;
    if (!entry) throw UsageError("unknown algorithm '" + algo + "' (not an [algorithms.*] table in " + path + ")");
    const ExportFormat fmt = parse_format(format);

    const reactor::CaseStudy cs = reactor::make_case_study(c.reactor, c.case_options);
    AlgoConfig cfg = resolve_algorithm(c, *entry, cs.problem);
    cfg.seed = run_seed(seed, 0);
    const Dataset init = shared_initial_design(cs.problem, seed, 0);
    const RunTrace trace = run(cs.problem, cfg, init);
    if (trace.failed) {
        std::cerr << algo << " seed " << seed << " failed: " << trace.error << '\n';
        return 1;
    }
    const std::filesystem::path dir(out);
    if (fmt == ExportFormat::csv) {
        write_text(dir / (algo + ".csv"), trace_csv(trace, cs.problem.domain.dim()));
        write_text(dir / (algo + ".wall.csv"), trace_wall_csv(trace));
    } else {
        BenchmarkConfig b;
        b.algorithms.push_back({algo, cfg});
        b.run_count = 1;
        b.seed_base = seed;
        b.problem_description = problem_text(c);
        BenchmarkResult r;
        r.initial.push_back(init);
        AlgoResult a;
        a.name = algo;
        a.algorithm = cfg.algorithm;
        a.runs.push_back(trace);
        aggregate(a);
        r.algorithms.push_back(a);
        r.target = trace.final_best();
        export_result(r, b, out, fmt);
    }
    const Vector& x = trace.entries.back().best_x;
    std::cout << "final incumbent " << num(trace.final_best()) << " at (" << num(x[0]) << ", " << num(x[1])
              << ")\n";
    return 0;
}

int cmd_bench(const std::string& path, const std::string& out, bool dry_run, const std::string& format)
{
    RunConfig c = load_config(path);
    validate(c);
    const ExportFormat fmt = parse_format(format);
    c.threads = thread_cap(c.threads);
    if (dry_run) {
        std::cout << "plan for " << path << ": " << c.bench_algorithms.size() << " algorithms x " << c.run_count
                  << " runs, seeds " << c.seed_base << ".." << c.seed_base + c.run_count - 1 << ", threads "
                  << (c.threads ? std::to_string(c.threads) : std::string("auto")) << '\n';
        for (const std::string& name : c.bench_algorithms) {
            const AlgoEntry& e = c.algorithm(name);
            const AlgoConfig& a = e.config;
            std::cout << "  " << name << ": " << to_string(a.algorithm) << " K=" << a.batch
                      << " L=" << a.iterations << " kappa=" << num(a.kappa)
                      << (e.partition.empty() ? "" : " partition=" + e.partition) << '\n';
        }
        std::cout << "output: " << out << '\n';
        return 0;
    }
    const reactor::CaseStudy cs = reactor::make_case_study(c.reactor, c.case_options);
    BenchmarkConfig b = build_benchmark(c, cs.problem);
    if (std::isnan(b.target) && !c.golden.empty()) b.target = c.golden.front().f;
    const BenchmarkResult r = run_benchmark(cs.problem, b);
    export_result(r, b, out, fmt);
    std::cout << format_summary(summary_table(r));
    int failed = 0;
    for (const AlgoResult& a : r.algorithms) {
        for (int i : a.failed) std::cerr << a.name << " run " << i << " failed: " << a.runs[i].error << '\n';
        failed += static_cast<int>(a.failed.size());
    }
    return failed ? 1 : 0;
}

int cmd_grid(const std::string& path, int n, const std::string& out)
{
    const RunConfig c = load_config(path);
    validate(c);
    if (n < 2) throw UsageError("--n must be >= 2");
    const reactor::ReferenceModel ref = reactor::reference_fit(
        c.reactor, reactor::evenly_spaced(303.0, 423.0, c.case_options.fit_temperatures));
    std::string text = "T1,T2,f,f1,f2,g\n";
    for (double T1 : reactor::evenly_spaced(303.0, 423.0, n)) {
        for (double T2 : reactor::evenly_spaced(303.0, 423.0, n)) {
            const reactor::Performance p = reactor::performance(c.reactor, T1, T2);
            const double g = reactor::reference_performance(c.reactor, ref, T1, T2).f;
            text += num(T1) + ',' + num(T2) + ',' + num(p.f) + ',' + num(p.f1) + ',' + num(p.f2) + ',' + num(g) + '\n';
        }
    }
    if (out.empty())
        std::cout << text;
    else
        write_text(out, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"parbo: parallel Bayesian optimization benchmarks"};
    app.require_subcommand(1);

    std::string config, algo, out, format = "csv";
    std::uint64_t seed = 0;
    bool dry_run = false;
    int n = 13;

    auto* v = app.add_subcommand("validate", "check a run-config file");
    v->add_option("config", config, "run-config file")->required();

    auto* r = app.add_subcommand("run", "run one algorithm once and write its trace");
    r->add_option("config", config, "run-config file")->required();
    r->add_option("--algo", algo, "label of an [algorithms.*] table")->required();
    r->add_option("--seed", seed, "run seed (also seeds the initial design)");
    r->add_option("--out", out, "output directory")->required();
    r->add_option("--format", format, "csv or json");

    auto* b = app.add_subcommand("bench", "run the configured benchmark");
    b->add_option("config", config, "run-config file")->required();
    b->add_option("--out", out, "output directory")->required();
    b->add_flag("--dry-run", dry_run, "print the execution plan only");
    b->add_option("--format", format, "csv or json");

    auto* g = app.add_subcommand("grid", "tabulate f, f1, f2 and g on an n x n temperature grid");
    g->add_option("config", config, "run-config file")->required();
    g->add_option("--n", n, "points per dimension");
    g->add_option("--out", out, "CSV file (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*v) return cmd_validate(config);
        if (*r) return cmd_run(config, algo, seed, out, format);
        if (*b) return cmd_bench(config, out, dry_run, format);
        if (*g) return cmd_grid(config, n, out);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
