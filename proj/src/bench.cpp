#include "parbo/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace parbo {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string utc_now()
{
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const fs::path& path, const std::string& text)
{
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    out.close();
    if (!out) throw IoError("write failed for " + path.string());
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text, const fs::path& path)
{
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!rows.empty() && cells.size() != rows.front().size())
            throw IoError(path.string() + ": row " + std::to_string(rows.size() + 1) + " has " +
                          std::to_string(cells.size()) + " columns, header has " +
                          std::to_string(rows.front().size()));
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw IoError(path.string() + ": empty file");
    return rows;
}

double to_double(const std::string& s)
{
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    return std::stod(s);
}

std::string curve_csv(const SummaryCurve& c)
{
    std::ostringstream os;
    os << "time_s,mean,lo,hi\n";
    for (std::size_t i = 0; i < c.time.size(); ++i)
        os << num(c.time[i]) << ',' << num(c.mean[i]) << ',' << num(c.lo[i]) << ',' << num(c.hi[i]) << '\n';
    return os.str();
}

std::string describe(const PartitionScheme& p)
{
    std::ostringstream os;
    switch (p.kind) {
    case PartitionKind::levelset:
        os << "levelset";
        for (double t : p.thresholds) os << ' ' << num(t);
        break;
    case PartitionKind::hyperbox:
        os << "hyperbox";
        for (const BoxDomain& b : p.boxes) {
            os << " [";
            for (Eigen::Index i = 0; i < b.lower.size(); ++i) os << num(b.lower[i]) << ':' << num(b.upper[i]) << ';';
            os << ']';
        }
        break;
    case PartitionKind::variable:
        os << "variable";
        for (const auto& v : p.variables) {
            os << " {";
            for (int i : v) os << i << ';';
            os << '}';
        }
        break;
    }
    return os.str();
}

std::string describe(const AlgoConfig& c)
{
    std::ostringstream os;
    os << "algorithm=" << to_string(c.algorithm) << " kappa=" << num(c.kappa) << " batch=" << c.batch
       << " iterations=" << c.iterations << " samples=" << c.samples << " phi=" << num(c.phi)
       << " epsilon=" << num(c.epsilon) << " use_reference_in_af=" << c.use_reference_in_af
       << " kappa_rate=" << num(c.kappa_rate) << " fixed_kappa=" << c.fixed_kappa << " starts=" << c.starts
       << " share_overlap=" << c.share_overlap << " aggregate_min=" << c.aggregate_min
       << " common_random_numbers=" << c.common_random_numbers << " refit_fantasies=" << c.refit_fantasies
       << " anchor=" << (c.anchor == AnchorRule::block_best ? "block_best" : "column_argmin")
       << " fit.restarts=" << c.fit.restarts << " fit.max_iterations=" << c.fit.max_iterations
       << " fit.noise_floor_ratio=" << num(c.fit.noise_floor_ratio)
       << " fit.noise_ceiling_ratio=" << num(c.fit.noise_ceiling_ratio) << " fit.fit_noise=" << c.fit.fit_noise
       << " initial_length_scale=" << num(c.initial_length_scale)
       << " local.max_iterations=" << c.local.max_iterations
       << " local.gradient_tolerance=" << num(c.local.gradient_tolerance)
       << " partition=" << (c.partition ? describe(*c.partition) : "none");
    return os.str();
}

json trace_json(const RunTrace& t)
{
    json entries = json::array();
    for (const TraceEntry& e : t.entries) {
        json batch = json::array();
        for (const Vector& x : e.batch) batch.push_back(std::vector<double>(x.data(), x.data() + x.size()));
        json sub = json::array();
        for (Eigen::Index i = 0; i < e.subsystem_values.rows(); ++i) {
            const Vector row = e.subsystem_values.row(i).transpose();
            sub.push_back(std::vector<double>(row.data(), row.data() + row.size()));
        }
        entries.push_back({{"iteration", e.iteration},
                           {"batch", batch},
                           {"values", e.values},
                           {"subsystem_values", sub},
                           {"best_f", e.best_f},
                           {"best_x", std::vector<double>(e.best_x.data(), e.best_x.data() + e.best_x.size())},
                           {"exp_time_s", e.experiment_time},
                           {"wall_s", e.wall_time}});
    }
    return {{"algorithm", to_string(t.algorithm)},
            {"seed", t.seed},
            {"failed", t.failed},
            {"error", t.error},
            {"entries", entries}};
}

json curve_json(const SummaryCurve& c)
{
    return {{"time_s", c.time}, {"mean", c.mean}, {"lo", c.lo}, {"hi", c.hi}};
}

json manifest(const BenchmarkResult& r, const BenchmarkConfig& c)
{
    json algos = json::array();
    for (const AlgoResult& a : r.algorithms) {
        json errors = json::array();
        for (int i : a.failed) errors.push_back({{"run", i}, {"error", a.runs[i].error}});
        algos.push_back({{"name", a.name},
                         {"algorithm", to_string(a.algorithm)},
                         {"runs", a.runs.size()},
                         {"failed", errors}});
    }
    return {{"schema_version", trace_schema_version},
            {"config_hash", config_hash(c)},
            {"seed_base", c.seed_base},
            {"run_count", c.run_count},
            {"target", r.target},
            {"algorithms", algos},
            {"timestamps", {{"started", r.started}, {"finished", r.finished}}}};
}

}  // namespace

void BenchmarkConfig::validate(int dim) const
{
    if (run_count < 1) throw ConfigError("run_count must be >= 1");
    if (algorithms.empty()) throw ConfigError("benchmark lists no algorithms");
    if (threads < 0) throw ConfigError("threads must be >= 0");
    std::set<std::string> names;
    for (const NamedAlgo& a : algorithms) {
        if (a.name.empty() || a.name.find_first_of("/\\ ,") != std::string::npos)
            throw ConfigError("algorithm label '" + a.name + "' is not usable as a file name");
        if (!names.insert(a.name).second) throw ConfigError("duplicate algorithm label '" + a.name + "'");
        a.config.validate(dim);
    }
}

std::uint64_t run_seed(std::uint64_t seed_base, int run)
{
    return seed_base + static_cast<std::uint64_t>(run);
}

Dataset shared_initial_design(const Problem& problem, std::uint64_t seed_base, int run)
{
    Rng rng = Rng(run_seed(seed_base, run)).fork(0x1417);
    return initial_design(problem, rng);
}

double incumbent_at(const RunTrace& trace, double t, bool wall)
{
    double best = trace.entries.front().best_f;
    for (const TraceEntry& e : trace.entries) {
        if ((wall ? e.wall_time : e.experiment_time) > t) break;
        best = e.best_f;
    }
    return best;
}

SummaryCurve summarize(const std::vector<const RunTrace*>& traces, bool wall)
{
    SummaryCurve c;
    if (traces.empty()) return c;
    std::set<double> times;
    for (const RunTrace* t : traces)
        for (const TraceEntry& e : t->entries) times.insert(wall ? e.wall_time : e.experiment_time);
    for (double t : times) {
        double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const RunTrace* tr : traces) {
            const double v = incumbent_at(*tr, t, wall);
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        c.time.push_back(t);
        c.mean.push_back(sum / static_cast<double>(traces.size()));
        c.lo.push_back(lo);
        c.hi.push_back(hi);
    }
    return c;
}

void aggregate(AlgoResult& r)
{
    std::vector<const RunTrace*> ok;
    r.final_best.clear();
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
        if (std::find(r.failed.begin(), r.failed.end(), static_cast<int>(i)) != r.failed.end()) continue;
        ok.push_back(&r.runs[i]);
        r.final_best.push_back(r.runs[i].final_best());
    }
    r.by_experiment_time = summarize(ok, false);
    r.by_wall_time = summarize(ok, true);
}

BenchmarkResult run_benchmark(const Problem& problem, const BenchmarkConfig& config)
{
    problem.validate();
    config.validate(problem.domain.dim());
    BenchmarkResult result;
    result.started = utc_now();
    for (int r = 0; r < config.run_count; ++r)
        result.initial.push_back(shared_initial_design(problem, config.seed_base, r));

    const int A = static_cast<int>(config.algorithms.size());
    const int R = config.run_count;
    result.algorithms.resize(A);
    for (int a = 0; a < A; ++a) {
        result.algorithms[a].name = config.algorithms[a].name;
        result.algorithms[a].algorithm = config.algorithms[a].config.algorithm;
        result.algorithms[a].runs.resize(R);
    }

    std::atomic<int> next{0};
    auto worker = [&] {
        for (int task = next++; task < A * R; task = next++) {
            const int a = task / R;
            const int r = task % R;
            AlgoConfig c = config.algorithms[a].config;
            c.seed = run_seed(config.seed_base, r);
            RunTrace t;
            try {
                t = run(problem, c, result.initial[r]);
            } catch (const Error& e) {
                t.algorithm = c.algorithm;
                t.seed = c.seed;
                t.failed = true;
                t.error = e.what();
            }
            result.algorithms[a].runs[r] = std::move(t);
        }
    };
    int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, A * R);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    double best = std::numeric_limits<double>::infinity();
    for (AlgoResult& a : result.algorithms) {
        for (int r = 0; r < R; ++r) {
            if (a.runs[r].failed || a.runs[r].entries.empty()) {
                a.failed.push_back(r);
                continue;
            }
            best = std::min(best, a.runs[r].final_best());
        }
        aggregate(a);
    }
    result.target = std::isnan(config.target) ? best : config.target;
    result.finished = utc_now();
    return result;
}

std::vector<SummaryRow> summary_table(const BenchmarkResult& result)
{
    std::vector<SummaryRow> rows;
    const double tol = 0.01 * std::abs(result.target);
    for (const AlgoResult& a : result.algorithms) {
        SummaryRow row;
        row.name = a.name;
        row.failed_runs = static_cast<int>(a.failed.size());
        std::vector<double> overheads;
        double rounds = 0.0, final_sum = 0.0;
        for (std::size_t i = 0; i < a.runs.size(); ++i) {
            if (std::find(a.failed.begin(), a.failed.end(), static_cast<int>(i)) != a.failed.end()) continue;
            const RunTrace& t = a.runs[i];
            ++row.successful_runs;
            final_sum += t.final_best();
            overheads.push_back(t.overhead_ratio());
            const int k = t.rounds_to_reach(result.target + tol);
            if (k >= 0) {
                ++row.runs_within_1pct;
                rounds += k;
            }
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.final_mean = row.successful_runs ? final_sum / row.successful_runs : nan;
        row.rounds_to_1pct = row.runs_within_1pct ? rounds / row.runs_within_1pct : nan;
        if (overheads.empty()) {
            row.overhead_ratio = nan;
        } else {
            std::sort(overheads.begin(), overheads.end());
            const std::size_t n = overheads.size();
            row.overhead_ratio = n % 2 ? overheads[n / 2] : 0.5 * (overheads[n / 2 - 1] + overheads[n / 2]);
        }
        rows.push_back(row);
    }
    return rows;
}

std::string format_summary(const std::vector<SummaryRow>& rows)
{
    std::ostringstream os;
    os << std::left << std::setw(12) << "algorithm" << std::right << std::setw(8) << "runs" << std::setw(8)
       << "failed" << std::setw(18) << "final_mean" << std::setw(12) << "within1%" << std::setw(14)
       << "rounds_to_1%" << std::setw(12) << "overhead" << '\n';
    for (const SummaryRow& r : rows) {
        os << std::left << std::setw(12) << r.name << std::right << std::setw(8) << r.successful_runs
           << std::setw(8) << r.failed_runs << std::setw(18) << std::fixed << std::setprecision(1) << r.final_mean
           << std::setw(12) << r.runs_within_1pct << std::setw(14) << std::setprecision(2) << r.rounds_to_1pct
           << std::setw(12) << std::setprecision(4) << r.overhead_ratio << '\n';
        os.unsetf(std::ios::floatfield);
    }
    return os.str();
}

std::string canonical_text(const BenchmarkConfig& c)
{
    std::ostringstream os;
    os << "schema_version=" << trace_schema_version << '\n';
    os << "problem=" << c.problem_description << '\n';
    os << "run_count=" << c.run_count << '\n';
    os << "seed_base=" << c.seed_base << '\n';
    os << "target=" << num(c.target) << '\n';
    for (const NamedAlgo& a : c.algorithms) os << "algo " << a.name << ": " << describe(a.config) << '\n';
    return os.str();
}

std::string config_hash(const BenchmarkConfig& c)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_text(c)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string trace_csv(const RunTrace& t, int dim)
{
    int k = 0;
    for (const TraceEntry& e : t.entries) k = std::max<int>(k, static_cast<int>(e.subsystem_values.cols()));
    std::ostringstream os;
    os << "iteration,slot";
    for (int i = 0; i < dim; ++i) os << ",x_" << i;
    os << ",value";
    for (int j = 0; j < k; ++j) os << ",f_" << j + 1;
    os << ",best_f";
    for (int i = 0; i < dim; ++i) os << ",best_x_" << i;
    os << ",exp_time_s\n";
    for (const TraceEntry& e : t.entries) {
        for (std::size_t s = 0; s < e.batch.size(); ++s) {
            os << e.iteration << ',' << s;
            for (int i = 0; i < dim; ++i) os << ',' << num(e.batch[s][i]);
            os << ',' << num(e.values[s]);
            for (int j = 0; j < k; ++j) os << ',' << num(e.subsystem_values(static_cast<Eigen::Index>(s), j));
            os << ',' << num(e.best_f);
            for (int i = 0; i < dim; ++i) os << ',' << num(e.best_x[i]);
            os << ',' << num(e.experiment_time) << '\n';
        }
    }
    return os.str();
}

std::string trace_wall_csv(const RunTrace& t)
{
    std::ostringstream os;
    os << "iteration,wall_s\n";
    for (const TraceEntry& e : t.entries) os << e.iteration << ',' << num(e.wall_time) << '\n';
    return os.str();
}

void export_result(const BenchmarkResult& result, const BenchmarkConfig& config, const std::string& dir,
                   ExportFormat format)
{
    const fs::path root(dir);
    int dim = 0;
    if (!result.initial.empty() && !result.initial.front().empty())
        dim = static_cast<int>(result.initial.front().points.front().size());
    if (format == ExportFormat::json) {
        json algos = json::array();
        for (const AlgoResult& a : result.algorithms) {
            json runs = json::array();
            for (const RunTrace& t : a.runs) runs.push_back(trace_json(t));
            algos.push_back({{"name", a.name},
                             {"runs", runs},
                             {"summary", curve_json(a.by_experiment_time)},
                             {"summary_wall", curve_json(a.by_wall_time)},
                             {"final_best", a.final_best}});
        }
        json doc = manifest(result, config);
        doc["results"] = algos;
        write_file(root / "result.json", doc.dump(1) + "\n");
        return;
    }
    for (const AlgoResult& a : result.algorithms) {
        for (std::size_t r = 0; r < a.runs.size(); ++r) {
            const fs::path base = root / "runs" / a.name;
            write_file(base / (std::to_string(r) + ".csv"), trace_csv(a.runs[r], dim));
            write_file(base / (std::to_string(r) + ".wall.csv"), trace_wall_csv(a.runs[r]));
        }
        write_file(root / "summary" / (a.name + ".csv"), curve_csv(a.by_experiment_time));
        write_file(root / "summary" / (a.name + ".wall.csv"), curve_csv(a.by_wall_time));
    }
    write_file(root / "manifest.json", manifest(result, config).dump(2) + "\n");
}

BenchmarkResult import_result(const std::string& dir)
{
    const fs::path root(dir);
    json m;
    try {
        m = json::parse(read_file(root / "manifest.json"));
    } catch (const json::exception& e) {
        throw IoError((root / "manifest.json").string() + ": " + e.what());
    }
    BenchmarkResult result;
    result.target = m.at("target").get<double>();
    result.started = m.at("timestamps").at("started").get<std::string>();
    result.finished = m.at("timestamps").at("finished").get<std::string>();
    for (const json& a : m.at("algorithms")) {
        AlgoResult ar;
        ar.name = a.at("name").get<std::string>();
        ar.algorithm = parse_algorithm(a.at("algorithm").get<std::string>());
        const int runs = a.at("runs").get<int>();
        for (const json& f : a.at("failed")) ar.failed.push_back(f.at("run").get<int>());
        for (int r = 0; r < runs; ++r) {
            const fs::path base = root / "runs" / ar.name;
            const fs::path path = base / (std::to_string(r) + ".csv");
            const auto rows = parse_csv(read_file(path), path);
            const auto& head = rows.front();
            int dim = 0, k = 0;
            for (const std::string& h : head) {
                if (h.rfind("x_", 0) == 0) ++dim;
                if (h.rfind("f_", 0) == 0) ++k;
            }
            RunTrace t;
            t.algorithm = ar.algorithm;
            t.seed = 0;
            std::map<int, std::vector<const std::vector<std::string>*>> by_iter;
            for (std::size_t i = 1; i < rows.size(); ++i) by_iter[std::stoi(rows[i][0])].push_back(&rows[i]);
            for (const auto& [it, group] : by_iter) {
                TraceEntry e;
                e.iteration = it;
                if (k > 0) e.subsystem_values = Matrix(group.size(), k);
                for (std::size_t s = 0; s < group.size(); ++s) {
                    const auto& row = *group[s];
                    Vector x(dim);
                    for (int i = 0; i < dim; ++i) x[i] = to_double(row[2 + i]);
                    e.batch.push_back(x);
                    e.values.push_back(to_double(row[2 + dim]));
                    for (int j = 0; j < k; ++j) e.subsystem_values(s, j) = to_double(row[3 + dim + j]);
                    e.best_f = to_double(row[3 + dim + k]);
                    e.best_x = Vector(dim);
                    for (int i = 0; i < dim; ++i) e.best_x[i] = to_double(row[4 + dim + k + i]);
                    e.experiment_time = to_double(row[4 + 2 * dim + k]);
                }
                t.entries.push_back(std::move(e));
            }
            const fs::path wpath = base / (std::to_string(r) + ".wall.csv");
            const auto wrows = parse_csv(read_file(wpath), wpath);
            std::map<int, double> wall;
            for (std::size_t i = 1; i < wrows.size(); ++i) wall[std::stoi(wrows[i][0])] = to_double(wrows[i][1]);
            for (TraceEntry& e : t.entries) e.wall_time = wall.count(e.iteration) ? wall[e.iteration] : 0.0;
            if (std::find(ar.failed.begin(), ar.failed.end(), r) != ar.failed.end()) t.failed = true;
            ar.runs.push_back(std::move(t));
        }
        aggregate(ar);
        result.algorithms.push_back(std::move(ar));
    }
    return result;
}

}  // namespace parbo
