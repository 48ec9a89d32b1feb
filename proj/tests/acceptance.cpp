// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance 3 5        selected criteria
//
// Criterion 7 exports its benchmark to PARBO_ACCEPT_DIR; criterion 9 reads it
// from there and runs the q-BO part itself when it is missing.

#include "oracles.hpp"
#include "parbo/acquisition.hpp"
#include "parbo/bench.hpp"
#include "parbo/config.hpp"
#include "parbo/partition.hpp"
#include "parbo/reactor.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

using namespace parbo;
namespace fs = std::filesystem;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
const std::string default_config = std::string(PARBO_SOURCE_DIR) + "/configs/default.toml";
const std::string bench_dir = PARBO_ACCEPT_DIR;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0)
{
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool same_run(RunTrace a, RunTrace b)
{
    a.algorithm = b.algorithm;
    return same_deterministic(a, b);
}

// ---------------------------------------------------------------------------

void gp_posterior(Outcome& o)
{
    Rng rng(2024);
    double worst_mean = 0.0, worst_var = 0.0;
    for (int inst = 0; inst < 200; ++inst) {
        const int d = 1 + inst % 4;
        const int n = 1 + static_cast<int>(rng.uniform() * 50);
        const BoxDomain dom = BoxDomain::unit(d);
        Dataset D;
        for (int i = 0; i < n; ++i) {
            Vector x(d);
            for (int j = 0; j < d; ++j) x[j] = rng.uniform();
            D.add(x, std::sin(3.0 * x.sum()) + 0.3 * rng.normal());
        }
        KernelParams p;
        p.signal_variance = 0.5 + rng.uniform();
        p.length_scales = Vector(d);
        for (int j = 0; j < d; ++j) p.length_scales[j] = 0.2 + rng.uniform();
        p.noise_variance = 1e-6 + 1e-3 * rng.uniform();
        const GpModel m = GpModel::condition(D, p, dom);
        Vector y(n);
        for (int i = 0; i < n; ++i) y[i] = m.scaling().y_to_internal(D.values[i]);
        for (int t = 0; t < 5; ++t) {
            Vector u(d);
            for (int j = 0; j < d; ++j) u[j] = rng.uniform();
            double mo, vo, mm, vm;
            oracle::dense_posterior(m.inputs(), y, p.signal_variance, p.length_scales, p.noise_variance + m.jitter(),
                                    u, mo, vo);
            m.posterior_internal(u, mm, vm);
            worst_mean = std::max(worst_mean, std::abs(mm - mo));
            worst_var = std::max(worst_var, std::abs(vm - vo));
        }
    }
    o.detail << "200 instances, max |dmean| " << worst_mean << ", max |dvar| " << worst_var;
    o.require(worst_mean < 1e-8 && worst_var < 1e-8, "1e-8 absolute");
}

void lml_gradient(Outcome& o)
{
    Rng rng(7);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const int d = 1 + t % 3, n = 8 + t % 15;
        Matrix X(n, d);
        Vector y(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) X(i, j) = rng.uniform();
            y[i] = std::cos(4.0 * X.row(i).sum()) + 0.1 * rng.normal();
        }
        y = (y.array() - y.mean()) / std::sqrt((y.array() - y.mean()).square().mean());
        Vector theta(d + 2);
        theta[0] = std::log(0.3 + 2.0 * rng.uniform());
        for (int j = 0; j < d; ++j) theta[1 + j] = std::log(0.1 + rng.uniform());
        theta[d + 1] = std::log(1e-4 + 0.1 * rng.uniform());
        const LmlValue v = log_marginal_likelihood(X, y, theta);
        for (int k = 0; k < theta.size(); ++k) {
            const double h = 1e-5;
            Vector a = theta, b = theta;
            a[k] += h;
            b[k] -= h;
            const double fd =
                (log_marginal_likelihood(X, y, a).value - log_marginal_likelihood(X, y, b).value) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - v.gradient[k]) / std::max(1.0, std::abs(fd)));
        }
    }
    o.detail << "50 points, max relative error " << worst;
    o.require(worst <= 1e-5, "1e-5 relative");
}

// f = Branin-like bowl with two basins on [-1, 1]^2, split into two parts.
Problem reduction_problem()
{
    Problem p;
    p.domain = BoxDomain(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0));
    p.evaluate = [](const Vector& x) {
        Observation ob;
        ob.parts = (Vector(2) << std::sin(3.0 * x[0]) + x[0] * x[0], 0.5 * (x[1] - 0.2) * (x[1] - 0.2)).finished();
        ob.f = ob.parts.sum();
        return ob;
    };
    p.subsystem_count = 2;
    p.experiment_cost = [](const Vector&) { return 10.0; };
    return p;
}

void reductions(Outcome& o)
{
    Problem p = reduction_problem();
    int equal = 0, total = 0;
    std::vector<std::string> broken;
    for (std::uint64_t seed : {1, 2, 3}) {
        Rng drng(seed);
        const Dataset init = initial_design(p, drng);
        auto cfg = [&](Algorithm a) {
            AlgoConfig c;
            c.algorithm = a;
            c.batch = 1;
            c.iterations = 6;
            c.seed = seed;
            return c;
        };
        const RunTrace s = run_sbo(p, cfg(Algorithm::sbo), init);

        Problem zero = p;
        zero.reference = [](const Vector&) { return 0.0; };
        AlgoConfig hp = cfg(Algorithm::hpbo);
        hp.fixed_kappa = true;
        AlgoConfig vp = cfg(Algorithm::vpbo);
        PartitionScheme block;
        block.kind = PartitionKind::variable;
        block.domain = p.domain;
        block.variables = {{0, 1}};
        vp.partition = block;
        const std::pair<const char*, RunTrace> cases[] = {
            {"Ref-BO(g=0)", run_refbo(zero, cfg(Algorithm::refbo), init)},
            {"HP-BO(K=1)", run_hpbo(p, hp, init)},
            {"LS-BO(K=1)", run_lsbo(p, cfg(Algorithm::lsbo), init)},
            {"VP-BO(K=1)", run_vpbo(p, vp, init)},
            {"MC-BO(K=1)", run_mcbo(p, cfg(Algorithm::mcbo), init)},
        };
        for (const auto& [name, t] : cases) {
            ++total;
            if (!t.failed && same_run(t, s))
                ++equal;
            else
                broken.push_back(std::string(name) + " seed " + std::to_string(seed));
        }
    }
    o.detail << equal << "/" << total << " traces bitwise equal to S-BO";
    for (const std::string& b : broken) o.require(false, b);
}

void partitions(Outcome& o)
{
    const BoxDomain unit = BoxDomain::unit(1);
    auto box_is = [](const BoxDomain& b, double lo, double hi) { return b.lower[0] == lo && b.upper[0] == hi; };
    const PartitionScheme h0 = hyperboxes(unit, 2, 0.0), h5 = hyperboxes(unit, 2, 0.5), h1 = hyperboxes(unit, 2, 1.0);
    const bool boxes = box_is(h0.boxes[0], 0.0, 0.5) && box_is(h0.boxes[1], 0.5, 1.0) &&
                       box_is(h5.boxes[0], 0.0, 0.75) && box_is(h5.boxes[1], 0.25, 1.0) &&
                       box_is(h1.boxes[0], 0.0, 1.0) && box_is(h1.boxes[1], 0.0, 1.0);
    o.require(boxes, "hyperbox closed forms");

    // Level sets of a GP fitted to x^2 on [-1, 1], split at 0.5.
    Dataset D;
    for (int i = 0; i < 21; ++i) {
        const double x = -1.0 + i / 10.0;
        D.add(Vector::Constant(1, x), x * x);
    }
    Rng rng(3);
    const BoxDomain dom(Vector::Constant(1, -1.0), Vector::Constant(1, 1.0));
    const auto g = std::make_shared<const GpModel>(fit(D, dom, KernelParams::isotropic(1, 0.5), rng));
    Rng prng(5);
    const PartitionScheme s = levelset_uniform(g, dom, 2, 4096, prng);
    int wrong = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        const double x = -1.0 + 2.0 * (i + 0.5) / n;
        const bool low = x * x <= 0.5;
        const Vector v = Vector::Constant(1, x);
        if (s.bands[0].feasible(v) != low || s.bands[1].feasible(v) == low) ++wrong;
    }
    o.require(wrong <= n / 100, "level-set misclassification above 1%");

    Matrix published(2, 2);
    published << 0.145, 1000.0, 0.498, 0.399;
    const PartitionScheme v = variable_partitions(published);
    const bool ard = v.variables.size() == 2 && v.variables[0] == std::vector<int>{0} &&
                     v.variables[1] == std::vector<int>{1};
    o.require(ard, "ARD assignment");
    o.detail << "hyperboxes " << (boxes ? "exact" : "wrong") << ", level-set misclassified " << wrong << "/" << n
             << ", ARD assignment T1->1 T2->2 " << (ard ? "reproduced" : "not reproduced");
}

void reactor_physics(Outcome& o)
{
    using namespace reactor;
    const ReactorParams p = ReactorParams::defaults();
    double worst = 0.0;
    bool nonneg = true;
    for (double T1 : evenly_spaced(303.0, 423.0, 13))
        for (double T2 : evenly_spaced(303.0, 423.0, 13)) {
            const SteadyState s = steady_state(p, T1, T2);
            Conc in1 = Conc::Zero();
            in1[A] = p.CA0;
            in1[D] = p.CD0;
            const Conc r1 = cstr_residual(s.reactor1.C, in1, p.V1 / p.F1, rate_constants(p, T1), p.reverse_factor);
            const Conc r2 =
                cstr_residual(s.reactor2.C, s.inlet2, p.V2 / p.F2(), rate_constants(p, T2), p.reverse_factor);
            worst = std::max(worst, r1.lpNorm<Eigen::Infinity>() / std::max(1.0, in1.maxCoeff()));
            worst = std::max(worst, r2.lpNorm<Eigen::Infinity>() / std::max(1.0, s.inlet2.maxCoeff()));
            nonneg = nonneg && (s.reactor1.C.array() >= 0.0).all() && (s.reactor2.C.array() >= 0.0).all();
        }
    o.require(worst < 1e-10, "residual");
    o.require(nonneg, "negative concentration");

    ReactorParams still = p;
    still.k0.fill(0.0);
    Conc in = Conc::Zero();
    in[A] = still.CA0;
    in[D] = still.CD0;
    bool trivial = true;
    for (double T : {303.0, 363.0, 423.0}) {
        const CstrResult r = solve_cstr(still, 0, in, T);
        trivial = trivial && r.C == in && r.heat == 0.0 &&
                  r.coolant == still.rho * still.Cp * still.F1 * (still.Tin1 - T) / (still.Cpc * (still.Toc - still.Tic));
    }
    ReactorParams free = p;
    free.price.fill(0.0);
    free.transfer_price.fill(0.0);
    free.price_coolant = free.price_steam = 0.0;
    const Performance z = performance(free, 345.0, 401.0);
    trivial = trivial && z.f == 0.0 && z.f1 == 0.0 && z.f2 == 0.0;
    o.require(trivial, "trivial cases");
    o.detail << "13x13 grid, max scaled residual " << worst << ", zero-kinetics and zero-price cases "
             << (trivial ? "exact" : "wrong");
}

void landscape(Outcome& o)
{
    const RunConfig c = load_config(default_config);
    const int n = 121;
    std::vector<double> F(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) F[i * n + j] = reactor::performance(c.reactor, 303.0 + i, 303.0 + j).f;
    std::vector<GoldenMinimum> found;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            bool local = true;
            for (int a = -1; a <= 1; ++a)
                for (int b = -1; b <= 1; ++b) {
                    const int u = i + a, v = j + b;
                    if ((a || b) && u >= 0 && v >= 0 && u < n && v < n && F[u * n + v] <= F[i * n + j]) local = false;
                }
            if (local) found.push_back({303.0 + i, 303.0 + j, F[i * n + j]});
        }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.f < b.f; });
    o.detail << found.size() << " local minima:";
    for (const auto& m : found) o.detail << " (" << m.T1 << ", " << m.T2 << ") " << m.f << ";";
    o.require(found.size() == 3, "exactly 3 minima");
    if (found.size() != 3) return;
    const GoldenMinimum& g = found[0];
    o.require(g.T1 > 303.0 && g.T1 < 423.0 && g.T2 > 303.0 && g.T2 < 423.0, "global minimum interior");
    for (int k = 1; k < 3; ++k)
        o.require(g.T1 < found[k].T1 && g.T2 <= found[k].T2, "global at lower temperature than the locals");
    bool golden = c.golden.size() == 3;
    for (std::size_t k = 0; golden && k < 3; ++k)
        golden = c.golden[k].T1 == found[k].T1 && c.golden[k].T2 == found[k].T2 &&
                 std::abs(c.golden[k].f - found[k].f) <= 1e-9 * std::abs(found[k].f);
    o.require(golden, "golden minima in the default config");
}

struct Stats {
    int reached = 0;  // final incumbent within 1% of the golden global value
    double median_time = inf;
    std::vector<double> times;
};

Stats stats(const AlgoResult& a, double threshold)
{
    Stats s;
    for (const RunTrace& t : a.runs) {
        const double time = t.failed ? inf : t.time_to_reach(threshold);
        s.times.push_back(time);
        if (!t.failed && t.final_best() <= threshold) ++s.reached;
    }
    s.median_time = median(s.times);
    return s;
}

const AlgoResult* find(const BenchmarkResult& r, const std::string& name)
{
    for (const AlgoResult& a : r.algorithms)
        if (a.name == name) return &a;
    return nullptr;
}

void benchmark_directions(Outcome& o)
{
    const RunConfig c = load_config(default_config);
    const reactor::CaseStudy cs = reactor::make_case_study(c.reactor, c.case_options);
    BenchmarkConfig b = build_benchmark(c, cs.problem);
    b.target = c.golden.front().f;
    const BenchmarkResult r = run_benchmark(cs.problem, b);
    export_result(r, b, bench_dir);

    const double threshold = b.target + 0.01 * std::abs(b.target);
    std::map<std::string, Stats> st;
    for (const AlgoResult& a : r.algorithms) {
        st[a.name] = stats(a, threshold);
        std::cout << "    " << a.name << ": " << st[a.name].reached << "/" << a.runs.size()
                  << " runs end in the global basin, median time to 1% " << st[a.name].median_time << " s, failed "
                  << a.failed.size() << '\n';
    }
    const double sbo = st.at("sbo").median_time;
    o.detail << "S-BO median " << sbo << " s, " << st.at("sbo").reached << "/25 in the global basin;";
    const std::vector<std::string> parallel{"hpbo", "lsbo", "hsbo", "vpbo", "qbo", "mcbo"};
    for (const std::string& a : parallel) {
        // A variant whose median never reaches the target is not faster.
        const bool faster = st.at(a).median_time < sbo;
        o.require(faster, "(a) " + a + " median not below S-BO's");
    }
    const double hp = st.at("hpbo").median_time, mc = st.at("mcbo").median_time;
    for (const std::string a : {"lsbo", "vpbo"}) {
        const double m = st.at(a).median_time;
        const bool half = std::isfinite(m) && m <= 0.5 * hp && m <= 0.5 * mc;
        o.require(half, "(b) " + a + " median above half of HP-BO's or MC-BO's");
    }
    const int sb = st.at("sbo").reached;
    for (const std::string a : {"lsbo", "vpbo", "hsbo", "qbo"}) {
        o.require(st.at(a).reached >= 20, "(c) " + a + " below 20/25");
        o.require(sb < st.at(a).reached, "(c) S-BO not below " + a);
    }
}

void overhead_ordering(Outcome& o)
{
    const RunConfig c = load_config(default_config);
    const reactor::CaseStudy cs = reactor::make_case_study(c.reactor, c.case_options);
    BenchmarkConfig b = build_benchmark(c, cs.problem);
    b.run_count = 5;
    b.threads = 1;  // measured compute must not share the core with other runs
    std::vector<NamedAlgo> keep;
    for (const NamedAlgo& a : b.algorithms)
        if (a.config.batch > 1) keep.push_back(a);
    b.algorithms = keep;
    const BenchmarkResult r = run_benchmark(cs.problem, b);
    std::map<std::string, double> ratio;
    for (const AlgoResult& a : r.algorithms) {
        std::vector<double> v;
        for (const RunTrace& t : a.runs) v.push_back(t.overhead_ratio());
        ratio[a.name] = median(v);
        o.detail << a.name << " " << 100.0 * ratio[a.name] << "%; ";
    }
    const double vp = ratio.at("vpbo"), hs = ratio.at("hsbo"), hp = ratio.at("hpbo"), ls = ratio.at("lsbo"),
                 q = ratio.at("qbo"), mc = ratio.at("mcbo");
    o.require(vp < hs, "VP-BO < HS-BO");
    o.require(hs < hp && hs < ls, "HS-BO < {HP-BO, LS-BO}");
    o.require(hp < q && ls < q, "{HP-BO, LS-BO} < q-BO");
    o.require(q < mc, "q-BO < MC-BO");
}

void q_safeguard(Outcome& o)
{
    const RunConfig c = load_config(default_config);
    const reactor::CaseStudy cs = reactor::make_case_study(c.reactor, c.case_options);
    const AlgoEntry& entry = c.algorithm("qbo");
    const double eps = entry.config.epsilon;

    BenchmarkResult r;
    if (fs::exists(fs::path(bench_dir) / "manifest.json")) {
        r = import_result(bench_dir);
        o.detail << "batches from " << bench_dir << "; ";
    } else {
        BenchmarkConfig b = build_benchmark(c, cs.problem);
        std::vector<NamedAlgo> only;
        for (const NamedAlgo& a : b.algorithms)
            if (a.config.algorithm == Algorithm::qbo) only.push_back(a);
        b.algorithms = only;
        r = run_benchmark(cs.problem, b);
        o.detail << "q-BO benchmark rerun; ";
    }
    double closest = inf;
    int batches = 0;
    for (const AlgoResult& a : r.algorithms) {
        if (a.algorithm != Algorithm::qbo) continue;
        for (const RunTrace& t : a.runs)
            for (std::size_t i = 1; i < t.entries.size(); ++i) {
                const auto& batch = t.entries[i].batch;
                ++batches;
                for (std::size_t j = 0; j < batch.size(); ++j)
                    for (std::size_t k = j + 1; k < batch.size(); ++k)
                        closest = std::min(closest, (cs.problem.domain.to_unit(batch[j]) -
                                                     cs.problem.domain.to_unit(batch[k])).norm());
            }
    }
    o.require(batches > 0, "no q-BO batches");
    o.require(closest >= eps, "pairwise distance below epsilon");

    // E|z| = sqrt(2/pi) through q = 1.
    Dataset D;
    for (double x : {0.1, 0.5, 0.9}) D.add(Vector::Constant(1, x), std::sin(5.0 * x));
    const GpModel m = GpModel::condition(D, KernelParams::isotropic(1, 0.3, 1.0, 1e-6), BoxDomain::unit(1));
    const Vector x = Vector::Constant(1, 0.3);
    const Prediction p = m.posterior(x);
    Rng rng(99);
    const double v = q_lcb(m, {x}, 2.0, 1000000, rng);
    const double mean_abs = (p.mean - v) / (2.0 * p.stddev);
    const double rel = std::abs(mean_abs - std::sqrt(2.0 / M_PI)) / std::sqrt(2.0 / M_PI);
    o.require(rel <= 0.01, "q = 1 Monte-Carlo mean |z|");
    o.detail << batches << " batches, closest pair " << closest << " (epsilon " << eps << "), E|z| estimate "
             << mean_abs << " vs " << std::sqrt(2.0 / M_PI);
}

void reference_quality(Outcome& o)
{
    using namespace reactor;
    const RunConfig c = load_config(default_config);
    const CaseStudy cs = make_case_study(c.reactor, c.case_options);
    const ReferenceModel& ref = cs.reference;
    const GpModel& gh = *cs.g_hat;
    Rng probe(17);
    double lo = inf, hi = -inf, ss = 0.0;
    const int n = 500;
    for (int i = 0; i < n; ++i) {
        const double a = 303.0 + 120.0 * probe.uniform(), b = 303.0 + 120.0 * probe.uniform();
        const double g = reference_performance(c.reactor, ref, a, b).f;
        lo = std::min(lo, g);
        hi = std::max(hi, g);
        const double e = gh.mean((Vector(2) << a, b).finished()) - g;
        ss += e * e;
    }
    const double rms = std::sqrt(ss / n);
    o.require(ref.min_r_squared() >= 0.95, "R^2");
    o.require(rms <= 0.01 * (hi - lo), "holdout RMS");
    o.detail << "min R^2 " << ref.min_r_squared() << ", holdout RMS " << rms << " = " << 100.0 * rms / (hi - lo)
             << "% of range";
}

struct Criterion {
    int id;
    const char* title;
    double budget_s;
    std::function<void(Outcome&)> check;
};

}  // namespace

int main(int argc, char** argv)
{
    const std::vector<Criterion> all{
        {1, "GP posterior vs dense oracle", 10.0, gp_posterior},
        {2, "LML gradient vs finite differences", 30.0, lml_gradient},
        {3, "algorithm reductions", 120.0, reductions},
        {4, "partition fixtures", 60.0, partitions},
        {5, "reactor physics", 60.0, reactor_physics},
        {6, "landscape calibration", 300.0, landscape},
        {7, "directional benchmark reproduction", 1800.0, benchmark_directions},
        {8, "overhead ordering", 1200.0, overhead_ordering},
        {9, "q-BO safeguard", 120.0, q_safeguard},
        {10, "reference-model quality", 120.0, reference_quality},
    };
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
    if (wanted.empty())
        for (const Criterion& c : all) wanted.push_back(c.id);

    int failed = 0;
    for (int id : wanted) {
        const auto it = std::find_if(all.begin(), all.end(), [&](const Criterion& c) { return c.id == id; });
        if (it == all.end()) {
            std::cerr << "unknown criterion " << id << '\n';
            return 2;
        }
        Outcome o;
        const auto t0 = clock_type::now();
        try {
            it->check(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double took = seconds_since(t0);
        if (took >= it->budget_s) {
            std::ostringstream os;
            os << "runtime " << took << " s over the " << it->budget_s << " s budget";
            o.require(false, os.str());
        }
        std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << ": " << it->title << " ("
                  << std::fixed;
        std::cout.precision(1);
        std::cout << took << " s) ";
        std::cout.unsetf(std::ios::floatfield);
        std::cout.precision(6);
        std::cout << o.detail.str() << std::endl;
        if (!o.pass) ++failed;
    }
    return failed ? 1 : 0;
}
