#include "parbo/algorithms.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace parbo {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// Independent random streams. Every (stream, iteration, subproblem) triple
// gets its own generator so that reductions between algorithms consume
// identical draws.
enum Stream : std::uint64_t {
    fit_stream = 1,
    af_stream = 2,
    kappa_stream = 3,
    fantasy_stream = 4,
    draw_stream = 5,
    repair_stream = 6,
    partition_stream = 7,
    empty_box_stream = 8,
};

Rng stream(const AlgoConfig& c, Stream s, int iteration, int k)
{
    return Rng(mix_seed(mix_seed(c.seed, s), static_cast<std::uint64_t>(iteration),
                        static_cast<std::uint64_t>(k)));
}

int starts_for(const AlgoConfig& c, int dim)
{
    return c.starts > 0 ? c.starts : default_starts(dim);
}

/// Everything observed so far in one run.
struct History {
    std::vector<Vector> x;
    std::vector<double> f;
    std::vector<Vector> parts;
    std::vector<double> g;  // reference at x when a reference is in use
    int round_begin = 0;    // first index of the latest round

    int size() const { return static_cast<int>(x.size()); }

    Dataset values(const std::vector<int>* subset = nullptr) const
    {
        Dataset d;
        if (subset) {
            for (int i : *subset) d.add(x[i], f[i]);
        } else {
            for (int i = 0; i < size(); ++i) d.add(x[i], f[i]);
        }
        return d;
    }
    Dataset residuals() const
    {
        Dataset d;
        for (int i = 0; i < size(); ++i) d.add(x[i], f[i] - g[i]);
        return d;
    }
    Dataset part(int k, const ScalarFunction* ref) const
    {
        Dataset d;
        for (int i = 0; i < size(); ++i) d.add(x[i], ref ? parts[i][k] - (*ref)(x[i]) : parts[i][k]);
        return d;
    }
};

/// GP with warm-started hyperparameters. Fewer than three points are
/// conditioned with the previous hyperparameters instead of fitted.
GpModel train(const Dataset& data, const BoxDomain& domain, KernelParams& warm, Rng rng,
              const FitOptions& options)
{
    if (data.size() < 3) return GpModel::condition(data, warm, domain);
    GpModel m = fit(data, domain, warm, rng, options);
    warm = m.params();
    return m;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

using Proposer = std::function<std::vector<Vector>(int iteration, const History&)>;
using Absorber = std::function<void(const History&)>;

/// Shared BO loop: propose, evaluate the round, append, record.
RunTrace drive(const Problem& problem, const AlgoConfig& config, const Dataset& init, bool need_parts,
               bool need_g, const Proposer& propose, const Absorber& absorb = {})
{
    problem.validate();
    if (init.empty()) throw InvalidArgument("initial design is empty");
    RunTrace trace;
    trace.algorithm = config.algorithm;
    trace.seed = config.seed;

    History h;
    TraceEntry first;
    first.iteration = 0;
    if (need_parts) first.subsystem_values = Matrix(init.size(), problem.subsystem_count);
    for (int i = 0; i < init.size(); ++i) {
        const Vector& x = init.points[i];
        h.x.push_back(x);
        h.f.push_back(init.values[i]);
        first.batch.push_back(x);
        first.values.push_back(init.values[i]);
        if (need_parts) {
            const Observation o = problem.evaluate(x);
            if (o.parts.size() != problem.subsystem_count)
                throw InvalidArgument("evaluate returned the wrong number of subsystem values");
            h.parts.push_back(o.parts);
            first.subsystem_values.row(i) = o.parts.transpose();
        }
        if (need_g) h.g.push_back(problem.reference(x));
        if (i == 0 || init.values[i] < first.best_f) {
            first.best_f = init.values[i];
            first.best_x = x;
        }
    }
    h.round_begin = 0;
    if (absorb) absorb(h);
    trace.entries.push_back(first);

    double exp_time = 0.0;
    double wall = 0.0;
    for (int it = 1; it <= config.iterations; ++it) {
        TraceEntry e;
        e.iteration = it;
        const auto t0 = Clock::now();
        double compute = 0.0;
        try {
            e.batch = propose(it, h);
            compute = seconds_since(t0);
            double round_cost = 0.0;
            std::vector<Observation> obs;
            for (const Vector& x : e.batch) {
                if (!problem.domain.contains(x, 1e-9))
                    throw OptimizationError("proposal outside the domain");
                Observation o = problem.evaluate(x);
                if (!std::isfinite(o.f)) {
                    std::ostringstream os;
                    os << "objective is not finite at iteration " << it;
                    throw NumericalError(os.str());
                }
                if (need_parts && o.parts.size() != problem.subsystem_count)
                    throw InvalidArgument("evaluate returned the wrong number of subsystem values");
                round_cost = std::max(round_cost, problem.experiment_cost ? problem.experiment_cost(x) : 0.0);
                obs.push_back(std::move(o));
            }
            const auto t1 = Clock::now();
            const TraceEntry& prev = trace.entries.back();
            e.best_f = prev.best_f;
            e.best_x = prev.best_x;
            h.round_begin = h.size();
            if (need_parts) e.subsystem_values = Matrix(e.batch.size(), problem.subsystem_count);
            for (std::size_t i = 0; i < e.batch.size(); ++i) {
                h.x.push_back(e.batch[i]);
                h.f.push_back(obs[i].f);
                if (need_parts) {
                    h.parts.push_back(obs[i].parts);
                    e.subsystem_values.row(i) = obs[i].parts.transpose();
                }
                if (need_g) h.g.push_back(problem.reference(e.batch[i]));
                e.values.push_back(obs[i].f);
                if (obs[i].f < e.best_f) {
                    e.best_f = obs[i].f;
                    e.best_x = e.batch[i];
                }
            }
            if (absorb) absorb(h);
            compute += seconds_since(t1);
            exp_time += round_cost;
            wall += round_cost + compute;
            e.experiment_time = exp_time;
            e.wall_time = wall;
            trace.entries.push_back(std::move(e));
        } catch (const Error& err) {
            trace.failed = true;
            trace.error = "iteration " + std::to_string(it) + ": " + err.what();
            break;
        }
    }
    return trace;
}

/// Single global surrogate, optionally on residuals f - g.
struct GlobalModel {
    GpModel model;
    AcqSpec spec;
};

GlobalModel global_model(const Problem& p, const AlgoConfig& c, const History& h, int it,
                         KernelParams& warm, bool residual)
{
    GlobalModel g;
    g.spec.kappa = c.kappa;
    if (residual) {
        g.model = train(h.residuals(), p.domain, warm, stream(c, fit_stream, it, 0), c.fit);
        g.spec.mode = AcqMode::with_reference;
        g.spec.reference = p.reference;
    } else {
        g.model = train(h.values(), p.domain, warm, stream(c, fit_stream, it, 0), c.fit);
    }
    return g;
}

void require_reference(const Problem& p, const char* who)
{
    if (!p.reference) throw ConfigError(std::string(who) + " requires a problem reference");
}

bool strictly_inside(const BoxDomain& box, const Vector& x)
{
    return ((x - box.lower).array() > 0.0).all() && ((box.upper - x).array() > 0.0).all();
}

AlgoConfig with_algorithm(AlgoConfig c, Algorithm a)
{
    c.algorithm = a;
    return c;
}

}  // namespace

// ---------------------------------------------------------------------------

void Problem::validate() const
{
    domain.validate();
    if (!evaluate) throw InvalidArgument("problem has no evaluator");
    if (subsystem_count < 0) throw InvalidArgument("subsystem_count must be >= 0");
    if (!subsystem_references.empty() && static_cast<int>(subsystem_references.size()) != subsystem_count)
        throw InvalidArgument("one subsystem reference per subsystem is required");
}

const std::vector<Algorithm>& all_algorithms()
{
    static const std::vector<Algorithm> all{Algorithm::sbo,  Algorithm::refbo, Algorithm::hpbo,
                                            Algorithm::hsbo, Algorithm::mcbo,  Algorithm::qbo,
                                            Algorithm::lsbo, Algorithm::vpbo};
    return all;
}

std::string to_string(Algorithm a)
{
    switch (a) {
    case Algorithm::sbo: return "sbo";
    case Algorithm::refbo: return "refbo";
    case Algorithm::hpbo: return "hpbo";
    case Algorithm::hsbo: return "hsbo";
    case Algorithm::mcbo: return "mcbo";
    case Algorithm::qbo: return "qbo";
    case Algorithm::lsbo: return "lsbo";
    case Algorithm::vpbo: return "vpbo";
    }
    return "?";
}

Algorithm parse_algorithm(const std::string& name)
{
    for (Algorithm a : all_algorithms())
        if (to_string(a) == name) return a;
    throw InvalidArgument("unknown algorithm '" + name + "' (expected sbo, refbo, hpbo, hsbo, mcbo, qbo, lsbo, vpbo)");
}

FitOptions AlgoConfig::default_fit()
{
    FitOptions f;
    f.restarts = 2;
    f.max_iterations = 60;
    return f;
}

void AlgoConfig::validate(int dim) const
{
    if (!(kappa >= 0.0)) throw ConfigError("kappa must be >= 0, got " + std::to_string(kappa));
    if (batch < 1) throw ConfigError("batch size K must be >= 1");
    if (iterations < 0) throw ConfigError("iterations L must be >= 0");
    if (samples < 1) throw ConfigError("samples S must be >= 1");
    if (!(phi >= 0.0 && phi <= 1.0)) throw ConfigError("phi must lie in [0, 1]");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(kappa_rate > 0.0)) throw ConfigError("kappa_rate must be positive");
    if (starts < 0) throw ConfigError("starts must be >= 0");
    if (!(initial_length_scale > 0.0)) throw ConfigError("initial_length_scale must be positive");
    if (fit.restarts < 1) throw ConfigError("GP restarts must be >= 1");

    const Algorithm a = algorithm;
    const AlgoConfig d;
    auto unused = [&](bool differs, bool used, const char* field) {
        if (differs && !used) warn(std::string(field) + " is ignored by " + to_string(a));
    };
    unused(batch != 1, a != Algorithm::sbo && a != Algorithm::refbo, "batch");
    unused(samples != d.samples, a == Algorithm::mcbo || a == Algorithm::qbo, "samples");
    unused(phi != d.phi, a == Algorithm::hsbo, "phi");
    unused(epsilon != d.epsilon, a == Algorithm::qbo, "epsilon");
    unused(partition.has_value(), a == Algorithm::hsbo || a == Algorithm::lsbo || a == Algorithm::vpbo,
           "partition");
    unused(use_reference_in_af, a != Algorithm::sbo && a != Algorithm::qbo, "use_reference_in_af");
    unused(fixed_kappa != d.fixed_kappa || kappa_rate != d.kappa_rate, a == Algorithm::hpbo, "kappa sampling");
    unused(share_overlap != d.share_overlap, a == Algorithm::hsbo, "share_overlap");
    unused(aggregate_min != d.aggregate_min || common_random_numbers != d.common_random_numbers,
           a == Algorithm::qbo, "q-LCB options");
    unused(refit_fantasies, a == Algorithm::mcbo, "refit_fantasies");
    unused(anchor != d.anchor, a == Algorithm::vpbo, "anchor");

    if (partition) {
        const PartitionScheme& p = *partition;
        if (a == Algorithm::hsbo && p.kind != PartitionKind::hyperbox)
            throw ConfigError("hsbo needs a hyperbox partition");
        if (a == Algorithm::lsbo && p.kind != PartitionKind::levelset)
            throw ConfigError("lsbo needs a level-set partition");
        if (a == Algorithm::vpbo) {
            if (p.kind != PartitionKind::variable) throw ConfigError("vpbo needs a variable partition");
            validate_variable_sets(p.variables, dim);
        }
        const bool checked = (a == Algorithm::hsbo && p.kind == PartitionKind::hyperbox) ||
                             (a == Algorithm::lsbo && p.kind == PartitionKind::levelset) ||
                             (a == Algorithm::vpbo && p.kind == PartitionKind::variable);
        if (checked && p.count() != batch)
            throw ConfigError("partition has " + std::to_string(p.count()) + " parts but K = " +
                              std::to_string(batch));
    } else if (a == Algorithm::hsbo) {
        hyperbox_splits(batch, dim);
    } else if (a == Algorithm::vpbo && batch > 1) {
        throw ConfigError("vpbo with K > 1 needs a variable partition");
    }
}

int RunTrace::evaluations() const
{
    int n = 0;
    for (std::size_t i = 1; i < entries.size(); ++i) n += static_cast<int>(entries[i].batch.size());
    return n;
}

double RunTrace::overhead_ratio() const
{
    const double e = experiment_time();
    return e > 0.0 ? (wall_time() - e) / e : 0.0;
}

double RunTrace::time_to_reach(double target) const
{
    for (const TraceEntry& e : entries)
        if (e.best_f <= target) return e.experiment_time;
    return inf;
}

int RunTrace::rounds_to_reach(double target) const
{
    for (const TraceEntry& e : entries)
        if (e.best_f <= target) return e.iteration;
    return -1;
}

bool same_deterministic(const RunTrace& a, const RunTrace& b)
{
    if (a.algorithm != b.algorithm || a.seed != b.seed || a.failed != b.failed || a.error != b.error ||
        a.entries.size() != b.entries.size())
        return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        const TraceEntry& x = a.entries[i];
        const TraceEntry& y = b.entries[i];
        if (x.iteration != y.iteration || x.values != y.values || x.best_f != y.best_f ||
            x.experiment_time != y.experiment_time || x.batch.size() != y.batch.size() ||
            x.best_x != y.best_x)
            return false;
        for (std::size_t j = 0; j < x.batch.size(); ++j)
            if (x.batch[j] != y.batch[j]) return false;
        if (x.subsystem_values.rows() != y.subsystem_values.rows() ||
            x.subsystem_values.cols() != y.subsystem_values.cols() || x.subsystem_values != y.subsystem_values)
            return false;
    }
    return true;
}

int initial_design_size(int dim)
{
    return std::max(3, dim + 1);
}

Dataset initial_design(const Problem& problem, Rng& rng)
{
    problem.validate();
    Dataset d;
    for (const Vector& x : latin_hypercube(problem.domain, initial_design_size(problem.domain.dim()), rng))
        d.add(x, problem.evaluate(x).f);
    return d;
}

int hyperbox_splits(int k_count, int dim)
{
    if (k_count < 1 || dim < 1) throw ConfigError("hyperbox partition needs K >= 1");
    const int s = static_cast<int>(std::lround(std::pow(static_cast<double>(k_count), 1.0 / dim)));
    long p = 1;
    for (int i = 0; i < dim; ++i) p *= s;
    if (p != k_count)
        throw ConfigError("hsbo needs K = splits^d equal boxes; K = " + std::to_string(k_count) +
                          " is not a perfect power of d = " + std::to_string(dim));
    return s;
}

std::vector<Vector> repair_batch(const BoxDomain& domain, std::vector<Vector> batch, double epsilon, Rng& rng)
{
    const int n = static_cast<int>(batch.size());
    const int d = domain.dim();
    std::vector<Vector> u;
    for (const Vector& x : batch) u.push_back(domain.to_unit(x));
    auto closest = [&](int& bi, int& bj) {
        double best = inf;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double dist = (u[i] - u[j]).norm();
                if (dist < best) {
                    best = dist;
                    bi = i;
                    bj = j;
                }
            }
        return best;
    };
    for (int attempt = 0; attempt < 1000; ++attempt) {
        int i = 0, j = 0;
        if (n < 2 || closest(i, j) >= epsilon) {
            for (int k = 0; k < n; ++k) batch[k] = domain.from_unit(u[k]);
            return batch;
        }
        Vector dir = u[j] - u[i];
        if (attempt > 0 || dir.norm() < 1e-12) {
            for (int k = 0; k < d; ++k) dir[k] = rng.normal();
        }
        u[j] = (u[i] + dir.normalized() * epsilon * (1.0 + 1e-6)).cwiseMax(0.0).cwiseMin(1.0);
    }
    throw OptimizationError("q-BO batch could not be repaired to the minimum spacing " + std::to_string(epsilon));
}

// ---------------------------------------------------------------------------

RunTrace run_sbo(const Problem& problem, const AlgoConfig& config, const Dataset& init)
{
    const AlgoConfig c = with_algorithm(config, Algorithm::sbo);
    c.validate(problem.domain.dim());
    KernelParams warm = KernelParams::isotropic(problem.domain.dim(), c.initial_length_scale);
    return drive(problem, c, init, false, false, [&](int it, const History& h) {
        const GlobalModel g = global_model(problem, c, h, it, warm, false);
        Rng rng = stream(c, af_stream, it, 0);
        const Objective af = [&](const Vector& x) { return lcb(g.model, x, g.spec); };
        return std::vector<Vector>{minimize_box(af, problem.domain, starts_for(c, problem.domain.dim()), rng, c.local).x};
    });
}

RunTrace run_refbo(const Problem& problem, const AlgoConfig& config, const Dataset& init)
{
    const AlgoConfig c = with_algorithm(config, Algorithm::refbo);
    c.validate(problem.domain.dim());
    require_reference(problem, "refbo");
    KernelParams warm = KernelParams::isotropic(problem.domain.dim(), c.initial_length_scale);
    return drive(problem, c, init, false, true, [&](int it, const History& h) {
        const GlobalModel g = global_model(problem, c, h, it, warm, true);
        Rng rng = stream(c, af_stream, it, 0);
        const Objective af = [&](const Vector& x) { return lcb(g.model, x, g.spec); };
        return std::vector<Vector>{minimize_box(af, problem.domain, starts_for(c, problem.domain.dim()), rng, c.local).x};
    });
}

RunTrace run_hpbo(const Problem& problem, const AlgoConfig& config, const Dataset& init)
{
    const AlgoConfig c = with_algorithm(config, Algorithm::hpbo);
    c.validate(problem.domain.dim());
    const bool residual = c.use_reference_in_af;
    if (residual) require_reference(problem, "hpbo with use_reference_in_af");
    KernelParams warm = KernelParams::isotropic(problem.domain.dim(), c.initial_length_scale);
    return drive(problem, c, init, false, residual, [&](int it, const History& h) {
        GlobalModel g = global_model(problem, c, h, it, warm, residual);
        std::vector<double> kappas(c.batch, c.kappa);
        if (!c.fixed_kappa) {
            Rng krng = stream(c, kappa_stream, it, 0);
            kappas = sample_kappas(c.batch, c.kappa_rate, krng);
        }
        std::vector<Vector> batch;
        for (int k = 0; k < c.batch; ++k) {
            AcqSpec spec = g.spec;
            spec.kappa = kappas[k];
            Rng rng = stream(c, af_stream, it, k);
            const Objective af = [&](const Vector& x) { return lcb(g.model, x, spec); };
            batch.push_back(minimize_box(af, problem.domain, starts_for(c, problem.domain.dim()), rng, c.local).x);
        }
        return batch;
    });
}

RunTrace run_hsbo(const Problem& problem, const AlgoConfig& config, const Dataset& init)
{
    const AlgoConfig c = with_algorithm(config, Algorithm::hsbo);
    const int d = problem.domain.dim();
    c.validate(d);
    const bool residual = c.use_reference_in_af;
    if (residual) require_reference(problem, "hsbo with use_reference_in_af");
    const PartitionScheme scheme =
        c.partition ? *c.partition : hyperboxes(problem.domain, hyperbox_splits(c.batch, d), c.phi);
    const int K = scheme.count();
    std::vector<std::vector<int>> members(K);
    std::vector<KernelParams> warm(K, KernelParams::isotropic(d, c.initial_length_scale));
    bool initialized = false;

    const Absorber absorb = [&](const History& h) {
        const int begin = initialized ? h.round_begin : 0;
        for (int i = begin; i < h.size(); ++i) {
            const int proposer = initialized ? i - begin : -1;
            for (int k = 0; k < K; ++k) {
                bool take;
                if (proposer < 0)
                    take = box_member(scheme.boxes[k], problem.domain, h.x[i]);
                else if (k == proposer)
                    take = true;
                else  // a point on a shared face stays with the box that proposed it
                    take = c.share_overlap && strictly_inside(scheme.boxes[k], h.x[i]);
                if (take) members[k].push_back(i);
            }
        }
        initialized = true;
    };
    const Proposer propose = [&](int it, const History& h) {
        std::vector<Vector> batch;
        for (int k = 0; k < K; ++k) {
            const BoxDomain& box = scheme.boxes[k];
            if (members[k].empty()) {
                Rng r = stream(c, empty_box_stream, it, k);
                Vector u(d);
                for (int i = 0; i < d; ++i) u[i] = r.uniform();
                batch.push_back(box.from_unit(u));
                continue;
            }
            Dataset data;
            for (int i : members[k]) data.add(h.x[i], residual ? h.f[i] - h.g[i] : h.f[i]);
            const GpModel model = train(data, box, warm[k], stream(c, fit_stream, it, k), c.fit);
            AcqSpec spec;
            spec.kappa = c.kappa;
            if (residual) {
                spec.mode = AcqMode::with_reference;
                spec.reference = problem.reference;
            }
            Rng rng = stream(c, af_stream, it, k);
            const Objective af = [&](const Vector& x) { return lcb(model, x, spec); };
            batch.push_back(minimize_box(af, box, starts_for(c, d), rng, c.local).x);
        }
        return batch;
    };
    return drive(problem, c, init, false, residual, propose, absorb);
}

RunTrace run_mcbo(const Problem& problem, const AlgoConfig& config, const Dataset& init)
{
    const AlgoConfig c = with_algorithm(config, Algorithm::mcbo);
    c.validate(problem.domain.dim());
    const bool residual = c.use_reference_in_af;
    if (residual) require_reference(problem, "mcbo with use_reference_in_af");
    KernelParams warm = KernelParams::isotropic(problem.domain.dim(), c.initial_length_scale);
    return drive(problem, c, init, false, residual, [&](int it, const History& h) {
        const GlobalModel g = global_model(problem, c, h, it, warm, residual);
        const int starts = starts_for(c, problem.domain.dim());
        std::vector<Vector> batch;
        {
            Rng rng = stream(c, af_stream, it, 0);
            const Objective af = [&](const Vector& x) { return lcb(g.model, x, g.spec); };
            batch.push_back(minimize_box(af, problem.domain, starts, rng, c.local).x);
        }
        FantasyAf::Options opt;
        opt.refit = c.refit_fantasies;
        opt.fit = c.fit;
        for (int k = 1; k < c.batch; ++k) {
            Rng frng = stream(c, fantasy_stream, it, k);
            const FantasyAf fantasy(g.model, batch, c.samples, g.spec, frng, opt);
            Rng rng = stream(c, af_stream, it, k);
            const Objective af = [&](const Vector& x) { return fantasy(x); };
            batch.push_back(minimize_box(af, problem.domain, starts, rng, c.local).x);
        }
        return batch;
    });
}

RunTrace run_qbo(const Problem& problem, const AlgoConfig& config, const Dataset& init)
{
    const AlgoConfig c = with_algorithm(config, Algorithm::qbo);
    const int d = problem.domain.dim();
    c.validate(d);
    const int q = c.batch;
    KernelParams warm = KernelParams::isotropic(d, c.initial_length_scale);
    Vector lower(q * d), upper(q * d);
    for (int k = 0; k < q; ++k) {
        lower.segment(k * d, d) = problem.domain.lower;
        upper.segment(k * d, d) = problem.domain.upper;
    }
    const BoxDomain joint(lower, upper);
    auto split = [&](const Vector& z) {
        std::vector<Vector> b;
        for (int k = 0; k < q; ++k) b.push_back(z.segment(k * d, d));
        return b;
    };
    return drive(problem, c, init, false, false, [&](int it, const History& h) {
        const GlobalModel g = global_model(problem, c, h, it, warm, false);
        Rng draws = stream(c, draw_stream, it, 0);
        const QLcb fixed(g.model, q, c.samples, c.kappa, draws, c.aggregate_min, c.epsilon);
        const double weight = 1e3 * g.model.scaling().y_scale;
        const Objective obj = [&](const Vector& z) {
            const std::vector<Vector> batch = split(z);
            double penalty = 0.0;
            for (int i = 0; i < q; ++i)
                for (int j = i + 1; j < q; ++j) {
                    const double dist =
                        (problem.domain.to_unit(batch[i]) - problem.domain.to_unit(batch[j])).norm();
                    penalty += std::max(0.0, c.epsilon - dist) / c.epsilon;
                }
            try {
                const double v = c.common_random_numbers
                                     ? fixed.unchecked(batch)
                                     : QLcb(g.model, q, c.samples, c.kappa, draws, c.aggregate_min, c.epsilon)
                                           .unchecked(batch);
                return v + weight * penalty;
            } catch (const BatchRejectedError&) {
                return inf;
            }
        };
        Rng rng = stream(c, af_stream, it, 0);
        const Minimum m = minimize_box(obj, joint, starts_for(c, q * d), rng, c.local);
        Rng repair = stream(c, repair_stream, it, 0);
        std::vector<Vector> batch = repair_batch(problem.domain, split(m.x), c.epsilon, repair);
        if (q > 1 && unit_min_distance(g.model, batch) < c.epsilon)
            throw OptimizationError("q-BO batch violates the minimum spacing after repair");
        return batch;
    });
}

RunTrace run_lsbo(const Problem& problem, const AlgoConfig& config, const Dataset& init)
{
    const AlgoConfig c = with_algorithm(config, Algorithm::lsbo);
    const int d = problem.domain.dim();
    c.validate(d);
    const bool residual = c.use_reference_in_af;
    if (residual) require_reference(problem, "lsbo with use_reference_in_af");
    PartitionScheme scheme;
    if (c.partition) {
        scheme = *c.partition;
    } else if (c.batch == 1) {
        scheme.kind = PartitionKind::levelset;
        scheme.domain = problem.domain;
        scheme.thresholds = {-inf, inf};
        scheme.bands = {LevelSetRegion{problem.reference_model, -inf, inf}};
    } else {
        if (!problem.reference_model) throw ConfigError("lsbo needs a reference model to build level sets");
        Rng prng = stream(c, partition_stream, 0, 0);
        scheme = levelset_uniform(problem.reference_model, problem.domain, c.batch, 4096, prng);
    }
    KernelParams warm = KernelParams::isotropic(d, c.initial_length_scale);
    return drive(problem, c, init, false, residual, [&](int it, const History& h) {
        const GlobalModel g = global_model(problem, c, h, it, warm, residual);
        const Objective af = [&](const Vector& x) { return lcb(g.model, x, g.spec); };
        std::vector<Vector> batch;
        for (int k = 0; k < scheme.count(); ++k) {
            Rng rng = stream(c, af_stream, it, k);
            try {
                batch.push_back(minimize_levelset(af, problem.domain, scheme.bands[k], starts_for(c, d), rng, c.local).x);
            } catch (const EmptyRegionError& e) {
                warn("lsbo iteration " + std::to_string(it) + ": band " + std::to_string(k) + " skipped: " + e.what());
            }
        }
        if (batch.empty()) throw OptimizationError("every level-set band was empty");
        return batch;
    });
}

RunTrace run_vpbo(const Problem& problem, const AlgoConfig& config, const Dataset& init)
{
    const AlgoConfig c = with_algorithm(config, Algorithm::vpbo);
    const int d = problem.domain.dim();
    c.validate(d);
    std::vector<std::vector<int>> blocks;
    if (c.partition) {
        blocks = c.partition->variables;
    } else {
        blocks.emplace_back();
        for (int i = 0; i < d; ++i) blocks.back().push_back(i);
    }
    const int K = static_cast<int>(blocks.size());
    // A single block models f itself; K > 1 models the measured f_k.
    const bool decomposed = K > 1;
    if (decomposed && problem.subsystem_count != K)
        throw ConfigError("vpbo with K = " + std::to_string(K) + " needs a problem with " + std::to_string(K) +
                          " subsystem values, got " + std::to_string(problem.subsystem_count));
    const bool residual = c.use_reference_in_af;
    if (residual && decomposed && static_cast<int>(problem.subsystem_references.size()) != K)
        throw ConfigError("vpbo with use_reference_in_af needs one reference per subsystem");
    if (residual && !decomposed) require_reference(problem, "vpbo with use_reference_in_af");

    std::vector<std::vector<int>> fixed(K);
    for (int k = 0; k < K; ++k) fixed[k] = complement_indices(blocks[k], d);
    std::vector<Vector> anchor(K);
    std::vector<KernelParams> warm(K, KernelParams::isotropic(d, c.initial_length_scale));
    bool initialized = false;

    const Absorber absorb = [&](const History& h) {
        if (!initialized) {
            int best = 0;
            for (int i = 1; i < h.size(); ++i)
                if (h.f[i] < h.f[best]) best = i;
            for (Vector& a : anchor) a = h.x[best];
            initialized = true;
            return;
        }
        if (!decomposed) return;
        const int begin = h.round_begin;
        auto argmin_rows = [&](int col) {
            int r = begin;
            for (int i = begin + 1; i < h.size(); ++i)
                if (h.parts[i][col] < h.parts[r][col]) r = i;
            return r;
        };
        if (c.anchor == AnchorRule::column_argmin) {
            for (int k = 0; k < K; ++k) {
                const int r = argmin_rows(k);
                for (int i : fixed[k]) anchor[k][i] = h.x[r][i];
            }
        } else {
            for (int j = 0; j < K; ++j) {
                const int r = argmin_rows(j);
                for (int k = 0; k < K; ++k)
                    if (k != j)
                        for (int i : blocks[j]) anchor[k][i] = h.x[r][i];
            }
        }
    };
    const Proposer propose = [&](int it, const History& h) {
        std::vector<Vector> batch;
        for (int k = 0; k < K; ++k) {
            const ScalarFunction* ref = nullptr;
            if (residual) ref = decomposed ? &problem.subsystem_references[k] : &problem.reference;
            const Dataset data = decomposed ? h.part(k, ref) : (residual ? h.residuals() : h.values());
            const GpModel model = train(data, problem.domain, warm[k], stream(c, fit_stream, it, k), c.fit);
            AcqSpec spec;
            spec.kappa = c.kappa;
            if (ref) {
                spec.mode = AcqMode::with_reference;
                spec.reference = *ref;
            }
            Vector fixed_values(fixed[k].size());
            for (std::size_t i = 0; i < fixed[k].size(); ++i) fixed_values[i] = anchor[k][fixed[k][i]];
            Rng rng = stream(c, af_stream, it, k);
            const Objective af = [&](const Vector& x) { return lcb(model, x, spec); };
            const Minimum m = minimize_subspace(af, problem.domain, blocks[k], fixed_values,
                                                starts_for(c, static_cast<int>(blocks[k].size())), rng, c.local);
            batch.push_back(embed(blocks[k], m.x, fixed[k], fixed_values));
        }
        return batch;
    };
    return drive(problem, c, init, decomposed, residual && !decomposed, propose, absorb);
}

RunTrace run(const Problem& problem, const AlgoConfig& config, const Dataset& init)
{
    switch (config.algorithm) {
    case Algorithm::sbo: return run_sbo(problem, config, init);
    case Algorithm::refbo: return run_refbo(problem, config, init);
    case Algorithm::hpbo: return run_hpbo(problem, config, init);
    case Algorithm::hsbo: return run_hsbo(problem, config, init);
    case Algorithm::mcbo: return run_mcbo(problem, config, init);
    case Algorithm::qbo: return run_qbo(problem, config, init);
    case Algorithm::lsbo: return run_lsbo(problem, config, init);
    case Algorithm::vpbo: return run_vpbo(problem, config, init);
    }
    throw InvalidArgument("unknown algorithm");
}

}  // namespace parbo
