#include "parbo/config.hpp"

#include <toml.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace parbo {

namespace {

// Every diagnostic carries "source:line:" so editors can jump to it.
struct Ctx {
    std::string source;

    [[noreturn]] void fail(const toml::node* node, const std::string& msg) const
    {
        std::string where = source;
        if (node && node->source().begin) where += ":" + std::to_string(node->source().begin.line);
        throw ConfigError(where + ": " + msg);
    }
};

using Keys = std::set<std::string>;

void check_keys(const Ctx& ctx, const toml::table& t, const std::string& section, const Keys& allowed)
{
    for (const auto& [k, v] : t) {
        const std::string key(k.str());
        if (!allowed.count(key)) ctx.fail(&v, "unknown key '" + key + "' in [" + section + "]");
    }
}

const toml::table* subtable(const Ctx& ctx, const toml::table& t, const std::string& key,
                            const std::string& section)
{
    const toml::node* n = t.get(key);
    if (!n) return nullptr;
    if (!n->is_table()) ctx.fail(n, "'" + key + "' in [" + section + "] must be a table");
    return n->as_table();
}

double as_number(const Ctx& ctx, const toml::node& n, const std::string& what)
{
    if (auto v = n.as_floating_point()) return v->get();
    if (auto v = n.as_integer()) return static_cast<double>(v->get());
    ctx.fail(&n, what + " must be a number");
}

void read(const Ctx& ctx, const toml::table& t, const std::string& key, double& out)
{
    if (const toml::node* n = t.get(key)) out = as_number(ctx, *n, "'" + key + "'");
}

void read(const Ctx& ctx, const toml::table& t, const std::string& key, int& out)
{
    const toml::node* n = t.get(key);
    if (!n) return;
    auto v = n->as_integer();
    if (!v) ctx.fail(n, "'" + key + "' must be an integer");
    if (v->get() < std::numeric_limits<int>::min() || v->get() > std::numeric_limits<int>::max())
        ctx.fail(n, "'" + key + "' is out of range");
    out = static_cast<int>(v->get());
}

void read(const Ctx& ctx, const toml::table& t, const std::string& key, std::uint64_t& out)
{
    const toml::node* n = t.get(key);
    if (!n) return;
    auto v = n->as_integer();
    if (!v || v->get() < 0) ctx.fail(n, "'" + key + "' must be a nonnegative integer");
    out = static_cast<std::uint64_t>(v->get());
}

void read(const Ctx& ctx, const toml::table& t, const std::string& key, bool& out)
{
    const toml::node* n = t.get(key);
    if (!n) return;
    auto v = n->as_boolean();
    if (!v) ctx.fail(n, "'" + key + "' must be true or false");
    out = v->get();
}

void read(const Ctx& ctx, const toml::table& t, const std::string& key, std::string& out)
{
    const toml::node* n = t.get(key);
    if (!n) return;
    auto v = n->as_string();
    if (!v) ctx.fail(n, "'" + key + "' must be a string");
    out = v->get();
}

std::vector<double> number_list(const Ctx& ctx, const toml::node& n, const std::string& what)
{
    auto arr = n.as_array();
    if (!arr) ctx.fail(&n, what + " must be an array");
    std::vector<double> out;
    for (const toml::node& e : *arr) out.push_back(as_number(ctx, e, what + " entries"));
    return out;
}

template <std::size_t N>
void read(const Ctx& ctx, const toml::table& t, const std::string& key, std::array<double, N>& out)
{
    const toml::node* n = t.get(key);
    if (!n) return;
    const std::vector<double> v = number_list(ctx, *n, "'" + key + "'");
    if (v.size() != N) ctx.fail(n, "'" + key + "' needs " + std::to_string(N) + " values");
    std::copy(v.begin(), v.end(), out.begin());
}

void read_reactor(const Ctx& ctx, const toml::table& t, reactor::ReactorParams& p)
{
    check_keys(ctx, t, "problem.reactor",
               {"k0", "activation_energy", "heat_of_reaction", "reverse_factor", "F1", "FB", "V1", "V2", "CA0",
                "CD0", "CB0", "Tin1", "Tin2", "rho", "Cp", "Cpc", "Toc", "Tic", "alpha", "KP", "latent",
                "latent_water", "price", "price_coolant", "price_steam", "transfer_price", "hours_per_year",
                "split"});
    read(ctx, t, "k0", p.k0);
    read(ctx, t, "activation_energy", p.activation_energy);
    read(ctx, t, "heat_of_reaction", p.heat_of_reaction);
    read(ctx, t, "reverse_factor", p.reverse_factor);
    read(ctx, t, "F1", p.F1);
    read(ctx, t, "FB", p.FB);
    read(ctx, t, "V1", p.V1);
    read(ctx, t, "V2", p.V2);
    read(ctx, t, "CA0", p.CA0);
    read(ctx, t, "CD0", p.CD0);
    read(ctx, t, "CB0", p.CB0);
    read(ctx, t, "Tin1", p.Tin1);
    read(ctx, t, "Tin2", p.Tin2);
    read(ctx, t, "rho", p.rho);
    read(ctx, t, "Cp", p.Cp);
    read(ctx, t, "Cpc", p.Cpc);
    read(ctx, t, "Toc", p.Toc);
    read(ctx, t, "Tic", p.Tic);
    read(ctx, t, "alpha", p.alpha);
    read(ctx, t, "KP", p.KP);
    read(ctx, t, "latent", p.latent);
    read(ctx, t, "latent_water", p.latent_water);
    read(ctx, t, "price", p.price);
    read(ctx, t, "price_coolant", p.price_coolant);
    read(ctx, t, "price_steam", p.price_steam);
    read(ctx, t, "transfer_price", p.transfer_price);
    read(ctx, t, "hours_per_year", p.hours_per_year);
    if (const toml::node* n = t.get("split")) {
        std::string s;
        read(ctx, t, "split", s);
        if (s == "economic")
            p.split = reactor::SplitMode::economic;
        else if (s == "per_reactor")
            p.split = reactor::SplitMode::per_reactor;
        else
            ctx.fail(n, "split must be \"economic\" or \"per_reactor\"");
    }
    try {
        p.validate();
    } catch (const Error& e) {
        ctx.fail(&t, e.what());
    }
}

void read_golden(const Ctx& ctx, const toml::table& t, std::vector<GoldenMinimum>& out)
{
    check_keys(ctx, t, "problem.golden", {"minima"});
    const toml::node* n = t.get("minima");
    if (!n) return;
    auto arr = n->as_array();
    if (!arr) ctx.fail(n, "'minima' must be an array of [T1, T2, f] triples");
    for (const toml::node& e : *arr) {
        const std::vector<double> v = number_list(ctx, e, "golden minimum");
        if (v.size() != 3) ctx.fail(&e, "golden minimum needs [T1, T2, f]");
        out.push_back({v[0], v[1], v[2]});
    }
}

PartitionSpec read_partition(const Ctx& ctx, const toml::table& t, const std::string& section)
{
    check_keys(ctx, t, section, {"kind", "thresholds", "splits", "overlap", "sets"});
    PartitionSpec s;
    std::string kind;
    read(ctx, t, "kind", kind);
    if (kind == "levelset") {
        s.kind = PartitionKind::levelset;
        const toml::node* n = t.get("thresholds");
        if (!n) ctx.fail(&t, "[" + section + "] needs 'thresholds'");
        s.thresholds = number_list(ctx, *n, "'thresholds'");
        if (s.thresholds.size() < 2) ctx.fail(n, "'thresholds' needs at least two values");
        for (std::size_t i = 1; i < s.thresholds.size(); ++i)
            if (!(s.thresholds[i] > s.thresholds[i - 1])) ctx.fail(n, "'thresholds' must be strictly increasing");
    } else if (kind == "hyperbox") {
        s.kind = PartitionKind::hyperbox;
        read(ctx, t, "splits", s.splits);
        read(ctx, t, "overlap", s.overlap);
        if (s.splits < 1) ctx.fail(t.get("splits"), "'splits' must be >= 1");
        if (!(s.overlap >= 0.0 && s.overlap <= 1.0)) ctx.fail(t.get("overlap"), "'overlap' must lie in [0, 1]");
    } else if (kind == "variable") {
        s.kind = PartitionKind::variable;
        const toml::node* n = t.get("sets");
        if (!n || !n->is_array()) ctx.fail(n ? n : &t, "[" + section + "] needs 'sets', an array of index arrays");
        for (const toml::node& e : *n->as_array()) {
            auto inner = e.as_array();
            if (!inner) ctx.fail(&e, "each entry of 'sets' must be an array of indices");
            std::vector<int> set;
            for (const toml::node& i : *inner) {
                auto v = i.as_integer();
                if (!v) ctx.fail(&i, "variable indices must be integers");
                set.push_back(static_cast<int>(v->get()));
            }
            s.sets.push_back(set);
        }
    } else {
        ctx.fail(t.get("kind") ? t.get("kind") : &t,
                 "[" + section + "] kind must be \"levelset\", \"hyperbox\" or \"variable\"");
    }
    return s;
}

struct GpDefaults {
    FitOptions fit = AlgoConfig::default_fit();
    double initial_length_scale = 0.3;
    LocalOptions local;
};

void read_gp(const Ctx& ctx, const toml::table& t, GpDefaults& g)
{
    check_keys(ctx, t, "gp",
               {"restarts", "max_iterations", "fit_noise", "noise_floor_ratio", "noise_ceiling_ratio",
                "min_length_scale", "max_length_scale", "initial_length_scale", "af_max_iterations",
                "af_gradient_tolerance"});
    read(ctx, t, "restarts", g.fit.restarts);
    read(ctx, t, "max_iterations", g.fit.max_iterations);
    read(ctx, t, "fit_noise", g.fit.fit_noise);
    read(ctx, t, "noise_floor_ratio", g.fit.noise_floor_ratio);
    read(ctx, t, "noise_ceiling_ratio", g.fit.noise_ceiling_ratio);
    read(ctx, t, "min_length_scale", g.fit.min_length_scale);
    read(ctx, t, "max_length_scale", g.fit.max_length_scale);
    read(ctx, t, "initial_length_scale", g.initial_length_scale);
    read(ctx, t, "af_max_iterations", g.local.max_iterations);
    read(ctx, t, "af_gradient_tolerance", g.local.gradient_tolerance);
    if (g.fit.restarts < 1) ctx.fail(t.get("restarts"), "'restarts' must be >= 1");
    if (g.fit.max_iterations < 1) ctx.fail(t.get("max_iterations"), "'max_iterations' must be >= 1");
    if (!(g.fit.noise_floor_ratio > 0.0 && g.fit.noise_floor_ratio <= g.fit.noise_ceiling_ratio))
        ctx.fail(&t, "need 0 < noise_floor_ratio <= noise_ceiling_ratio");
    if (!(g.fit.min_length_scale > 0.0 && g.fit.min_length_scale < g.fit.max_length_scale))
        ctx.fail(&t, "need 0 < min_length_scale < max_length_scale");
}

AlgoEntry read_algorithm(const Ctx& ctx, const toml::table& t, const std::string& name, const GpDefaults& g)
{
    const std::string section = "algorithms." + name;
    check_keys(ctx, t, section,
               {"algorithm", "kappa", "batch", "iterations", "samples", "phi", "epsilon", "partition",
                "use_reference_in_af", "kappa_rate", "fixed_kappa", "starts", "share_overlap", "aggregate_min",
                "common_random_numbers", "refit_fantasies", "anchor"});
    AlgoEntry e;
    e.name = name;
    AlgoConfig& c = e.config;
    c.fit = g.fit;
    c.initial_length_scale = g.initial_length_scale;
    c.local = g.local;
    std::string algo = name;
    read(ctx, t, "algorithm", algo);
    try {
        c.algorithm = parse_algorithm(algo);
    } catch (const Error& err) {
        ctx.fail(t.get("algorithm") ? t.get("algorithm") : &t, err.what());
    }
    read(ctx, t, "kappa", c.kappa);
    read(ctx, t, "batch", c.batch);
    read(ctx, t, "iterations", c.iterations);
    read(ctx, t, "samples", c.samples);
    read(ctx, t, "phi", c.phi);
    read(ctx, t, "epsilon", c.epsilon);
    read(ctx, t, "partition", e.partition);
    read(ctx, t, "use_reference_in_af", c.use_reference_in_af);
    read(ctx, t, "kappa_rate", c.kappa_rate);
    read(ctx, t, "fixed_kappa", c.fixed_kappa);
    read(ctx, t, "starts", c.starts);
    read(ctx, t, "share_overlap", c.share_overlap);
    read(ctx, t, "aggregate_min", c.aggregate_min);
    read(ctx, t, "common_random_numbers", c.common_random_numbers);
    read(ctx, t, "refit_fantasies", c.refit_fantasies);
    if (const toml::node* n = t.get("anchor")) {
        std::string a;
        read(ctx, t, "anchor", a);
        if (a == "block_best")
            c.anchor = AnchorRule::block_best;
        else if (a == "column_argmin")
            c.anchor = AnchorRule::column_argmin;
        else
            ctx.fail(n, "anchor must be \"block_best\" or \"column_argmin\"");
    }
    return e;
}

// Stand-in scheme with the right kind and part count, for checks that do not
// need the reference model.
PartitionScheme placeholder(const PartitionSpec& s, const BoxDomain& domain)
{
    PartitionScheme p;
    p.kind = s.kind;
    p.domain = domain;
    switch (s.kind) {
    case PartitionKind::levelset:
        p.thresholds = s.thresholds;
        p.bands.resize(s.thresholds.size() - 1);
        break;
    case PartitionKind::hyperbox: return hyperboxes(domain, s.splits, s.overlap);
    case PartitionKind::variable: p.variables = s.sets; break;
    }
    return p;
}

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

int PartitionSpec::count(int dim) const
{
    switch (kind) {
    case PartitionKind::levelset: return static_cast<int>(thresholds.size()) - 1;
    case PartitionKind::hyperbox: return static_cast<int>(std::lround(std::pow(splits, dim)));
    case PartitionKind::variable: return static_cast<int>(sets.size());
    }
    return 0;
}

const AlgoEntry& RunConfig::algorithm(const std::string& name) const
{
    for (const AlgoEntry& e : algorithms)
        if (e.name == name) return e;
    throw ConfigError(source + ": no [algorithms." + name + "] table");
}

RunConfig parse_config(const std::string& text, const std::string& source)
{
    const Ctx ctx{source};
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        throw ConfigError(source + ":" + std::to_string(e.source().begin.line) + ": " +
                          std::string(e.description()));
    }
    check_keys(ctx, root, "top level", {"schema_version", "problem", "gp", "partitions", "algorithms", "benchmark"});

    RunConfig c;
    c.source = source;
    const toml::node* ver = root.get("schema_version");
    if (!ver) ctx.fail(nullptr, "missing schema_version");
    read(ctx, root, "schema_version", c.schema_version);
    if (c.schema_version != config_schema_version)
        ctx.fail(ver, "schema_version " + std::to_string(c.schema_version) + " is not supported (expected " +
                          std::to_string(config_schema_version) + ")");

    if (const toml::table* p = subtable(ctx, root, "problem", "top level")) {
        check_keys(ctx, *p, "problem",
                   {"kind", "seconds_per_evaluation", "fit_temperatures", "grid_resolution", "reference_seed",
                    "reactor", "golden"});
        std::string kind = "reactor";
        read(ctx, *p, "kind", kind);
        if (kind != "reactor") ctx.fail(p->get("kind"), "problem kind must be \"reactor\"");
        read(ctx, *p, "seconds_per_evaluation", c.case_options.seconds_per_evaluation);
        read(ctx, *p, "fit_temperatures", c.case_options.fit_temperatures);
        read(ctx, *p, "grid_resolution", c.case_options.grid_resolution);
        read(ctx, *p, "reference_seed", c.case_options.reference_seed);
        if (!(c.case_options.seconds_per_evaluation >= 0.0))
            ctx.fail(p->get("seconds_per_evaluation"), "'seconds_per_evaluation' must be >= 0");
        if (c.case_options.fit_temperatures < 8)
            ctx.fail(p->get("fit_temperatures"), "'fit_temperatures' must be >= 8");
        if (c.case_options.grid_resolution < 5)
            ctx.fail(p->get("grid_resolution"), "'grid_resolution' must be >= 5");
        if (const toml::table* r = subtable(ctx, *p, "reactor", "problem")) read_reactor(ctx, *r, c.reactor);
        if (const toml::table* g = subtable(ctx, *p, "golden", "problem")) read_golden(ctx, *g, c.golden);
    }

    GpDefaults gp;
    if (const toml::table* g = subtable(ctx, root, "gp", "top level")) read_gp(ctx, *g, gp);

    if (const toml::table* parts = subtable(ctx, root, "partitions", "top level")) {
        for (const auto& [k, v] : *parts) {
            const std::string name(k.str());
            if (!v.is_table()) ctx.fail(&v, "[partitions." + name + "] must be a table");
            c.partitions[name] = read_partition(ctx, *v.as_table(), "partitions." + name);
        }
    }

    const toml::table* algos = subtable(ctx, root, "algorithms", "top level");
    if (algos) {
        for (const auto& [k, v] : *algos) {
            const std::string name(k.str());
            if (!v.is_table()) ctx.fail(&v, "[algorithms." + name + "] must be a table");
            c.algorithms.push_back(read_algorithm(ctx, *v.as_table(), name, gp));
            const AlgoEntry& e = c.algorithms.back();
            if (!e.partition.empty() && !c.partitions.count(e.partition))
                ctx.fail(v.as_table()->get("partition"), "unknown partition '" + e.partition + "'");
        }
    }

    if (const toml::table* b = subtable(ctx, root, "benchmark", "top level")) {
        check_keys(ctx, *b, "benchmark", {"run_count", "seed_base", "target", "threads", "algorithms"});
        read(ctx, *b, "run_count", c.run_count);
        read(ctx, *b, "seed_base", c.seed_base);
        read(ctx, *b, "target", c.target);
        read(ctx, *b, "threads", c.threads);
        if (c.run_count < 1) ctx.fail(b->get("run_count"), "'run_count' must be >= 1");
        if (c.threads < 0) ctx.fail(b->get("threads"), "'threads' must be >= 0");
        if (const toml::node* n = b->get("algorithms")) {
            auto arr = n->as_array();
            if (!arr) ctx.fail(n, "'algorithms' must be an array of names");
            for (const toml::node& e : *arr) {
                auto s = e.as_string();
                if (!s) ctx.fail(&e, "algorithm names must be strings");
                const std::string name = s->get();
                bool found = false;
                for (const AlgoEntry& a : c.algorithms) found = found || a.name == name;
                if (!found) ctx.fail(&e, "benchmark lists '" + name + "' but there is no [algorithms." + name + "]");
                c.bench_algorithms.push_back(name);
            }
        }
    }
    if (c.bench_algorithms.empty())
        for (const AlgoEntry& a : c.algorithms) c.bench_algorithms.push_back(a.name);

    // Per-entry invariants, reported against the table they came from.
    for (const AlgoEntry& e : c.algorithms) {
        const toml::node* node = root.at_path("algorithms." + e.name).node();
        try {
            AlgoConfig cfg = e.config;
            if (!e.partition.empty()) cfg.partition = placeholder(c.partitions.at(e.partition), reactor::temperature_domain());
            cfg.validate(2);
        } catch (const Error& err) {
            ctx.fail(node, "[algorithms." + e.name + "] " + err.what());
        }
    }
    for (const auto& [name, s] : c.partitions) {
        if (s.kind != PartitionKind::variable) continue;
        try {
            validate_variable_sets(s.sets, 2);
        } catch (const Error& err) {
            ctx.fail(root.at_path("partitions." + name).node(), "[partitions." + name + "] " + err.what());
        }
    }
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config(os.str(), path);
}

void validate(const RunConfig& c)
{
    c.reactor.validate();
    if (c.algorithms.empty()) throw ConfigError(c.source + ": no [algorithms.*] tables");
    const BoxDomain domain = reactor::temperature_domain();
    for (const GoldenMinimum& g : c.golden)
        if (!domain.contains((Vector(2) << g.T1, g.T2).finished()))
            throw ConfigError(c.source + ": golden minimum (" + num(g.T1) + ", " + num(g.T2) +
                              ") lies outside the temperature domain");
    for (const auto& [name, s] : c.partitions)
        if (s.kind == PartitionKind::variable) validate_variable_sets(s.sets, domain.dim());
    for (const AlgoEntry& e : c.algorithms) {
        AlgoConfig cfg = e.config;
        if (!e.partition.empty()) cfg.partition = placeholder(c.partitions.at(e.partition), domain);
        cfg.validate(domain.dim());
    }
}

PartitionScheme build_partition(const PartitionSpec& s, const Problem& problem)
{
    switch (s.kind) {
    case PartitionKind::levelset:
        if (!problem.reference_model) throw ConfigError("level-set partition needs a reference model");
        return levelset_custom(problem.reference_model, problem.domain, s.thresholds);
    case PartitionKind::hyperbox: return hyperboxes(problem.domain, s.splits, s.overlap);
    case PartitionKind::variable: {
        validate_variable_sets(s.sets, problem.domain.dim());
        PartitionScheme p;
        p.kind = PartitionKind::variable;
        p.domain = problem.domain;
        p.variables = s.sets;
        return p;
    }
    }
    throw ConfigError("unknown partition kind");
}

AlgoConfig resolve_algorithm(const RunConfig& c, const AlgoEntry& e, const Problem& problem)
{
    AlgoConfig cfg = e.config;
    if (!e.partition.empty()) cfg.partition = build_partition(c.partitions.at(e.partition), problem);
    cfg.validate(problem.domain.dim());
    return cfg;
}

BenchmarkConfig build_benchmark(const RunConfig& c, const Problem& problem)
{
    BenchmarkConfig b;
    b.run_count = c.run_count;
    b.seed_base = c.seed_base;
    b.target = c.target;
    b.threads = c.threads;
    b.problem_description = problem_text(c);
    for (const std::string& name : c.bench_algorithms) {
        const AlgoEntry& e = c.algorithm(name);
        b.algorithms.push_back({name, resolve_algorithm(c, e, problem)});
    }
    return b;
}

std::string problem_text(const RunConfig& c)
{
    const reactor::ReactorParams& p = c.reactor;
    std::ostringstream os;
    auto arr = [&](const char* key, const auto& a) {
        os << key << '=';
        for (double v : a) os << num(v) << ';';
        os << '\n';
    };
    os << "kind=reactor\n";
    os << "seconds_per_evaluation=" << num(c.case_options.seconds_per_evaluation) << '\n';
    os << "fit_temperatures=" << c.case_options.fit_temperatures << '\n';
    os << "grid_resolution=" << c.case_options.grid_resolution << '\n';
    os << "reference_seed=" << c.case_options.reference_seed << '\n';
    arr("k0", p.k0);
    arr("activation_energy", p.activation_energy);
    arr("heat_of_reaction", p.heat_of_reaction);
    const double scalars[] = {p.reverse_factor, p.F1,  p.FB,  p.V1,  p.V2,  p.CA0, p.CD0,          p.CB0,
                              p.Tin1,           p.Tin2, p.rho, p.Cp,  p.Cpc, p.Toc, p.Tic,          p.KP,
                              p.latent_water,   p.price_coolant,   p.price_steam,   p.hours_per_year};
    arr("scalars", scalars);
    arr("alpha", p.alpha);
    arr("latent", p.latent);
    arr("price", p.price);
    arr("transfer_price", p.transfer_price);
    os << "split=" << (p.split == reactor::SplitMode::economic ? "economic" : "per_reactor") << '\n';
    return os.str();
}

}  // namespace parbo
