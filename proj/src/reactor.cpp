#include "parbo/reactor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace parbo::reactor {

namespace {

Eigen::Matrix<double, n_reactions, n_species> rate_jacobian(const Conc& C, const Rates& k, double rev)
{
    Eigen::Matrix<double, n_reactions, n_species> dr;
    dr.setZero();
    dr(0, A) = 2.0 * k[0] * C[A];
    dr(0, P) = -rev * k[0];
    dr(1, P) = k[1];
    dr(1, U) = -2.0 * rev * k[1] * C[U];
    dr(2, U) = k[2] * C[B];
    dr(2, B) = k[2] * C[U];
    dr(2, E) = -rev * k[2];
    dr(3, U) = k[3] * C[D];
    dr(3, D) = k[3] * C[U];
    return dr;
}

Jacobian residual_jacobian(const Conc& C, double tau, const Rates& k, double rev)
{
    return tau * stoichiometry() * rate_jacobian(C, k, rev) - Jacobian::Identity();
}

double heat_duty(const Rates& r, double V, const std::array<double, n_reactions>& dH)
{
    double q = 0.0;
    for (int j = 0; j < n_reactions; ++j) q -= r[j] * V * dH[j];
    return q;
}

double coolant_flow(const ReactorParams& p, double F, double Tin, double T, double heat)
{
    return (p.rho * p.Cp * F * (Tin - T) + heat) / (p.Cpc * (p.Toc - p.Tic));
}

Conc to_conc(const Vector& v)
{
    Conc c;
    for (int i = 0; i < n_species; ++i) c[i] = v[i];
    return c;
}

Vector from_array(const std::array<double, n_species>& a)
{
    Vector v(n_species);
    for (int i = 0; i < n_species; ++i) v[i] = a[i];
    return v;
}

std::atomic<bool> clamp_warned{false};

}  // namespace

const Eigen::Matrix<double, n_species, n_reactions>& stoichiometry()
{
    static const Eigen::Matrix<double, n_species, n_reactions> N = [] {
        Eigen::Matrix<double, n_species, n_reactions> m;
        m << -2, 0, 0, 2,  //
            1, -1, 0, 0,   //
            0, 2, -1, -1,  //
            0, 0, -1, 0,   //
            0, 0, 1, 0,    //
            0, 0, 0, -1;
        return m;
    }();
    return N;
}

void ReactorParams::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("reactor: ") + name + " must be positive");
    };
    for (int j = 0; j < n_reactions; ++j) {
        if (!(k0[j] >= 0.0)) throw ConfigError("reactor: k0 must be nonnegative");
        if (!(activation_energy[j] >= 0.0)) throw ConfigError("reactor: activation energy must be nonnegative");
    }
    if (!(reverse_factor >= 0.0)) throw ConfigError("reactor: reverse_factor must be nonnegative");
    positive(F1, "F1");
    if (!(FB >= 0.0)) throw ConfigError("reactor: FB must be nonnegative");
    positive(V1, "V1");
    positive(V2, "V2");
    if (!(CA0 >= 0.0 && CD0 >= 0.0 && CB0 >= 0.0)) throw ConfigError("reactor: feed concentrations must be nonnegative");
    positive(Tin1, "Tin1");
    positive(Tin2, "Tin2");
    positive(rho, "rho");
    positive(Cp, "Cp");
    positive(Cpc, "Cpc");
    if (!(Toc > Tic)) throw ConfigError("reactor: coolant outlet temperature must exceed inlet temperature");
    for (int i = 0; i < n_species; ++i) {
        positive(alpha[i], "alpha");
        if (!(latent[i] >= 0.0)) throw ConfigError("reactor: latent heats must be nonnegative");
    }
    positive(KP, "KP");
    positive(latent_water, "latent_water");
    positive(hours_per_year, "hours_per_year");
}

ReactorParams ReactorParams::defaults()
{
    ReactorParams p;
    // Calibrated case study: three local minima on [303, 423]^2, global
    // minimum in the low-temperature interior, two locals on the T1 = 423 edge.
    const double Tref = 363.0;
    const std::array<double, 4> kref{0.0011240289635327208, 0.0496928414213804, 0.04536824428499649,
                                     0.0016786068005668212};
    p.activation_energy = {35072.219608293024, 43563.73737298001, 11874.293385229746, 57101.66601662056};
    for (int j = 0; j < 4; ++j) p.k0[j] = kref[j] * std::exp(p.activation_energy[j] / (gas_constant * Tref));
    p.heat_of_reaction = {-5e4, -5e4, -5e4, -5e4};
    p.FB = 0.008534068730376407;
    p.CB0 = 0.8891355570901319;
    p.CD0 = 0.836197961526871;
    p.Tin1 = 464.4587014948536;
    p.Tin2 = 463.09992956355933;
    const double scale = 25.942918109058432;
    p.price = {0.0 * scale, -1.0 * scale, 7.15957729405395e-05 * scale, 0.0 * scale,
               -0.3622224715014374 * scale, 7.226127701653549e-07 * scale};
    p.price_coolant = 1.3467101608982854e-07 * scale;
    p.price_steam = 9.675386721325593e-06 * scale;
    p.transfer_price = p.price;
    return p;
}

double arrhenius(double k0, double activation_energy, double T)
{
    if (!(T > 0.0)) throw InvalidArgument("arrhenius: temperature must be positive");
    return k0 * std::exp(-activation_energy / (gas_constant * T));
}

Rates rate_constants(const ReactorParams& p, double T)
{
    Rates k;
    for (int j = 0; j < n_reactions; ++j) k[j] = arrhenius(p.k0[j], p.activation_energy[j], T);
    return k;
}

Rates reaction_rates(const Conc& C, const Rates& k, double rev)
{
    Rates r;
    r[0] = k[0] * C[A] * C[A] - rev * k[0] * C[P];
    r[1] = k[1] * C[P] - rev * k[1] * C[U] * C[U];
    r[2] = k[2] * C[U] * C[B] - rev * k[2] * C[E];
    r[3] = k[3] * C[U] * C[D];
    return r;
}

Conc cstr_residual(const Conc& C, const Conc& inlet, double tau, const Rates& k, double rev)
{
    return inlet - C + tau * stoichiometry() * reaction_rates(C, k, rev);
}

CstrResult solve_cstr(const ReactorParams& p, int reactor, const Conc& inlet, double T)
{
    if (reactor != 0 && reactor != 1) throw InvalidArgument("solve_cstr: reactor index must be 0 or 1");
    if ((inlet.array() < 0.0).any()) throw InvalidArgument("solve_cstr: inlet concentrations must be nonnegative");
    const double V = reactor == 0 ? p.V1 : p.V2;
    const double F = reactor == 0 ? p.F1 : p.F2();
    const double Tin = reactor == 0 ? p.Tin1 : p.Tin2;
    const double tau = V / F;
    const double rev = p.reverse_factor;
    const Rates k = rate_constants(p, T);
    const double scale = std::max(1.0, inlet.maxCoeff());
    const double target = 1e-13;

    auto norm = [&](const Conc& C) { return cstr_residual(C, inlet, tau, k, rev).lpNorm<Eigen::Infinity>() / scale; };

    Conc C = inlet;
    double res = norm(C);
    int iterations = 0;

    // Damped Newton from the inlet composition.
    bool converged = res < target;
    for (int it = 0; it < 100 && !converged; ++it, ++iterations) {
        const Conc Fv = cstr_residual(C, inlet, tau, k, rev);
        const Conc dx = residual_jacobian(C, tau, k, rev).partialPivLu().solve(-Fv);
        double t = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 30; ++bt, t *= 0.5) {
            const Conc Cn = (C + t * dx).cwiseMax(0.0);
            const double rn = norm(Cn);
            if (rn < (1.0 - 1e-4 * t) * res || rn < target) {
                C = Cn;
                res = rn;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        converged = res < target;
    }

    // Pseudo-transient continuation: (I/dt - J) dx = F with adaptive dt.
    if (!converged) {
        C = inlet;
        res = norm(C);
        double dt = 1e-2;
        for (int it = 0; it < 5000 && !converged; ++it, ++iterations) {
            const Conc Fv = cstr_residual(C, inlet, tau, k, rev);
            const Jacobian M = Jacobian::Identity() / dt - residual_jacobian(C, tau, k, rev);
            const Conc Cn = (C + M.partialPivLu().solve(Fv)).cwiseMax(0.0);
            const double rn = norm(Cn);
            if (std::isfinite(rn) && rn < 1.5 * res) {
                C = Cn;
                res = rn;
                dt = std::min(dt * 3.0, 1e12);
            } else {
                dt *= 0.3;
                if (dt < 1e-14) break;
            }
            converged = res < target;
        }
    }
    if (!(res < 1e-11)) {
        std::ostringstream os;
        os << "CSTR " << reactor + 1 << " steady state did not converge at T=" << T << " (scaled residual "
           << res << " after " << iterations << " iterations)";
        throw NumericalError(os.str());
    }
    if ((C.array() < 0.0).any()) throw NumericalError("CSTR steady state has a negative concentration");

    CstrResult out;
    out.C = C;
    out.r = reaction_rates(C, k, rev);
    out.heat = heat_duty(out.r, V, p.heat_of_reaction);
    out.coolant = coolant_flow(p, F, Tin, T, out.heat);
    out.residual = res;
    out.iterations = iterations;
    return out;
}

Equilibrium flash_equilibrium(const Vector& z, const Vector& alpha, double KP, double fraction)
{
    if (z.size() != alpha.size()) throw InvalidArgument("flash: composition and volatility sizes differ");
    Equilibrium e{Vector(z.size()), Vector(z.size())};
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double den = fraction * (KP * alpha[i] - 1.0) + 1.0;
        if (!(den > 0.0))
            throw InvalidArgument("flash: nonpositive denominator for component " + std::to_string(i) +
                                  " (check volatilities)");
        e.x[i] = z[i] / den;
        e.y[i] = KP * alpha[i] * e.x[i];
    }
    return e;
}

FlashResult flash(const ReactorParams& p, const Conc& z, double molar_flow, FlashMode which)
{
    if ((z.array() < 0.0).any()) throw InvalidArgument("flash: negative feed composition");
    if (!(molar_flow >= 0.0)) throw InvalidArgument("flash: negative feed flow");
    FlashResult out;
    out.fraction = which == FlashMode::recover_E ? z[E] : 1.0 - z[P];
    const Equilibrium eq = flash_equilibrium(z, from_array(p.alpha), p.KP, out.fraction);
    out.x = to_conc(eq.x);
    out.y = to_conc(eq.y);
    out.vapor = out.fraction * molar_flow;
    out.liquid = (1.0 - out.fraction) * molar_flow;
    double q = 0.0;
    for (int i = 0; i < n_species; ++i) q += p.latent[i] * out.y[i] * out.vapor;
    out.steam = q / p.latent_water;
    return out;
}

namespace {

SteadyState downstream(const ReactorParams& p, SteadyState s)
{
    const double total = s.reactor2.C.sum();
    if (!(total > 0.0)) throw NumericalError("reactor-2 outlet is empty");
    const Conc z = s.reactor2.C / total;
    s.flash1 = flash(p, z, p.F2() * total, FlashMode::recover_E);
    s.flash2 = flash(p, s.flash1.x, s.flash1.liquid, FlashMode::recover_P);
    return s;
}

Conc reactor1_inlet(const ReactorParams& p)
{
    Conc in = Conc::Zero();
    in[A] = p.CA0;
    in[D] = p.CD0;
    return in;
}

Conc reactor2_inlet(const ReactorParams& p, const Conc& outlet1)
{
    Conc in = outlet1 * (p.F1 / p.F2());
    in[B] += p.FB * p.CB0 / p.F2();
    return in;
}

}  // namespace

Performance economics(const ReactorParams& p, const SteadyState& s)
{
    const double H = p.hours_per_year * 3600.0;
    const auto& w = p.price;
    double products = 0.0;
    for (int i = 0; i < n_species; ++i)
        products += w[i] * s.flash1.y[i] * s.flash1.vapor + w[i] * s.flash2.x[i] * s.flash2.liquid;
    const double reagents1 = w[A] * p.F1 * p.CA0 + w[D] * p.F1 * p.CD0;
    const double reagents2 = w[B] * p.FB * p.CB0;
    const double utilities = p.price_coolant * (s.reactor1.coolant + s.reactor2.coolant) +
                             p.price_steam * (s.flash1.steam + s.flash2.steam);
    Performance out;
    out.f = (products + reagents1 + reagents2 + utilities) * H;
    if (p.split == SplitMode::economic) {
        out.f1 = (products + reagents1 + reagents2) * H;
        out.f2 = utilities * H;
    } else {
        double transfer = 0.0;
        for (int i = 0; i < n_species; ++i) transfer += p.transfer_price[i] * p.F1 * s.reactor1.C[i];
        out.f1 = (reagents1 + p.price_coolant * s.reactor1.coolant + transfer) * H;
        out.f2 = out.f - out.f1;
    }
    return out;
}

SteadyState steady_state(const ReactorParams& p, double T1, double T2)
{
    SteadyState s;
    s.reactor1 = solve_cstr(p, 0, reactor1_inlet(p), T1);
    s.inlet2 = reactor2_inlet(p, s.reactor1.C);
    s.reactor2 = solve_cstr(p, 1, s.inlet2, T2);
    return downstream(p, s);
}

Performance performance(const ReactorParams& p, double T1, double T2)
{
    return economics(p, steady_state(p, T1, T2));
}

double LogCubic::log_rate(double T) const
{
    const double u = (1.0 / T - center) / half_width;
    return theta[0] * u + theta[1] * u * u + theta[2] * u * u * u + theta[3];
}

double LogCubic::operator()(double T) const
{
    return active ? std::exp(log_rate(T)) : 0.0;
}

LogCubic fit_log_cubic(const std::vector<double>& T, const std::vector<double>& r)
{
    if (T.size() != r.size()) throw InvalidArgument("fit_log_cubic: size mismatch");
    LogCubic fit;
    std::vector<double> ts, ys;
    bool all_zero = true;
    for (std::size_t i = 0; i < T.size(); ++i) {
        if (r[i] != 0.0) all_zero = false;
        if (r[i] > 0.0 && std::isfinite(r[i])) {
            ts.push_back(T[i]);
            ys.push_back(std::log(r[i]));
        } else if (r[i] != 0.0 || !all_zero) {
            warn("rate sample at T=" + std::to_string(T[i]) + " is nonpositive; dropped from the fit");
        }
    }
    if (all_zero && !T.empty()) {
        fit.active = false;
        return fit;
    }
    if (ts.size() < 4)
        throw NumericalError("fit_log_cubic: " + std::to_string(ts.size()) + " positive rate samples, need 4");
    const Eigen::Index n = static_cast<Eigen::Index>(ts.size());
    Matrix X(n, 4);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = (1.0 / ts[i] - fit.center) / fit.half_width;
        X.row(i) << u, u * u, u * u * u, 1.0;
        y[i] = ys[i];
    }
    const Vector theta = X.colPivHouseholderQr().solve(y);
    for (int j = 0; j < 4; ++j) fit.theta[j] = theta[j];
    const double ss_res = (y - X * theta).squaredNorm();
    const double ss_tot = (y.array() - y.mean()).square().sum();
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

double ReferenceModel::min_r_squared() const
{
    double m = 1.0;
    for (const auto& f : reactor1)
        if (f.active) m = std::min(m, f.r_squared);
    for (const auto& f : reactor2)
        if (f.active) m = std::min(m, f.r_squared);
    return m;
}

ReferenceModel reference_fit(const ReactorParams& p, const std::vector<double>& temperatures)
{
    std::vector<double> distinct = temperatures;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 8) throw InvalidArgument("reference_fit needs at least 8 distinct temperatures");
    std::array<std::vector<double>, n_reactions> r1, r2;
    for (double T : temperatures) {
        const SteadyState s = steady_state(p, T, T);
        for (int j = 0; j < n_reactions; ++j) {
            r1[j].push_back(s.reactor1.r[j]);
            r2[j].push_back(s.reactor2.r[j]);
        }
    }
    ReferenceModel ref;
    for (int j = 0; j < n_reactions; ++j) {
        ref.reactor1[j] = fit_log_cubic(temperatures, r1[j]);
        ref.reactor2[j] = fit_log_cubic(temperatures, r2[j]);
    }
    return ref;
}

Performance reference_performance(const ReactorParams& p, const ReferenceModel& ref, double T1, double T2)
{
    auto closed_form = [&](const std::array<LogCubic, n_reactions>& fits, int reactor, const Conc& inlet,
                           double T) {
        const double V = reactor == 0 ? p.V1 : p.V2;
        const double F = reactor == 0 ? p.F1 : p.F2();
        const double Tin = reactor == 0 ? p.Tin1 : p.Tin2;
        CstrResult out;
        for (int j = 0; j < n_reactions; ++j) out.r[j] = fits[j](T);
        const Conc C = inlet + (V / F) * stoichiometry() * out.r;
        if ((C.array() < 0.0).any() && !clamp_warned.exchange(true))
            warn("reference model produced a negative concentration; clamped to zero");
        out.C = C.cwiseMax(0.0);
        out.heat = heat_duty(out.r, V, p.heat_of_reaction);
        out.coolant = coolant_flow(p, F, Tin, T, out.heat);
        return out;
    };
    SteadyState s;
    s.reactor1 = closed_form(ref.reactor1, 0, reactor1_inlet(p), T1);
    s.inlet2 = reactor2_inlet(p, s.reactor1.C);
    s.reactor2 = closed_form(ref.reactor2, 1, s.inlet2, T2);
    return economics(p, downstream(p, s));
}

BoxDomain temperature_domain()
{
    return BoxDomain(Vector::Constant(2, 303.0), Vector::Constant(2, 423.0));
}

GpModel fit_reference_gp(const ReactorParams& p, const ReferenceModel& ref, int grid_resolution, Rng& rng,
                         Component component)
{
    if (grid_resolution < 5) throw InvalidArgument("fit_reference_gp: grid resolution must be >= 5");
    const BoxDomain dom = temperature_domain();
    Dataset data;
    for (int i = 0; i < grid_resolution; ++i)
        for (int j = 0; j < grid_resolution; ++j) {
            Vector x(2);
            x << 303.0 + 120.0 * i / (grid_resolution - 1), 303.0 + 120.0 * j / (grid_resolution - 1);
            const Performance g = reference_performance(p, ref, x[0], x[1]);
            data.add(x, component == Component::total ? g.f : component == Component::first ? g.f1 : g.f2);
        }
    FitOptions opt;
    opt.restarts = 3;
    return fit(data, dom, KernelParams::isotropic(2, 0.3), rng, opt);
}

std::vector<double> evenly_spaced(double lo, double hi, int count)
{
    if (count < 2) throw InvalidArgument("evenly_spaced needs at least two points");
    std::vector<double> v(count);
    for (int i = 0; i < count; ++i) v[i] = lo + (hi - lo) * i / (count - 1);
    return v;
}

CaseStudy make_case_study(const ReactorParams& params, const CaseStudyOptions& options)
{
    params.validate();
    if (!(options.seconds_per_evaluation >= 0.0)) throw ConfigError("seconds_per_evaluation must be >= 0");
    CaseStudy cs;
    cs.params = params;
    cs.reference = reference_fit(params, evenly_spaced(303.0, 423.0, options.fit_temperatures));
    Rng rng(options.reference_seed);
    Rng r0 = rng.fork(0), r1 = rng.fork(1), r2 = rng.fork(2);
    cs.g_hat = std::make_shared<const GpModel>(
        fit_reference_gp(params, cs.reference, options.grid_resolution, r0, Component::total));
    cs.g1_hat = std::make_shared<const GpModel>(
        fit_reference_gp(params, cs.reference, options.grid_resolution, r1, Component::first));
    cs.g2_hat = std::make_shared<const GpModel>(
        fit_reference_gp(params, cs.reference, options.grid_resolution, r2, Component::second));

    Problem& pr = cs.problem;
    pr.domain = temperature_domain();
    const ReactorParams p = params;
    pr.evaluate = [p](const Vector& x) {
        const Performance perf = performance(p, x[0], x[1]);
        Observation o;
        o.f = perf.f;
        o.parts = Vector(2);
        o.parts << perf.f1, perf.f2;
        return o;
    };
    auto mean_of = [](std::shared_ptr<const GpModel> m) {
        return ScalarFunction([m](const Vector& x) { return m->mean(x); });
    };
    pr.reference = mean_of(cs.g_hat);
    pr.reference_model = cs.g_hat;
    pr.subsystem_references = {mean_of(cs.g1_hat), mean_of(cs.g2_hat)};
    pr.subsystem_count = 2;
    const double cost = options.seconds_per_evaluation;
    pr.experiment_cost = [cost](const Vector&) { return cost; };
    return cs;
}

}  // namespace parbo::reactor
