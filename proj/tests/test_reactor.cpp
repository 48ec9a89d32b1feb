#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "parbo/afopt.hpp"
#include "parbo/reactor.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

using namespace parbo;
using namespace parbo::reactor;

#ifndef PARBO_TEST_DATA
#define PARBO_TEST_DATA "tests/data"
#endif

namespace {

// Independent steady state of one CSTR: each species balance is solved for
// its own concentration with the others frozen (consumption terms linear in
// that species go to the denominator), under-relaxed Jacobi sweeps.
Conc fixed_point_cstr(const ReactorParams& p, const Conc& in, double tau, double T)
{
    double k[4];
    for (int j = 0; j < 4; ++j) k[j] = p.k0[j] * std::exp(-p.activation_energy[j] / (8.314 * T));
    const double e = p.reverse_factor;
    Conc c = in;
    for (int it = 0; it < 2000000; ++it) {
        const double a = c[A], pp = c[P], u = c[U], b = c[B], ee = c[E], d = c[D];
        Conc n;
        n[A] = (in[A] + tau * (2 * e * k[0] * pp + 2 * k[3] * u * d)) / (1 + 2 * tau * k[0] * a);
        n[P] = (in[P] + tau * (k[0] * a * a + e * k[1] * u * u)) / (1 + tau * (e * k[0] + k[1]));
        n[U] = (in[U] + tau * (2 * k[1] * pp + e * k[2] * ee)) / (1 + tau * (2 * e * k[1] * u + k[2] * b + k[3] * d));
        n[B] = (in[B] + tau * e * k[2] * ee) / (1 + tau * k[2] * u);
        n[E] = (in[E] + tau * k[2] * u * b) / (1 + tau * e * k[2]);
        n[D] = in[D] / (1 + tau * k[3] * u);
        const Conc next = 0.5 * c + 0.5 * n;
        const double step = (next - c).lpNorm<Eigen::Infinity>();
        c = next;
        if (step < 1e-15) break;
    }
    return c;
}

ReactorParams no_kinetics()
{
    ReactorParams p = ReactorParams::defaults();
    p.k0 = {0.0, 0.0, 0.0, 0.0};
    return p;
}

Conc feed1(const ReactorParams& p)
{
    Conc c = Conc::Zero();
    c[A] = p.CA0;
    c[D] = p.CD0;
    return c;
}

std::vector<std::vector<double>> read_csv(const std::string& path, std::string& header)
{
    std::ifstream in(path);
    REQUIRE(in.good());
    std::getline(in, header);
    std::vector<std::vector<double>> rows;
    for (std::string line; std::getline(in, line);) {
        std::stringstream ss(line);
        std::vector<double> row;
        for (std::string cell; std::getline(ss, cell, ',');) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

const ReferenceModel& default_reference()
{
    static const ReferenceModel ref = reference_fit(ReactorParams::defaults(), evenly_spaced(303.0, 423.0, 25));
    return ref;
}

}  // namespace

TEST_CASE("arrhenius")
{
    for (double T : {250.0, 303.0, 1000.0}) CHECK(arrhenius(3.5, 0.0, T) == 3.5);
    CHECK(arrhenius(1.0, 8314.0, 1000.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    double prev = 0.0;
    for (double T = 303.0; T <= 423.0; T += 1.0) {
        const double k = arrhenius(2.0, 4e4, T);
        CHECK(k > prev);
        prev = k;
    }
    CHECK_THROWS_AS(arrhenius(1.0, 1.0, 0.0), InvalidArgument);
}

TEST_CASE("default parameters are valid and use the fixed reverse factor")
{
    const ReactorParams p = ReactorParams::defaults();
    CHECK_NOTHROW(p.validate());
    CHECK(p.reverse_factor == 0.01);
    ReactorParams bad = p;
    bad.V1 = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = p;
    bad.Toc = bad.Tic;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("no reaction leaves the feed unchanged")
{
    const ReactorParams p = no_kinetics();
    const Conc in = feed1(p);
    for (double T : {303.0, 350.0, 423.0}) {
        const CstrResult r = solve_cstr(p, 0, in, T);
        CHECK(r.C == in);
        CHECK(r.heat == 0.0);
        CHECK(r.coolant == p.rho * p.Cp * p.F1 * (p.Tin1 - T) / (p.Cpc * (p.Toc - p.Tic)));
    }
}

TEST_CASE("steady states on the 13 x 13 grid")
{
    const ReactorParams p = ReactorParams::defaults();
    const double tau1 = p.V1 / p.F1, tau2 = p.V2 / p.F2();
    for (double T1 : evenly_spaced(303.0, 423.0, 13)) {
        for (double T2 : evenly_spaced(303.0, 423.0, 13)) {
            const SteadyState s = steady_state(p, T1, T2);
            // Replay the balances with the library only supplying concentrations.
            const Conc in1 = feed1(p);
            const Conc r1 = cstr_residual(s.reactor1.C, in1, tau1, rate_constants(p, T1), p.reverse_factor);
            const Conc r2 = cstr_residual(s.reactor2.C, s.inlet2, tau2, rate_constants(p, T2), p.reverse_factor);
            CHECK(r1.lpNorm<Eigen::Infinity>() / std::max(1.0, in1.maxCoeff()) < 1e-10);
            CHECK(r2.lpNorm<Eigen::Infinity>() / std::max(1.0, s.inlet2.maxCoeff()) < 1e-10);
            CHECK((s.reactor1.C.array() >= 0.0).all());
            CHECK((s.reactor2.C.array() >= 0.0).all());
        }
    }
}

TEST_CASE("concentrations at (333, 322) match a fixed-point oracle")
{
    const ReactorParams p = ReactorParams::defaults();
    const SteadyState s = steady_state(p, 333.0, 322.0);
    const Conc c1 = fixed_point_cstr(p, feed1(p), p.V1 / p.F1, 333.0);
    Conc in2 = c1 * (p.F1 / p.F2());
    in2[B] += p.FB * p.CB0 / p.F2();
    const Conc c2 = fixed_point_cstr(p, in2, p.V2 / p.F2(), 322.0);
    MESSAGE("reactor 1 " << s.reactor1.C.transpose());
    MESSAGE("reactor 2 " << s.reactor2.C.transpose());
    CHECK((s.reactor1.C - c1).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((s.reactor2.C - c2).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("reactor 1 conserves A-equivalents without reverse steps and reaction 4")
{
    ReactorParams p = ReactorParams::defaults();
    p.reverse_factor = 0.0;
    p.k0[3] = 0.0;
    for (double T : evenly_spaced(303.0, 423.0, 7)) {
        const CstrResult r = solve_cstr(p, 0, feed1(p), T);
        CHECK(std::abs(r.C[A] + 2.0 * r.C[P] + r.C[U] - p.CA0) < 1e-8);
    }
}

TEST_CASE("flash equilibrium")
{
    const Vector z = (Vector(2) << 0.5, 0.5).finished();
    const Equilibrium e = flash_equilibrium(z, (Vector(2) << 2.0, 1.0).finished(), 1.0, 0.5);
    CHECK(e.x[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(e.x[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(e.y[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(e.y[1] == doctest::Approx(0.5).epsilon(1e-15));

    // K alpha = 1 does not separate anything.
    const Vector z3 = (Vector(3) << 0.2, 0.3, 0.5).finished();
    const Equilibrium same = flash_equilibrium(z3, Vector::Constant(3, 0.5), 2.0, 0.37);
    CHECK(same.x == z3);
    CHECK(same.y == z3);

    CHECK_THROWS_AS(flash_equilibrium(z, (Vector(2) << 0.1, 1.0).finished(), 1.0, 2.0), InvalidArgument);

    // Steam is linear in the feed flow at fixed composition.
    const ReactorParams p = ReactorParams::defaults();
    Conc zz;
    zz << 0.3, 0.2, 0.1, 0.1, 0.2, 0.1;
    const FlashResult a = flash(p, zz, 1.0, FlashMode::recover_E);
    const FlashResult b = flash(p, zz, 3.0, FlashMode::recover_E);
    CHECK(a.fraction == zz[E]);
    CHECK(b.steam == doctest::Approx(3.0 * a.steam).epsilon(1e-14));
    CHECK(flash(p, zz, 1.0, FlashMode::recover_P).fraction == 1.0 - zz[P]);
}

TEST_CASE("performance bookkeeping")
{
    ReactorParams free = ReactorParams::defaults();
    free.price.fill(0.0);
    free.price_coolant = 0.0;
    free.price_steam = 0.0;
    free.transfer_price.fill(0.0);
    const Performance z = performance(free, 350.0, 380.0);
    CHECK(z.f == 0.0);
    CHECK(z.f1 == 0.0);
    CHECK(z.f2 == 0.0);

    const ReactorParams p = ReactorParams::defaults();
    const Performance a = performance(p, 341.5, 377.25);
    const Performance b = performance(p, 341.5, 377.25);
    CHECK(a.f == b.f);
    CHECK(a.f1 == b.f1);
    CHECK(a.f2 == b.f2);
    CHECK(a.f1 + a.f2 == doctest::Approx(a.f).epsilon(1e-12));

    ReactorParams econ = p;
    econ.split = SplitMode::economic;
    const Performance c = performance(econ, 341.5, 377.25);
    CHECK(c.f == a.f);
    CHECK(c.f1 + c.f2 == doctest::Approx(c.f).epsilon(1e-12));
    CHECK(c.f1 != a.f1);
}

TEST_CASE("golden 13 x 13 grid")
{
    std::string header;
    const auto rows = read_csv(std::string(PARBO_TEST_DATA) + "/reactor_grid13.csv", header);
    CHECK(header == "T1,T2,f,f1,f2,g");
    REQUIRE(rows.size() == 169);
    const ReactorParams p = ReactorParams::defaults();
    const ReferenceModel& ref = default_reference();
    for (const auto& r : rows) {
        const Performance perf = performance(p, r[0], r[1]);
        CHECK(perf.f == doctest::Approx(r[2]).epsilon(1e-9));
        CHECK(perf.f1 == doctest::Approx(r[3]).epsilon(1e-9));
        CHECK(perf.f2 == doctest::Approx(r[4]).epsilon(1e-9));
        CHECK(reference_performance(p, ref, r[0], r[1]).f == doctest::Approx(r[5]).epsilon(1e-9));
    }
}

TEST_CASE("calibrated landscape resembles the published one")
{
    // Published: global -410,000 at (333, 322); locals about -395,000 at
    // (423, 340) and -387,000 at (423, 423).
    const ReactorParams p = ReactorParams::defaults();
    CHECK(performance(p, 333.0, 322.0).f == doctest::Approx(-410000.0).epsilon(0.01));
    CHECK(performance(p, 423.0, 340.0).f == doctest::Approx(-395000.0).epsilon(0.01));
    CHECK(performance(p, 423.0, 423.0).f == doctest::Approx(-387000.0).epsilon(0.01));
}

TEST_CASE("log-cubic fit")
{
    SUBCASE("exact cubic data is recovered")
    {
        LogCubic truth;
        truth.theta = {-3.1, 0.7, -0.25, -2.0};
        std::vector<double> T = evenly_spaced(303.0, 423.0, 12), r;
        for (double t : T) r.push_back(std::exp(truth.log_rate(t)));
        const LogCubic fit = fit_log_cubic(T, r);
        for (int j = 0; j < 4; ++j) CHECK(std::abs(fit.theta[j] - truth.theta[j]) < 1e-8);
        CHECK(fit.r_squared > 1.0 - 1e-12);
    }

    SUBCASE("sample handling")
    {
        std::vector<double> T = evenly_spaced(303.0, 423.0, 8);
        CHECK_FALSE(fit_log_cubic(T, std::vector<double>(8, 0.0)).active);
        std::vector<double> r(8, 1.0);
        r[2] = -1.0;
        CHECK(fit_log_cubic(T, r).active);
        std::vector<double> few(8, -1.0);
        few[0] = few[1] = few[2] = 1.0;
        CHECK_THROWS_AS(fit_log_cubic(T, few), NumericalError);
        CHECK_THROWS_AS(reference_fit(ReactorParams::defaults(), evenly_spaced(303.0, 423.0, 7)), InvalidArgument);
    }

    SUBCASE("default config fits well and stably")
    {
        const ReactorParams p = ReactorParams::defaults();
        const std::vector<double> T = evenly_spaced(303.0, 423.0, 25);
        const ReferenceModel& full = default_reference();
        MESSAGE("min R^2 " << full.min_r_squared());
        CHECK(full.min_r_squared() >= 0.95);

        // Leave out one interior sample at a time.
        double worst = 0.0;
        for (int drop = 1; drop + 1 < static_cast<int>(T.size()); drop += 4) {
            std::vector<double> t = T;
            t.erase(t.begin() + drop);
            const ReferenceModel jack = reference_fit(p, t);
            auto compare = [&](const LogCubic& a, const LogCubic& b) {
                if (!a.active) return;
                double norm = 0.0;
                for (double v : a.theta) norm = std::max(norm, std::abs(v));
                for (int j = 0; j < 4; ++j) worst = std::max(worst, std::abs(a.theta[j] - b.theta[j]) / norm);
            };
            for (int j = 0; j < n_reactions; ++j) {
                compare(full.reactor1[j], jack.reactor1[j]);
                compare(full.reactor2[j], jack.reactor2[j]);
            }
        }
        MESSAGE("largest jackknife change " << worst);
        CHECK(worst < 0.05);
    }
}

TEST_CASE("null rate model reproduces the no-reaction economics")
{
    const ReactorParams p = no_kinetics();
    const ReferenceModel ref = reference_fit(p, evenly_spaced(303.0, 423.0, 9));
    for (const LogCubic& c : ref.reactor1) CHECK_FALSE(c.active);
    for (double T1 : {303.0, 360.0, 423.0})
        for (double T2 : {310.0, 400.0}) {
            const Performance g = reference_performance(p, ref, T1, T2);
            const Performance f = performance(p, T1, T2);
            CHECK(g.f == doctest::Approx(f.f).epsilon(1e-12));
            CHECK(g.f1 == doctest::Approx(f.f1).epsilon(1e-12));
        }
}

TEST_CASE("reference surrogate")
{
    const ReactorParams p = ReactorParams::defaults();
    const ReferenceModel& ref = default_reference();
    Rng rng(0);
    const GpModel gh = fit_reference_gp(p, ref, 15, rng);
    auto g = [&](double a, double b) { return reference_performance(p, ref, a, b).f; };

    // Held-out random temperatures.
    Rng probe(11);
    double lo = 1e300, hi = -1e300, ss = 0.0;
    const int n = 400;
    for (int i = 0; i < n; ++i) {
        const double a = 303.0 + 120.0 * probe.uniform(), b = 303.0 + 120.0 * probe.uniform();
        const double v = g(a, b);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        const double e = gh.mean((Vector(2) << a, b).finished()) - v;
        ss += e * e;
    }
    const double rms = std::sqrt(ss / n);
    MESSAGE("holdout rms " << rms << " range " << hi - lo);
    CHECK(rms <= 0.01 * (hi - lo));

    // Grid nodes are interpolated to within twice the fitted noise level.
    const double noise_sd = std::sqrt(gh.params().noise_variance) * gh.scaling().y_scale;
    int outside = 0;
    for (double a : evenly_spaced(303.0, 423.0, 15))
        for (double b : evenly_spaced(303.0, 423.0, 15))
            if (std::abs(gh.mean((Vector(2) << a, b).finished()) - g(a, b)) > 2.0 * noise_sd) ++outside;
    MESSAGE("noise sd " << noise_sd << ", nodes outside 2 sd: " << outside);
    CHECK(outside == 0);
}

TEST_CASE("calibration: surrogate argmin lies within 3 K of the reference argmin")
{
    const ReactorParams p = ReactorParams::defaults();
    const ReferenceModel& ref = default_reference();
    Rng rng(0);
    const GpModel gh = fit_reference_gp(p, ref, 15, rng);
    auto g = [&](double a, double b) { return reference_performance(p, ref, a, b).f; };

    // Against a 0.25 K grid of g. The default g has two minima, near
    // (342, 412) and (342, 303), whose values differ by a few USD/yr.
    double best = 1e300, ba = 0.0, bb = 0.0;
    for (int i = 0; i <= 480; ++i)
        for (int j = 0; j <= 480; ++j) {
            const double a = 303.0 + 0.25 * i, b = 303.0 + 0.25 * j;
            const double v = g(a, b);
            if (v < best) {
                best = v;
                ba = a;
                bb = b;
            }
        }
    Rng srng(12);
    const Minimum m = minimize_box([&](const Vector& x) { return gh.mean(x); }, temperature_domain(), 20, srng);
    MESSAGE("g argmin (" << ba << ", " << bb << ") value " << best << ", surrogate argmin " << m.x.transpose()
                         << " where g is " << g(m.x[0], m.x[1]));
    CHECK(std::abs(m.x[0] - ba) <= 3.0);
    CHECK(std::abs(m.x[1] - bb) <= 3.0);
}

TEST_CASE("calibration: reference tracks the exact model within 15%")
{
    const ReactorParams p = ReactorParams::defaults();
    const ReferenceModel& ref = default_reference();
    double worst = 0.0;
    for (double a : evenly_spaced(303.0, 423.0, 5))
        for (double b : evenly_spaced(303.0, 423.0, 5)) {
            const double f = performance(p, a, b).f;
            worst = std::max(worst, std::abs(reference_performance(p, ref, a, b).f - f) / std::abs(f));
        }
    MESSAGE("largest relative |g - f| on 5 x 5 grid: " << worst);
    CHECK(worst <= 0.15);
}

TEST_CASE("calibration: reference is 100x cheaper than the exact model")
{
    const ReactorParams p = ReactorParams::defaults();
    const ReferenceModel& ref = default_reference();
    using clock = std::chrono::steady_clock;
    volatile double sink = 0.0;
    const int n = 3000;
    const auto t0 = clock::now();
    for (int i = 0; i < n; ++i) sink = sink + performance(p, 303.0 + i % 121, 303.0 + (7 * i) % 121).f;
    const auto t1 = clock::now();
    for (int i = 0; i < n; ++i) sink = sink + reference_performance(p, ref, 303.0 + i % 121, 303.0 + (7 * i) % 121).f;
    const auto t2 = clock::now();
    const double ratio = std::chrono::duration<double>(t1 - t0).count() / std::chrono::duration<double>(t2 - t1).count();
    MESSAGE("f / g time ratio " << ratio);
    CHECK(ratio >= 100.0);
}
