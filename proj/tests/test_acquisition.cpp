#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "parbo/acquisition.hpp"

#include <numeric>

using namespace parbo;

namespace {

GpModel model_1d(const std::vector<double>& xs, const std::vector<double>& ys, double ls = 0.3)
{
    Dataset D;
    for (std::size_t i = 0; i < xs.size(); ++i) D.add(Vector::Constant(1, xs[i]), ys[i]);
    return GpModel::condition(D, KernelParams::isotropic(1, ls, 1.0, 1e-6), BoxDomain::unit(1));
}

Vector pt(double a) { return Vector::Constant(1, a); }

// Joint posterior of the latent function in user units, by dense inversion.
void dense_joint(const GpModel& m, const std::vector<Vector>& xs, Vector& mean, Matrix& cov)
{
    const KernelParams& p = m.params();
    const Matrix& X = m.inputs();
    const int n = static_cast<int>(X.rows());
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = m.scaling().y_to_internal(m.train().values[i]);
    Matrix K = oracle::gram(X, p.signal_variance, p.length_scales);
    K.diagonal().array() += p.noise_variance + m.jitter();
    const Matrix Kinv = K.inverse();
    const int q = static_cast<int>(xs.size());
    Matrix Ks(n, q), Kss(q, q);
    for (int j = 0; j < q; ++j) {
        const Vector u = m.scaling().domain.to_unit(xs[j]);
        for (int i = 0; i < n; ++i) Ks(i, j) = oracle::matern(X.row(i), u, p.signal_variance, p.length_scales);
        for (int k = 0; k < q; ++k)
            Kss(j, k) = oracle::matern(u, m.scaling().domain.to_unit(xs[k]), p.signal_variance, p.length_scales);
    }
    const double s = m.scaling().y_scale;
    mean = (Ks.transpose() * Kinv * y).array() * s + m.scaling().y_mean;
    cov = (Kss - Ks.transpose() * Kinv * Ks) * s * s;
}

}  // namespace

TEST_CASE("lcb arithmetic")
{
    const GpModel m = model_1d({0.1, 0.5, 0.9}, {1.0, -0.5, 0.3});
    AcqSpec spec;
    spec.kappa = 0.0;
    for (double x : {0.0, 0.3, 0.77}) CHECK(lcb(m, pt(x), spec) == m.posterior(pt(x)).mean);

    // mu = 2, sigma = 0.5, kappa = 2 through an empty model with prior variance 0.25
    Dataset none;
    Standardization s;
    s.domain = BoxDomain::unit(1);
    s.y_mean = 2.0;
    const GpModel prior = GpModel::condition(none, KernelParams::isotropic(1, 0.3, 0.25), s);
    spec.kappa = 2.0;
    CHECK(lcb(prior, pt(0.4), spec) == doctest::Approx(1.0).epsilon(1e-15));

    AcqSpec bad;
    bad.mode = AcqMode::with_reference;
    CHECK_THROWS_AS(lcb(m, pt(0.2), bad), ConfigError);
    bad.mode = AcqMode::plain;
    bad.kappa = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("lcb decreases in kappa where sigma > 0")
{
    const GpModel m = model_1d({0.1, 0.5, 0.9}, {1.0, -0.5, 0.3});
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        const Vector x = pt(rng.uniform());
        AcqSpec a, b;
        a.kappa = rng.uniform() * 3.0;
        b.kappa = a.kappa + 0.1 + rng.uniform();
        if (m.posterior(x).stddev > 0.0) CHECK(lcb(m, x, b) < lcb(m, x, a));
    }
}

TEST_CASE("reference lcb is g plus the residual lcb")
{
    auto f = [](double x) { return std::sin(6.0 * x) + x; };
    auto g = [](double x) { return 0.8 * std::sin(6.0 * x); };
    std::vector<double> xs{0.05, 0.3, 0.45, 0.7, 0.95}, res;
    for (double x : xs) res.push_back(f(x) - g(x));
    const GpModel eps = model_1d(xs, res);
    AcqSpec ref;
    ref.mode = AcqMode::with_reference;
    ref.kappa = 1.7;
    ref.reference = [&](const Vector& x) { return g(x[0]); };
    AcqSpec plain;
    plain.kappa = 1.7;
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        const Vector x = pt(rng.uniform());
        CHECK(std::abs(lcb(eps, x, ref) - (g(x[0]) + lcb(eps, x, plain))) <= 1e-12);
    }

    // g == 0 collapses to the plain form.
    AcqSpec zero = ref;
    zero.reference = [](const Vector&) { return 0.0; };
    for (int t = 0; t < 20; ++t) {
        const Vector x = pt(rng.uniform());
        CHECK(std::abs(lcb(eps, x, zero) - lcb(eps, x, plain)) <= 1e-12);
    }
}

TEST_CASE("kappa sampling")
{
    Rng rng(0);
    const std::vector<double> k = sample_kappas(1000000, 1.0, rng);
    CHECK(std::all_of(k.begin(), k.end(), [](double v) { return v >= 0.0; }));
    const double mean = std::accumulate(k.begin(), k.end(), 0.0) / k.size();
    CHECK(std::abs(mean - 1.0) < 0.01);

    // Golden sequence recorded when the generator was first implemented.
    Rng g(2024);
    const std::vector<double> seq = sample_kappas(5, 1.0, g);
    const double golden[] = {0.48990508355507068, 0.22977037739505346, 1.3255487477092367, 1.0957249182614308, 5.0841256707296472};
    for (int i = 0; i < 5; ++i) CHECK(seq[i] == golden[i]);
    CHECK_THROWS_AS(sample_kappas(0, 1.0, g), InvalidArgument);
}

TEST_CASE("fantasy mean AF")
{
    const GpModel m = model_1d({0.1, 0.5, 0.9}, {1.0, -0.5, 0.3});
    AcqSpec spec;
    spec.kappa = 1.5;

    SUBCASE("empty pending passes through to lcb")
    {
        Rng rng(3);
        CHECK(fantasy_mean_af(m, {}, pt(0.3), 8, spec, rng) == lcb(m, pt(0.3), spec));
    }

    SUBCASE("one sample equals its single fantasy")
    {
        Rng rng(4);
        FantasyAf af(m, {pt(0.3)}, 1, spec, rng);
        CHECK(af(pt(0.7)) == lcb(af.fantasies().front(), pt(0.7), spec));
    }

    SUBCASE("zero-variance pending point gives identical fantasies")
    {
        const GpModel exact = GpModel::condition(m.train(), KernelParams::isotropic(1, 0.3, 1.0, 0.0),
                                                 BoxDomain::unit(1));
        Rng rng(5);
        FantasyAf af(exact, {pt(0.5)}, 6, spec, rng);
        for (const auto& v : af.fantasy_values()) CHECK(v[0] == doctest::Approx(af.fantasy_values()[0][0]).epsilon(1e-6));
        CHECK(af(pt(0.2)) == doctest::Approx(lcb(af.fantasies()[0], pt(0.2), spec)).epsilon(1e-6));
    }

    SUBCASE("four fantasies match dense-solve reconstruction")
    {
        Rng rng(6);
        const std::vector<Vector> pending{pt(0.3), pt(0.75)};
        FantasyAf af(m, pending, 4, spec, rng);
        REQUIRE(af.fantasy_values().size() == 4);
        const KernelParams& p = m.params();
        const Standardization& s = m.scaling();
        for (double xq : {0.05, 0.4, 0.62}) {
            double sum = 0.0;
            for (const auto& fv : af.fantasy_values()) {
                Matrix X(5, 1);
                Vector y(5);
                for (int i = 0; i < 3; ++i) {
                    X(i, 0) = m.train().points[i][0];
                    y[i] = s.y_to_internal(m.train().values[i]);
                }
                for (int i = 0; i < 2; ++i) {
                    X(3 + i, 0) = pending[i][0];
                    y[3 + i] = s.y_to_internal(fv[i]);
                }
                double mu, var;
                oracle::dense_posterior(X, y, p.signal_variance, p.length_scales, p.noise_variance, pt(xq), mu, var);
                sum += s.y_from_internal(mu) - spec.kappa * s.y_scale * std::sqrt(std::max(var, 0.0));
            }
            CHECK(af(pt(xq)) == doctest::Approx(sum / 4.0).epsilon(1e-7));
        }
    }
}

TEST_CASE("q-LCB")
{
    const GpModel m = model_1d({0.1, 0.5, 0.9}, {1.0, -0.5, 0.3});

    SUBCASE("q = 1 converges to mu - kappa sigma sqrt(2/pi)")
    {
        Rng rng(7);
        const Vector x = pt(0.3);
        const Prediction p = m.posterior(x);
        const double v = q_lcb(m, {x}, 2.0, 1000000, rng);
        const double expect = p.mean - 2.0 * p.stddev * std::sqrt(2.0 / M_PI);
        CHECK(std::abs(v - expect) <= 0.01 * p.stddev);
    }

    SUBCASE("kappa = 0 reduces to the aggregate of the means")
    {
        Rng rng(8);
        const std::vector<Vector> b{pt(0.2), pt(0.7)};
        const double mx = std::max(m.posterior(b[0]).mean, m.posterior(b[1]).mean);
        const double mn = std::min(m.posterior(b[0]).mean, m.posterior(b[1]).mean);
        CHECK(q_lcb(m, b, 0.0, 16, rng) == doctest::Approx(mx).epsilon(1e-12));
        CHECK(q_lcb(m, b, 0.0, 16, rng, true) == doctest::Approx(mn).epsilon(1e-12));
    }

    SUBCASE("q = 2 matches a straight-line recomputation")
    {
        Rng rng(9);
        const std::vector<Vector> b{pt(0.02), pt(0.98)};
        QLcb q(m, 2, 8, 1.3, rng);
        Vector mean;
        Matrix cov;
        dense_joint(m, b, mean, cov);
        const Matrix A = cov.llt().matrixL();
        double total = 0.0;
        for (int s = 0; s < 8; ++s) {
            double best = -1e300;
            for (int i = 0; i < 2; ++i) {
                double az = 0.0;
                for (int j = 0; j <= i; ++j) az += A(i, j) * q.draws()(j, s);
                best = std::max(best, mean[i] - 1.3 * std::abs(az));
            }
            total += best;
        }
        CHECK(q(b) == doctest::Approx(total / 8.0).epsilon(1e-8));
    }

    SUBCASE("points closer than epsilon are rejected")
    {
        Rng rng(10);
        QLcb q(m, 2, 4, 1.0, rng, false, 1e-3);
        CHECK_THROWS_AS(q({pt(0.4), pt(0.4 + 1e-4)}), BatchRejectedError);
        CHECK_NOTHROW(q({pt(0.4), pt(0.41)}));
    }
}

TEST_CASE("calibration: q-LCB standard error shrinks as one over root S")
{
    const GpModel m = model_1d({0.1, 0.5, 0.9}, {1.0, -0.5, 0.3});
    const std::vector<Vector> b{pt(0.25), pt(0.65)};
    auto variance = [&](int S) {
        std::vector<double> v;
        for (int r = 0; r < 50; ++r) {
            Rng rng(1000 + r);
            v.push_back(q_lcb(m, b, 2.0, S, rng));
        }
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return ss / (v.size() - 1);
    };
    // Seed base fixed before the first run; see the notes in the README
    // about the chance failure rate of this 50-replication check.
    const double ratio = variance(100) / variance(10000);
    MESSAGE("variance ratio " << ratio);
    CHECK(ratio >= 50.0);
    CHECK(ratio <= 150.0);
}
