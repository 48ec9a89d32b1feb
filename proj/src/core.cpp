#include "parbo/core.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>

namespace parbo {

namespace {
std::mutex warn_mutex;
WarningSink& warning_sink()
{
    static WarningSink sink = [](const std::string& m) { std::cerr << "parbo: warning: " << m << '\n'; };
    return sink;
}
}  // namespace

void set_warning_sink(WarningSink sink)
{
    std::lock_guard lock(warn_mutex);
    warning_sink() = sink ? std::move(sink) : [](const std::string&) {};
}

void warn(const std::string& message)
{
    std::lock_guard lock(warn_mutex);
    warning_sink()(message);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
    return mix_seed(mix_seed(a, b), c);
}

double Rng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open()
{
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::normal()
{
    // Box-Muller without caching the second variate.
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::exponential(double rate)
{
    if (!(rate > 0.0)) throw InvalidArgument("exponential rate must be positive");
    return -std::log(uniform_open()) / rate;
}

BoxDomain::BoxDomain(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi))
{
    validate();
}

BoxDomain BoxDomain::unit(int dim)
{
    return BoxDomain(Vector::Zero(dim), Vector::Ones(dim));
}

void BoxDomain::validate() const
{
    if (lower.size() != upper.size() || lower.size() == 0)
        throw InvalidArgument("box bounds must be nonempty and of equal length");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
        if (!(lower[i] < upper[i]))
            throw InvalidArgument("box lower bound must be < upper bound in dimension " +
                                  std::to_string(i));
}

bool BoxDomain::contains(const Vector& x, double tol) const
{
    if (x.size() != lower.size()) return false;
    return ((x.array() >= lower.array() - tol) && (x.array() <= upper.array() + tol)).all();
}

Vector BoxDomain::clamp(const Vector& x) const
{
    return x.cwiseMax(lower).cwiseMin(upper);
}

Vector BoxDomain::to_unit(const Vector& x) const
{
    return ((x - lower).array() / (upper - lower).array()).matrix();
}

Vector BoxDomain::from_unit(const Vector& u) const
{
    return lower + (u.array() * (upper - lower).array()).matrix();
}

bool operator==(const BoxDomain& a, const BoxDomain& b)
{
    return a.lower == b.lower && a.upper == b.upper;
}

Matrix Dataset::point_matrix() const
{
    if (points.empty()) return Matrix(0, 0);
    Matrix X(size(), points.front().size());
    for (int i = 0; i < size(); ++i) X.row(i) = points[i].transpose();
    return X;
}

Vector Dataset::value_vector() const
{
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<Vector> latin_hypercube(const BoxDomain& domain, int count, Rng& rng)
{
    const int d = domain.dim();
    std::vector<Vector> out(count, Vector(d));
    std::vector<int> perm(count);
    for (int j = 0; j < d; ++j) {
        std::iota(perm.begin(), perm.end(), 0);
        // Fisher-Yates with our own uniform() for cross-platform stability.
        for (int i = count - 1; i > 0; --i) {
            const int k = static_cast<int>(rng.uniform() * (i + 1));
            std::swap(perm[i], perm[std::min(k, i)]);
        }
        for (int i = 0; i < count; ++i) {
            const double u = (perm[i] + rng.uniform()) / count;
            out[i][j] = domain.lower[j] + u * (domain.upper[j] - domain.lower[j]);
        }
    }
    return out;
}

double min_pairwise_distance(const std::vector<Vector>& points)
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            best = std::min(best, (points[i] - points[j]).norm());
    return best;
}

}  // namespace parbo
