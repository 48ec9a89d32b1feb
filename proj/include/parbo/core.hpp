#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace parbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error hierarchy. Callers that only care about "something failed" catch
// parbo::Error; the subclasses let drivers react to specific conditions.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidArgument : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct OptimizationError : Error {
    using Error::Error;
};

/// Non-fatal diagnostics (dropped samples, skipped regions, tie-breaks).
/// Default sink writes to stderr; tests and the CLI may replace or silence it.
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

/// Seeded generator with distribution code owned here so that sequences are
/// identical across standard-library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform on (0, 1], safe for log().
    double uniform_open();
    double normal();
    double exponential(double rate);
    /// Independent stream derived from this generator's seed and a label.
    /// Does not advance this generator.
    Rng fork(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }
    std::uint64_t seed() const { return seed_; }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

/// Axis-aligned design box X = [lower, upper].
struct BoxDomain {
    Vector lower;
    Vector upper;

    BoxDomain() = default;
    BoxDomain(Vector lo, Vector hi);
    static BoxDomain unit(int dim);

    int dim() const { return static_cast<int>(lower.size()); }
    Vector width() const { return upper - lower; }
    bool contains(const Vector& x, double tol = 0.0) const;
    Vector clamp(const Vector& x) const;
    Vector to_unit(const Vector& x) const;
    Vector from_unit(const Vector& u) const;
    void validate() const;
};

bool operator==(const BoxDomain& a, const BoxDomain& b);

/// Ordered (point, value) pairs. Values may be raw observations or residuals.
struct Dataset {
    std::vector<Vector> points;
    std::vector<double> values;

    int size() const { return static_cast<int>(points.size()); }
    bool empty() const { return points.empty(); }
    void add(const Vector& x, double y)
    {
        points.push_back(x);
        values.push_back(y);
    }
    Matrix point_matrix() const;
    Vector value_vector() const;
};

/// Latin hypercube sample of `count` points in `domain`.
std::vector<Vector> latin_hypercube(const BoxDomain& domain, int count, Rng& rng);

double min_pairwise_distance(const std::vector<Vector>& points);

}  // namespace parbo
