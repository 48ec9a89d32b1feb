#include "parbo/afopt.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace parbo {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// Projected gradient in the unit cube: components pushing outward at an
// active bound are zeroed.
Vector projected_gradient(const Vector& u, const Vector& g)
{
    Vector pg = g;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        if (u[i] <= 0.0 && g[i] > 0.0) pg[i] = 0.0;
        if (u[i] >= 1.0 && g[i] < 0.0) pg[i] = 0.0;
    }
    return pg;
}

Vector clamp_unit(const Vector& u)
{
    return u.cwiseMax(0.0).cwiseMin(1.0);
}

struct Pair {
    Vector s, y;
};

// Two-loop recursion restricted to the free coordinates (mask = 1).
Vector lbfgs_direction(const Vector& g, const std::deque<Pair>& mem, const Vector& mask)
{
    Vector q = g.cwiseProduct(mask);
    const int m = static_cast<int>(mem.size());
    std::vector<double> a(m), rho(m);
    for (int i = m - 1; i >= 0; --i) {
        const Vector s = mem[i].s.cwiseProduct(mask);
        const Vector y = mem[i].y.cwiseProduct(mask);
        const double sy = s.dot(y);
        rho[i] = sy > 0.0 ? 1.0 / sy : 0.0;
        a[i] = rho[i] * s.dot(q);
        q -= a[i] * y;
    }
    if (m > 0) {
        const Vector s = mem.back().s.cwiseProduct(mask);
        const Vector y = mem.back().y.cwiseProduct(mask);
        const double yy = y.squaredNorm();
        if (yy > 0.0 && s.dot(y) > 0.0) q *= s.dot(y) / yy;
    }
    for (int i = 0; i < m; ++i) {
        const Vector s = mem[i].s.cwiseProduct(mask);
        const Vector y = mem[i].y.cwiseProduct(mask);
        const double b = rho[i] * y.dot(q);
        q += (a[i] - b) * s;
    }
    return -q.cwiseProduct(mask);
}

}  // namespace

GradientObjective finite_difference(const Objective& f, const BoxDomain& box, double step)
{
    return [f, box, step](const Vector& x, Vector* grad) {
        const double fx = f(x);
        if (grad) {
            grad->resize(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                const double h = step * (box.upper[i] - box.lower[i]);
                Vector xp = x, xm = x;
                xp[i] = std::min(x[i] + h, box.upper[i]);
                xm[i] = std::max(x[i] - h, box.lower[i]);
                const double fp = xp[i] == x[i] ? fx : f(xp);
                const double fm = xm[i] == x[i] ? fx : f(xm);
                const double dx = xp[i] - xm[i];
                (*grad)[i] = dx > 0.0 ? (fp - fm) / dx : 0.0;
            }
        }
        return fx;
    };
}

Minimum local_minimize(const GradientObjective& f, const BoxDomain& box, const Vector& x0,
                       const LocalOptions& options)
{
    const Eigen::Index d = box.dim();
    const Vector w = box.width();
    Vector u = clamp_unit(box.to_unit(box.clamp(x0)));

    // Objective in unit coordinates; gradient chain rule through the affine map.
    auto eval = [&](const Vector& uu, Vector* gu) {
        Vector gx;
        const double v = f(box.from_unit(uu), gu ? &gx : nullptr);
        if (gu) *gu = gx.cwiseProduct(w);
        return v;
    };

    Vector g;
    double fu = eval(u, &g);
    Minimum best{box.from_unit(u), fu};
    if (!std::isfinite(fu) || !g.allFinite()) return best;

    std::deque<Pair> mem;
    for (int it = 0; it < options.max_iterations; ++it) {
        const Vector pg = projected_gradient(u, g);
        if (pg.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) break;

        Vector mask = Vector::Ones(d);
        for (Eigen::Index i = 0; i < d; ++i)
            if (pg[i] == 0.0) mask[i] = 0.0;

        Vector dir = lbfgs_direction(g, mem, mask);
        bool steepest = mem.empty();
        if (!(dir.dot(g) < 0.0) || !dir.allFinite()) {
            dir = -pg;
            steepest = true;
            mem.clear();
        }

        bool accepted = false;
        Vector u_new, g_new;
        double f_new = fu;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double t = 1.0;
            if (steepest) {
                const double n = dir.lpNorm<Eigen::Infinity>();
                if (n > 0.0) t = std::min(1.0, 0.1 / n);
            }
            for (int bt = 0; bt < 40; ++bt) {
                u_new = clamp_unit(u + t * dir);
                const Vector step = u_new - u;
                if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
                f_new = eval(u_new, nullptr);
                if (std::isfinite(f_new) && f_new <= fu + 1e-4 * g.dot(step)) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) {
                if (steepest) break;
                dir = -pg;
                steepest = true;
                mem.clear();
            }
        }
        if (!accepted) break;

        eval(u_new, &g_new);
        if (!g_new.allFinite()) {
            best = f_new < best.value ? Minimum{box.from_unit(u_new), f_new} : best;
            break;
        }
        const Vector s = u_new - u;
        const Vector y = g_new - g;
        if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
            mem.push_back({s, y});
            if (static_cast<int>(mem.size()) > options.memory) mem.pop_front();
        }
        const double decrease = fu - f_new;
        u = u_new;
        g = g_new;
        fu = f_new;
        if (fu < best.value) best = {box.from_unit(u), fu};
        if (decrease <= options.relative_tolerance * std::max(1.0, std::abs(fu))) break;
    }
    return best;
}

Minimum minimize_box_from(const GradientObjective& f, const BoxDomain& domain,
                          const std::vector<Vector>& starts, const LocalOptions& options)
{
    Minimum best{Vector(), inf};
    bool any = false;
    for (const Vector& x0 : starts) {
        const double v0 = f(x0, nullptr);
        if (!std::isfinite(v0)) continue;
        Minimum m = local_minimize(f, domain, x0, options);
        if (!any || m.value < best.value) best = std::move(m);
        any = true;
    }
    if (!any) throw OptimizationError("objective is non-finite at every starting point");
    return best;
}

Minimum minimize_box(const Objective& af, const BoxDomain& domain, int starts, Rng& rng,
                     const LocalOptions& options)
{
    if (starts < 1) throw InvalidArgument("minimize_box: starts must be >= 1");
    const std::vector<Vector> x0 = latin_hypercube(domain, starts, rng);
    return minimize_box_from(finite_difference(af, domain, options.fd_step), domain, x0, options);
}

double LevelSetRegion::tolerance() const
{
    if (std::isfinite(alpha_lo) && std::isfinite(alpha_hi) && alpha_hi > alpha_lo)
        return 1e-6 * (alpha_hi - alpha_lo);
    // Half-open or degenerate band: scale by the surrogate's output spread.
    return 1e-6 * (surrogate ? surrogate->scaling().y_scale : 1.0);
}

double LevelSetRegion::violation(double v) const
{
    if (v < alpha_lo) return alpha_lo - v;
    if (v > alpha_hi) return v - alpha_hi;
    return 0.0;
}

namespace {

// The exact penalty leaves the descent parked on the kink at the band edge.
// A few rounds of a smooth (PHR) augmented Lagrangian let it slide along the
// edge; the result is kept only if it is feasible and better.
Minimum polish_on_band(const Objective& af, const BoxDomain& domain, const LevelSetRegion& region,
                       const Minimum& start, double af_scale, double g_scale, const LocalOptions& options)
{
    const double tol = region.tolerance();
    const bool has_lo = std::isfinite(region.alpha_lo), has_hi = std::isfinite(region.alpha_hi);
    double lam_lo = 0.0, lam_hi = 0.0, mu = 10.0;
    Vector x = start.x;
    for (int round = 0; round < 8; ++round) {
        const Objective lagr = [&](const Vector& xx) {
            const double g = region.value(xx);
            double v = af(xx) / af_scale;
            if (has_hi) {
                const double t = std::max(0.0, lam_hi + mu * (g - region.alpha_hi) / g_scale);
                v += (t * t - lam_hi * lam_hi) / (2.0 * mu);
            }
            if (has_lo) {
                const double t = std::max(0.0, lam_lo + mu * (region.alpha_lo - g) / g_scale);
                v += (t * t - lam_lo * lam_lo) / (2.0 * mu);
            }
            return v;
        };
        x = local_minimize(finite_difference(lagr, domain, options.fd_step), domain, x, options).x;
        const double g = region.value(x);
        if (has_hi) lam_hi = std::max(0.0, lam_hi + mu * (g - region.alpha_hi) / g_scale);
        if (has_lo) lam_lo = std::max(0.0, lam_lo + mu * (region.alpha_lo - g) / g_scale);
        if (region.violation(g) > tol) mu = std::min(mu * 10.0, 1e12);
    }
    if (region.violation(region.value(x)) > tol) {
        double lo = 0.0, hi = 1.0;
        for (int b = 0; b < 60; ++b) {
            const double mid = 0.5 * (lo + hi);
            (region.violation(region.value(start.x + mid * (x - start.x))) <= tol ? lo : hi) = mid;
        }
        x = start.x + lo * (x - start.x);
    }
    const double v = af(x);
    if (std::isfinite(v) && v < start.value && region.violation(region.value(x)) <= tol) return {x, v};
    return start;
}

}  // namespace

Minimum minimize_levelset(const Objective& af, const BoxDomain& domain,
                          const LevelSetRegion& region, int starts, Rng& rng,
                          const LocalOptions& options, const LevelSetOptions& ls_options)
{
    if (region.alpha_lo > region.alpha_hi) throw InvalidArgument("level-set band has alpha_lo > alpha_hi");
    if (region.vacuous()) return minimize_box(af, domain, starts, rng, options);
    if (!region.surrogate) throw InvalidArgument("level-set region has no surrogate");
    if (starts < 1) throw InvalidArgument("minimize_levelset: starts must be >= 1");

    const double tol = region.tolerance();
    const std::vector<Vector> probes = latin_hypercube(domain, ls_options.probe_count, rng);
    struct Candidate {
        double af;
        int index;
    };
    std::vector<Candidate> feasible;
    for (int i = 0; i < static_cast<int>(probes.size()); ++i) {
        if (region.violation(region.value(probes[i])) > tol) continue;
        const double v = af(probes[i]);
        if (std::isfinite(v)) feasible.push_back({v, i});
    }
    if (feasible.empty())
        throw EmptyRegionError("no feasible probe among " + std::to_string(probes.size()) +
                               " for band [" + std::to_string(region.alpha_lo) + ", " +
                               std::to_string(region.alpha_hi) + "]");
    std::stable_sort(feasible.begin(), feasible.end(),
                     [](const Candidate& a, const Candidate& b) { return a.af < b.af; });
    const int n_starts = std::min<int>(starts, static_cast<int>(feasible.size()));

    // Penalty is measured against the spread of af over the feasible probes
    // and the surrogate's output scale, so rho is dimensionless.
    double af_scale = 0.0;
    {
        double lo = feasible.front().af, hi = feasible.back().af;
        af_scale = std::max(hi - lo, 1e-12 * std::max(1.0, std::abs(lo)));
    }
    const double g_scale = region.surrogate->scaling().y_scale;

    Minimum best{Vector(), inf};
    for (int s = 0; s < n_starts; ++s) {
        const Vector& start = probes[feasible[s].index];
        Vector x = start;
        Minimum m{start, feasible[s].af};
        for (double rho = ls_options.initial_penalty; rho <= ls_options.max_penalty; rho *= 10.0) {
            const Objective penalized = [&, rho](const Vector& xx) {
                return af(xx) / af_scale + rho * region.violation(region.value(xx)) / g_scale;
            };
            const Minimum pm = local_minimize(finite_difference(penalized, domain, options.fd_step),
                                              domain, x, options);
            x = pm.x;
            if (region.violation(region.value(x)) <= tol) break;
        }
        if (region.violation(region.value(x)) > tol) {
            // Bisection on the segment from the feasible start toward x.
            double lo = 0.0, hi = 1.0;
            for (int b = 0; b < 60; ++b) {
                const double mid = 0.5 * (lo + hi);
                if (region.violation(region.value(start + mid * (x - start))) <= tol)
                    lo = mid;
                else
                    hi = mid;
            }
            x = start + lo * (x - start);
        }
        const double v = af(x);
        m = v <= m.value ? Minimum{x, v} : m;
        m = polish_on_band(af, domain, region, m, af_scale, g_scale, options);
        if (m.value < best.value || best.x.size() == 0) best = m;
    }
    return best;
}

std::vector<int> complement_indices(const std::vector<int>& free, int dim)
{
    std::vector<bool> used(dim, false);
    for (int i : free) {
        if (i < 0 || i >= dim) throw InvalidArgument("variable index out of range");
        if (used[i]) throw InvalidArgument("duplicate variable index");
        used[i] = true;
    }
    std::vector<int> out;
    for (int i = 0; i < dim; ++i)
        if (!used[i]) out.push_back(i);
    return out;
}

Vector embed(const std::vector<int>& free, const Vector& free_values, const std::vector<int>& fixed,
             const Vector& fixed_values)
{
    Vector x(free.size() + fixed.size());
    for (std::size_t i = 0; i < free.size(); ++i) x[free[i]] = free_values[i];
    for (std::size_t i = 0; i < fixed.size(); ++i) x[fixed[i]] = fixed_values[i];
    return x;
}

Minimum minimize_subspace(const Objective& af, const BoxDomain& domain, const std::vector<int>& free,
                          const Vector& fixed_values, int starts, Rng& rng,
                          const LocalOptions& options)
{
    if (free.empty()) throw InvalidArgument("minimize_subspace: free set is empty");
    const int d = domain.dim();
    const std::vector<int> fixed = complement_indices(free, d);
    if (fixed_values.size() != static_cast<Eigen::Index>(fixed.size()))
        throw InvalidArgument("minimize_subspace: fixed_values has wrong length");
    for (std::size_t i = 0; i < fixed.size(); ++i)
        if (fixed_values[i] < domain.lower[fixed[i]] || fixed_values[i] > domain.upper[fixed[i]])
            throw InvalidArgument("minimize_subspace: fixed value outside the domain");

    bool identity = fixed.empty();
    for (std::size_t i = 0; identity && i < free.size(); ++i) identity = free[i] == static_cast<int>(i);
    if (identity) return minimize_box(af, domain, starts, rng, options);

    Vector lo(free.size()), hi(free.size());
    for (std::size_t i = 0; i < free.size(); ++i) {
        lo[i] = domain.lower[free[i]];
        hi[i] = domain.upper[free[i]];
    }
    const BoxDomain sub(lo, hi);
    const Objective restricted = [&](const Vector& z) { return af(embed(free, z, fixed, fixed_values)); };
    return minimize_box(restricted, sub, starts, rng, options);
}

}  // namespace parbo
