#pragma once

#include "parbo/algorithms.hpp"
#include "parbo/core.hpp"
#include "parbo/gp.hpp"

#include <array>
#include <vector>

namespace parbo::reactor {

/// Species order: A, P, U, B, E, D.
enum Species { A = 0, P, U, B, E, D };
constexpr int n_species = 6;
constexpr int n_reactions = 4;
constexpr double gas_constant = 8.314;

using Conc = Eigen::Matrix<double, n_species, 1>;
using Rates = Eigen::Matrix<double, n_reactions, 1>;
using Jacobian = Eigen::Matrix<double, n_species, n_species>;

/// Stoichiometry, rows = species, columns = reactions
/// 2A <-> P, P <-> 2U, U + B <-> E, U + D -> 2A.
const Eigen::Matrix<double, n_species, n_reactions>& stoichiometry();

/// How the cost splits into two subsystem values.
enum class SplitMode {
    /// f1 = product streams + reagents, f2 = utilities.
    economic,
    /// f1 = reactor-1 reagents + reactor-1 coolant + value of the reactor-1
    /// outlet at transfer prices; f2 = f - f1.
    per_reactor,
};

struct ReactorParams {
    std::array<double, n_reactions> k0{};
    std::array<double, n_reactions> activation_energy{};  // J/mol
    std::array<double, n_reactions> heat_of_reaction{};   // J/mol
    double reverse_factor = 0.01;

    double F1 = 0.1;   // L/s, reactor-1 feed
    double FB = 0.02;  // L/s, B feed into reactor 2
    double V1 = 10.0;  // L
    double V2 = 12.0;
    double CA0 = 2.0;  // mol/L
    double CD0 = 0.2;
    double CB0 = 4.0;
    double Tin1 = 430.0;  // K
    double Tin2 = 430.0;

    double rho = 1.0;     // kg/L
    double Cp = 4000.0;   // J/(kg K)
    double Cpc = 4180.0;  // coolant
    double Toc = 320.0;
    double Tic = 290.0;

    std::array<double, n_species> alpha{1.2, 0.3, 1.5, 1.0, 5.0, 1.0};
    double KP = 1.0;
    std::array<double, n_species> latent{3e4, 3e4, 3e4, 3e4, 3e4, 3e4};  // J/mol
    double latent_water = 2.26e6;                                       // J/kg

    std::array<double, n_species> price{};  // USD/mol
    double price_coolant = 0.0;             // USD/kg
    double price_steam = 0.0;               // USD/kg
    /// Internal valuation of the reactor-1 outlet for the per-reactor split.
    std::array<double, n_species> transfer_price{};
    double hours_per_year = 8000.0;
    SplitMode split = SplitMode::per_reactor;

    double F2() const { return F1 + FB; }
    void validate() const;
    /// The calibrated case-study configuration shipped with the library.
    static ReactorParams defaults();
};

double arrhenius(double k0, double activation_energy, double T);

/// Forward rate constants at T.
Rates rate_constants(const ReactorParams& p, double T);

/// Elementary rates with k_r = reverse_factor * k for reactions 1-3.
Rates reaction_rates(const Conc& C, const Rates& k, double reverse_factor);

/// Steady-state CSTR residual Cin - C + tau * N r(C).
Conc cstr_residual(const Conc& C, const Conc& inlet, double tau, const Rates& k, double reverse_factor);

struct CstrResult {
    Conc C = Conc::Zero();
    Rates r = Rates::Zero();
    double heat = 0.0;     // W, Q = -sum r V dH
    double coolant = 0.0;  // kg/s
    double residual = 0.0;
    int iterations = 0;
};

/// Solves one CSTR at temperature T. `reactor` is 0 or 1 and selects V, F
/// and the inlet temperature.
CstrResult solve_cstr(const ReactorParams& p, int reactor, const Conc& inlet, double T);

/// Flash equilibrium x_i = z_i / (f (K alpha_i - 1) + 1), y_i = K alpha_i x_i.
struct Equilibrium {
    Vector x;
    Vector y;
};
Equilibrium flash_equilibrium(const Vector& z, const Vector& alpha, double KP, double fraction);

enum class FlashMode { recover_E, recover_P };

struct FlashResult {
    Conc x = Conc::Zero();
    Conc y = Conc::Zero();
    double fraction = 0.0;
    double vapor = 0.0;   // mol/s
    double liquid = 0.0;  // mol/s
    double steam = 0.0;   // kg/s
};

FlashResult flash(const ReactorParams& p, const Conc& z, double molar_flow, FlashMode which);

struct SteadyState {
    CstrResult reactor1;
    CstrResult reactor2;
    Conc inlet2 = Conc::Zero();
    FlashResult flash1;
    FlashResult flash2;
};

struct Performance {
    double f = 0.0;
    double f1 = 0.0;
    double f2 = 0.0;
};

/// Economics of given reactor states (annualized USD/yr).
Performance economics(const ReactorParams& p, const SteadyState& s);

SteadyState steady_state(const ReactorParams& p, double T1, double T2);
Performance performance(const ReactorParams& p, double T1, double T2);

/// log r = t0 u + t1 u^2 + t2 u^3 + t3 with u = (1/T - center) / half_width.
/// The basis is the cubic in 1/T, centered and scaled for conditioning.
struct LogCubic {
    std::array<double, 4> theta{};
    double center = 0.5 * (1.0 / 303.0 + 1.0 / 423.0);
    double half_width = 0.5 * (1.0 / 303.0 - 1.0 / 423.0);
    /// False when the reaction never runs in this reactor (r identically 0).
    bool active = true;
    double r_squared = 1.0;

    double operator()(double T) const;
    double log_rate(double T) const;
};

/// Least-squares fit of log r against the cubic basis. Nonpositive samples are
/// dropped with a warning. All samples exactly zero gives an inactive fit;
/// fewer than four positive samples otherwise throws NumericalError.
LogCubic fit_log_cubic(const std::vector<double>& T, const std::vector<double>& r);

struct ReferenceModel {
    std::array<LogCubic, n_reactions> reactor1;
    std::array<LogCubic, n_reactions> reactor2;
    double min_r_squared() const;
};

/// Net rates are recorded from the exact model with both reactors at the same
/// temperature T for every sample, then fitted per reaction and reactor.
ReferenceModel reference_fit(const ReactorParams& p, const std::vector<double>& temperatures);

/// Closed-form reference: concentrations from the balances with the fitted
/// rates (negative values clamped to zero), then the exact flash and cost chain.
Performance reference_performance(const ReactorParams& p, const ReferenceModel& ref, double T1, double T2);

/// Which quantity of a Performance to model.
enum class Component { total, first, second };

/// GP fitted to the reference on a full factorial grid over [303, 423]^2.
GpModel fit_reference_gp(const ReactorParams& p, const ReferenceModel& ref, int grid_resolution,
                         Rng& rng, Component component = Component::total);

/// Case-study temperature domain.
BoxDomain temperature_domain();

struct CaseStudyOptions {
    /// Temperatures for the rate fits, evenly spaced over [303, 423].
    int fit_temperatures = 25;
    /// Grid points per dimension for the reference surrogates.
    int grid_resolution = 15;
    double seconds_per_evaluation = 10.0;
    std::uint64_t reference_seed = 0;
};

/// The reactor benchmark as an optimization problem: f with (f1, f2) as
/// subsystem values, the GP surrogate of the reference as g and as the
/// level-set model, and surrogates of g's two parts as subsystem references.
struct CaseStudy {
    ReactorParams params;
    ReferenceModel reference;
    std::shared_ptr<const GpModel> g_hat;
    std::shared_ptr<const GpModel> g1_hat;
    std::shared_ptr<const GpModel> g2_hat;
    Problem problem;
};

CaseStudy make_case_study(const ReactorParams& params, const CaseStudyOptions& options = {});

std::vector<double> evenly_spaced(double lo, double hi, int count);

}  // namespace parbo::reactor
