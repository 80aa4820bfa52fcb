#pragma once

#include <cstddef>
#include <functional>

#include "fedfw/core.hpp"
#include "fedfw/problem.hpp"

namespace fedfw {

/// Step size, penalty and estimator weight used in one round.
struct ScheduleValues {
    double eta = 1.0;
    double lambda = 0.0;
    double rho = 1.0;
};

/// Measurements taken on the state that leaves round t, i.e. on X^{t+1},
/// with the penalty lambda_t of that round.
struct RoundMetrics {
    long t = 0;
    double objective = 0.0;        // F(x_bar)
    double fw_gap = 0.0;           // gap(x_bar) w.r.t. D
    double surrogate_gap = 0.0;    // max_U <grad F_t(X), X - U> over the client sets
    double consensus_dist = 0.0;   // dist(X, C)
    double surrogate_value = 0.0;  // F_t(X)
    ScheduleValues values;
    std::size_t active_count = 0;
    double xbar_residual = 0.0;    // infeasibility of x_bar w.r.t. D
    double recursion_slack = 0.0;  // |recursion x_bar - exact mean|_inf, p = 1 only
};

/// <grad F(x), x - lmo(grad F(x))>. Throws if x is not in `set` (tol 1e-9).
double fw_gap(const Problem &problem, const FeasibleSet &set, const Vec &x);
/// Same quantity without the membership check.
double fw_gap_unchecked(const Problem &problem, const FeasibleSet &set, const Vec &x);

/// The per-client penalized gradients g_i = (1/n) grad f_i(x_i) + lambda (x_i - mean).
std::vector<Vec> surrogate_gradients(const FederationState &state, const Problem &problem, double lambda);

/// sum_i <g_i, x_i - lmo_i(g_i)>, each client using its own set.
double surrogate_gap(const FederationState &state, const Problem &problem, double lambda);

/// (1/n) sum_i f_i(x_i) + (lambda/2) dist^2(X, C).
double surrogate_value(const FederationState &state, const Problem &problem, double lambda);

RoundMetrics evaluate_round(const FederationState &state, const Problem &problem, long t,
                            const ScheduleValues &values, std::size_t active_count, double recursion_slack);

// ---------------------------------------------------------------------------
// Reference solutions

using GradientFn = std::function<Vec(const Vec &)>;
using ValueFn = std::function<double(const Vec &)>;

/// Centralized Frank-Wolfe with the short step min(1, gap / (L ||s - x||^2)).
/// Returns the best iterate by value.
Vec centralized_frank_wolfe(const ValueFn &value, const GradientFn &gradient, double smoothness,
                            const FeasibleSet &set, Vec x0, std::size_t iterations);

struct ReferenceSolution {
    Vec x;
    double value = 0.0;
    bool exact = false;  // closed form (quadratics with positive weights)
};

/// x* for problems where it has a closed form, otherwise a long centralized FW run.
ReferenceSolution reference_optimum(const Problem &problem, std::size_t iterations);

// ---------------------------------------------------------------------------
// Bound evaluators

struct BoundConstants {
    double L = 0.0;
    double n = 1.0;
    double D = 0.0;
    double lambda0 = 0.0;
    double G = 0.0;
    double E_init = 0.0;
    double sigma = 0.0;
};

/// 2 n D^2 ((L/n)/(t+1) + lambda0/sqrt(t+1)); bounds F_t(X^{t+1}) - F(x*) under the ConvexT1 schedule.
double theorem1_surrogate_bound(const BoundConstants &c, double t);

/// (E + n D^2 lambda0 / 2) / T^{1/3} + (L D^2 / 2) / T^{2/3}; bounds the mean surrogate gap
/// over T rounds of the NonconvexT2 schedule.
double theorem2_gap_bound(const BoundConstants &c, double T);

/// (2 / (lambda0 sqrt(t+1))) (||Y*|| + D sqrt(lambda0 (L + n lambda0))).
double consensus_bound(const BoundConstants &c, double t, double dual_norm);

/// L D + n ||grad F(x_hat)||, with x_hat a (near-)optimal constrained point.
double gradient_bound_G(const Problem &problem, const Vec &x_hat);
double gradient_bound_G(const Problem &problem, std::size_t fw_iterations);

/// (1/n) sum_i f_i(x1) - (1/n) sum_i min_D f_i, with each minimum replaced by a
/// certified lower bound taken at multi-start centralized FW end points (FW gap,
/// plus L D^2 / 2 for non-convex clients). The estimate can only overshoot.
double estimate_initial_gap(const Problem &problem, const Vec &x1, std::size_t iterations);

/// SHCGM constants for the stochastic variant.
struct ShcgmConstants {
    double C = 0.0;
    double Q = 0.0;
};

/// Q = max{ ||grad F_hat(X^1) - D^1||_F^2 7^{2/3}, 16 n sigma^2 + 81 L^2 D^2 / n },
/// C = (81/2) n D^2 (L/n + lambda0) + 9 D sqrt(Q).
ShcgmConstants shcgm_constants(const BoundConstants &c, const FederationState &initial, const Problem &problem);

/// 9^{1/3} C / (t + 7)^{1/3}.
double stochastic_objective_bound(const ShcgmConstants &k, double t);

}  // namespace fedfw
