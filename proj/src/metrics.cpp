#include "fedfw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>

namespace fedfw {

double fw_gap_unchecked(const Problem &problem, const FeasibleSet &set, const Vec &x) {
    const Vec g = problem.gradient(x);
    return g.dot(x - set.lmo(g));
}

double fw_gap(const Problem &problem, const FeasibleSet &set, const Vec &x) {
    const double r = set.residual(x);
    if (r > 1e-9) {
        throw std::invalid_argument("fw_gap: point violates " + set.describe() + " by " + std::to_string(r));
    }
    return fw_gap_unchecked(problem, set, x);
}

std::vector<Vec> surrogate_gradients(const FederationState &state, const Problem &problem, double lambda) {
    const Vec mean = client_mean(state);
    const auto n = static_cast<double>(state.size());
    std::vector<Vec> grads;
    grads.reserve(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) {
        const Vec &x = state.clients[i].x;
        grads.push_back(problem.clients[i]->gradient(x) / n + lambda * (x - mean));
    }
    return grads;
}

double surrogate_gap(const FederationState &state, const Problem &problem, double lambda) {
    const std::vector<Vec> grads = surrogate_gradients(state, problem, lambda);
    double total = 0.0;
    for (std::size_t i = 0; i < state.size(); ++i) {
        const Vec &x = state.clients[i].x;
        const FeasibleSet &set = problem.sets.at(state.clients[i].set_id);
        total += grads[i].dot(x - set.lmo(grads[i]));
    }
    return total;
}

double surrogate_value(const FederationState &state, const Problem &problem, double lambda) {
    double total = 0.0;
    for (std::size_t i = 0; i < state.size(); ++i) total += problem.clients[i]->value(state.clients[i].x);
    const double dist = consensus_distance(state);
    return total / static_cast<double>(state.size()) + 0.5 * lambda * dist * dist;
}

RoundMetrics evaluate_round(const FederationState &state, const Problem &problem, long t,
                            const ScheduleValues &values, std::size_t active_count, double recursion_slack) {
    RoundMetrics m;
    m.t = t;
    m.values = values;
    m.active_count = active_count;
    m.recursion_slack = recursion_slack;
    m.objective = problem.objective(state.x_bar);
    m.fw_gap = fw_gap_unchecked(problem, problem.global_set(), state.x_bar);
    m.surrogate_gap = surrogate_gap(state, problem, values.lambda);
    m.consensus_dist = consensus_distance(state);
    m.surrogate_value = surrogate_value(state, problem, values.lambda);
    m.xbar_residual = problem.global_set().residual(state.x_bar);
    return m;
}

// ---------------------------------------------------------------------------

Vec centralized_frank_wolfe(const ValueFn &value, const GradientFn &gradient, double smoothness,
                            const FeasibleSet &set, Vec x0, std::size_t iterations) {
    Vec x = std::move(x0);
    Vec best = x;
    double best_value = value(x);
    const double L = smoothness > 0.0 ? smoothness : 1.0;
    for (std::size_t k = 0; k < iterations; ++k) {
        const Vec g = gradient(x);
        const Vec direction = set.lmo(g) - x;
        const double gap = -g.dot(direction);
        const double length2 = direction.squaredNorm();
        if (gap <= 0.0 || length2 == 0.0) break;
        const double step = std::min(1.0, gap / (L * length2));
        x += step * direction;
        const double v = value(x);
        if (v < best_value) {
            best_value = v;
            best = x;
        }
    }
    return best;
}

namespace {

// For positive-weight quadratics F(x) = c + W ||x - center||^2, so x* is the
// projection of the weighted center onto D.
std::optional<Vec> quadratic_minimizer(const Problem &problem) {
    Vec weighted = Vec::Zero(static_cast<Eigen::Index>(problem.dim()));
    double total = 0.0;
    for (const auto &c : problem.clients) {
        const auto *q = dynamic_cast<const QuadraticClient *>(c.get());
        if (q == nullptr || q->flipped()) return std::nullopt;
        weighted += q->weight() * q->target();
        total += q->weight();
    }
    return problem.global_set().project(weighted / total);
}

}  // namespace

ReferenceSolution reference_optimum(const Problem &problem, std::size_t iterations) {
    ReferenceSolution out;
    if (auto exact = quadratic_minimizer(problem)) {
        out.x = std::move(*exact);
        out.exact = true;
    } else {
        const FeasibleSet &set = problem.global_set();
        out.x = centralized_frank_wolfe([&](const Vec &x) { return problem.objective(x); },
                                        [&](const Vec &x) { return problem.gradient(x); }, problem.smoothness(), set,
                                        set.canonical_vertex(), iterations);
    }
    out.value = problem.objective(out.x);
    return out;
}

// ---------------------------------------------------------------------------

double theorem1_surrogate_bound(const BoundConstants &c, double t) {
    return 2.0 * c.n * c.D * c.D * ((c.L / c.n) / (t + 1.0) + c.lambda0 / std::sqrt(t + 1.0));
}

double theorem2_gap_bound(const BoundConstants &c, double T) {
    return (c.E_init + c.n * c.D * c.D * c.lambda0 / 2.0) / std::cbrt(T) +
           (c.L * c.D * c.D / 2.0) / std::pow(T, 2.0 / 3.0);
}

double consensus_bound(const BoundConstants &c, double t, double dual_norm) {
    return 2.0 / (c.lambda0 * std::sqrt(t + 1.0)) * (dual_norm + c.D * std::sqrt(c.lambda0 * (c.L + c.n * c.lambda0)));
}

double gradient_bound_G(const Problem &problem, const Vec &x_hat) {
    return problem.smoothness() * problem.diameter() +
           static_cast<double>(problem.n()) * problem.gradient(x_hat).norm();
}

double gradient_bound_G(const Problem &problem, std::size_t fw_iterations) {
    return gradient_bound_G(problem, reference_optimum(problem, fw_iterations).x);
}

double estimate_initial_gap(const Problem &problem, const Vec &x1, std::size_t iterations) {
    const FeasibleSet &set = problem.global_set();
    const double diameter = set.diameter();
    double start_total = 0.0;
    double lower_total = 0.0;
    for (const auto &client : problem.clients) {
        const auto value = [&](const Vec &x) { return client->value(x); };
        const auto gradient = [&](const Vec &x) { return client->gradient(x); };
        start_total += client->value(x1);
        // Certified lower bounds on min_D f_i from each FW end point x:
        //   convex:      f(u) >= f(x) + <g, u - x>                    >= f(x) - gap(x)
        //   L-smooth:    f(u) >= f(x) + <g, u - x> - (L/2)|u - x|^2   >= f(x) - gap(x) - L D^2 / 2
        const double curvature = client->convex() ? 0.0 : 0.5 * client->smoothness() * diameter * diameter;
        double lower = -std::numeric_limits<double>::infinity();
        for (const Vec &start : {Vec(x1), set.canonical_vertex(), set.lmo(client->gradient(x1))}) {
            const Vec x = centralized_frank_wolfe(value, gradient, client->smoothness(), set, start, iterations);
            const Vec g = client->gradient(x);
            const double gap = g.dot(x - set.lmo(g));
            lower = std::max(lower, client->value(x) - gap - curvature);
        }
        lower_total += lower;
    }
    const auto n = static_cast<double>(problem.n());
    return start_total / n - lower_total / n;
}

ShcgmConstants shcgm_constants(const BoundConstants &c, const FederationState &initial, const Problem &problem) {
    double mismatch = 0.0;
    const auto n = static_cast<double>(initial.size());
    for (std::size_t i = 0; i < initial.size(); ++i) {
        const ClientSlot &slot = initial.clients[i];
        mismatch += (problem.clients[i]->gradient(slot.x) / n - slot.d).squaredNorm();
    }
    ShcgmConstants k;
    k.Q = std::max(mismatch * std::pow(7.0, 2.0 / 3.0),
                   16.0 * c.n * c.sigma * c.sigma + 81.0 * c.L * c.L * c.D * c.D / c.n);
    k.C = 40.5 * c.n * c.D * c.D * (c.L / c.n + c.lambda0) + 9.0 * c.D * std::sqrt(k.Q);
    return k;
}

double stochastic_objective_bound(const ShcgmConstants &k, double t) {
    return std::cbrt(9.0) * k.C / std::cbrt(t + 7.0);
}

}  // namespace fedfw
