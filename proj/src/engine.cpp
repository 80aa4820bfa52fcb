#include "fedfw/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <tbb/blocked_range.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

namespace fedfw {

std::string to_string(AlgorithmKind kind) {
    switch (kind) {
        case AlgorithmKind::FedFW: return "fedfw";
        case AlgorithmKind::FedFWPlus: return "fedfw+";
        case AlgorithmKind::FedFWSto: return "fedfw-sto";
        case AlgorithmKind::NaiveAvgFW: return "naive";
    }
    return "unknown";
}

AlgorithmKind algorithm_from_string(const std::string &name) {
    if (name == "fedfw") return AlgorithmKind::FedFW;
    if (name == "fedfw+" || name == "fedfw-plus") return AlgorithmKind::FedFWPlus;
    if (name == "fedfw-sto") return AlgorithmKind::FedFWSto;
    if (name == "naive") return AlgorithmKind::NaiveAvgFW;
    throw std::invalid_argument("unknown algorithm '" + name + "'");
}

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::ConvexT1: return "convex";
        case Regime::NonconvexT2: return "nonconvex";
        case Regime::StoT3: return "sto";
        case Regime::PartialConvex: return "partial-convex";
        case Regime::PartialNonconvex: return "partial-nonconvex";
    }
    return "unknown";
}

Regime regime_from_string(const std::string &name) {
    if (name == "convex") return Regime::ConvexT1;
    if (name == "nonconvex") return Regime::NonconvexT2;
    if (name == "sto") return Regime::StoT3;
    if (name == "partial-convex") return Regime::PartialConvex;
    if (name == "partial-nonconvex") return Regime::PartialNonconvex;
    throw std::invalid_argument("unknown schedule regime '" + name + "'");
}

// ---------------------------------------------------------------------------
// Schedule

Schedule::Schedule(Regime regime, double lambda0, long horizon, double participation)
    : regime_(regime), lambda0_(lambda0), horizon_(horizon), participation_(participation) {
    if (!(lambda0_ > 0.0) || !std::isfinite(lambda0_)) throw std::invalid_argument("lambda0 must be positive");
    if (horizon_ < 1) throw std::invalid_argument("schedule horizon T must be >= 1");
    if (!(participation_ > 0.0 && participation_ <= 1.0)) {
        throw std::invalid_argument("participation must lie in (0, 1]");
    }
}

Schedule &Schedule::override_rho(double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rho override must lie in (0, 1]");
    rho_override_ = rho;
    return *this;
}

ScheduleValues Schedule::at(long t) const {
    if (t < 1) throw std::invalid_argument("schedule evaluated at t < 1");
    const auto td = static_cast<double>(t);
    const auto T = static_cast<double>(horizon_);
    const double p = participation_;
    ScheduleValues v;
    switch (regime_) {
        case Regime::ConvexT1:
            v.eta = 2.0 / (td + 1.0);
            v.lambda = lambda0_ * std::sqrt(td + 1.0);
            break;
        case Regime::NonconvexT2:
            v.eta = 1.0 / (std::cbrt(T) * std::cbrt(T));
            v.lambda = lambda0_ * std::cbrt(T);
            break;
        case Regime::StoT3:
            v.eta = 9.0 / (td + 8.0);
            v.lambda = lambda0_ * std::sqrt(td + 8.0);
            // cbrt squared rather than pow(., 2/3): exact at perfect cubes, so rho_1 = 1.
            v.rho = 4.0 / (std::cbrt(td + 7.0) * std::cbrt(td + 7.0));
            break;
        case Regime::PartialConvex: {
            const double k = p * (td - 1.0) + 2.0;
            v.eta = 2.0 / k;
            v.lambda = lambda0_ * std::sqrt(k);
            break;
        }
        case Regime::PartialNonconvex: {
            const double k = p * T + 1.0;
            v.eta = 1.0 / (std::cbrt(k) * std::cbrt(k));
            v.lambda = lambda0_ * std::cbrt(k);
            break;
        }
    }
    if (rho_override_) v.rho = *rho_override_;
    return v;
}

std::vector<char> ParticipationPolicy::sample(long round, std::size_t n_clients) const {
    std::vector<char> active(n_clients, 1);
    if (probability >= 1.0) return active;
    for (std::size_t i = 0; i < n_clients; ++i) {
        RngStream rng(seed, i, static_cast<std::uint64_t>(round), StreamKind::Participation);
        active[i] = rng.uniform01() < probability ? 1 : 0;
    }
    return active;
}

// ---------------------------------------------------------------------------
// Client steps

Vec client_step_fedfw(ClientSlot &slot, const Vec &x_bar, double eta, double lambda, const FeasibleSet &set,
                      const ClientObjective &objective, std::size_t n_clients) {
    const Vec g = objective.gradient(slot.x) / static_cast<double>(n_clients) + lambda * (slot.x - x_bar);
    Vec s = set.lmo(g);
    slot.x = convex_combine(slot.x, s, eta);
    return s;
}

Vec client_step_fedfw_plus(ClientSlot &slot, const Vec &x_bar, double eta, double lambda, double lambda0,
                           const FeasibleSet &set, const ClientObjective &objective, std::size_t n_clients) {
    const Vec offset = slot.x - x_bar;
    slot.y += lambda0 * offset;
    const Vec g = objective.gradient(slot.x) / static_cast<double>(n_clients) + lambda * offset + slot.y;
    Vec s = set.lmo(g);
    slot.x = convex_combine(slot.x, s, eta);
    return s;
}

Vec client_step_fedfw_sto(ClientSlot &slot, const Vec &x_bar, double eta, double lambda, double rho,
                          const FeasibleSet &set, const ClientObjective &objective, std::size_t n_clients,
                          std::size_t batch, RngStream &rng) {
    const Vec sample = objective.stochastic_gradient(slot.x, batch, rng) / static_cast<double>(n_clients);
    slot.d = (1.0 - rho) * slot.d + rho * sample;
    const Vec g = slot.d + lambda * (slot.x - x_bar);
    Vec s = set.lmo(g);
    slot.x = convex_combine(slot.x, s, eta);
    return s;
}

Vec client_step_naive(ClientSlot &slot, const Vec &x_bar, double eta, const FeasibleSet &set,
                      const ClientObjective &objective) {
    Vec s = set.lmo(objective.gradient(x_bar));
    slot.x = convex_combine(x_bar, s, eta);
    return s;
}

// ---------------------------------------------------------------------------
// Engine

struct Engine::Executor {
    // The parallelism limit defaults to the core count; lift it so a requested
    // worker count is honoured (and does not warn) on small machines.
    explicit Executor(std::size_t workers)
        : limit(tbb::global_control::max_allowed_parallelism, std::max<std::size_t>(workers, 1)),
          arena(static_cast<int>(std::max<std::size_t>(workers, 1))) {}

    template <typename Fn>
    void for_each(std::size_t n, std::size_t workers, Fn &&fn) {
        if (workers <= 1 || n <= 1) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        arena.execute([&] {
            tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n), [&](const tbb::blocked_range<std::size_t> &r) {
                for (std::size_t i = r.begin(); i != r.end(); ++i) fn(i);
            });
        });
    }

    tbb::global_control limit;
    tbb::task_arena arena;
};

Engine::Engine(const Problem &problem, EngineConfig config)
    : problem_(problem), config_(std::move(config)), executor_(std::make_unique<Executor>(config_.workers)) {
    if (problem_.clients.empty()) throw std::invalid_argument("engine: problem has no clients");
    if (config_.algorithm == AlgorithmKind::FedFWSto && config_.batch_size == 0) {
        throw std::invalid_argument("engine: FedFW-sto needs a positive batch size");
    }
    if (!(config_.participation.probability > 0.0 && config_.participation.probability <= 1.0)) {
        throw std::invalid_argument("engine: participation must lie in (0, 1]");
    }
}

Engine::~Engine() = default;

RoundReport Engine::step(FederationState &state) {
    const std::size_t n = state.size();
    if (n != problem_.n()) throw std::invalid_argument("engine: state and problem disagree on the client count");

    RoundReport report;
    report.t = state.round;
    report.values = config_.schedule.at(state.round);
    const ScheduleValues &v = report.values;
    if (!(v.eta >= 0.0 && v.eta <= 1.0)) {
        throw std::logic_error("schedule produced eta outside [0, 1] at round " + std::to_string(state.round));
    }

    const std::vector<char> active = config_.participation.sample(state.round, n);
    report.active_count = static_cast<std::size_t>(std::count(active.begin(), active.end(), 1));
    if (report.active_count == 0) {
        ++state.round;
        return report;
    }

    std::vector<Vec> directions(n);
    const Vec x_bar = state.x_bar;
    executor_->for_each(n, config_.workers, [&](std::size_t i) {
        if (!active[i]) return;
        ClientSlot &slot = state.clients[i];
        const FeasibleSet &set = problem_.sets.at(slot.set_id);
        const ClientObjective &objective = *problem_.clients[i];
        switch (config_.algorithm) {
            case AlgorithmKind::FedFW:
                directions[i] = client_step_fedfw(slot, x_bar, v.eta, v.lambda, set, objective, n);
                break;
            case AlgorithmKind::FedFWPlus:
                directions[i] = client_step_fedfw_plus(slot, x_bar, v.eta, v.lambda, config_.schedule.lambda0(), set,
                                                       objective, n);
                break;
            case AlgorithmKind::FedFWSto: {
                RngStream rng(config_.seed, i, static_cast<std::uint64_t>(state.round), StreamKind::Minibatch);
                directions[i] = client_step_fedfw_sto(slot, x_bar, v.eta, v.lambda, v.rho, set, objective, n,
                                                      config_.batch_size, rng);
                break;
            }
            case AlgorithmKind::NaiveAvgFW:
                directions[i] = client_step_naive(slot, x_bar, v.eta, set, objective);
                break;
        }
    });

    for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) continue;
        const ClientSlot &slot = state.clients[i];
        if (!all_finite(slot.x) || !all_finite(slot.y) || !all_finite(slot.d)) {
            throw NonFiniteError("non-finite iterate at client " + std::to_string(i), state.round);
        }
        if (config_.verify) {
            const double r = problem_.sets.at(slot.set_id).residual(slot.x);
            if (r > 1e-9) {
                throw VerificationError("client " + std::to_string(i) + " left its feasible set by " +
                                        std::to_string(r) + " at round " + std::to_string(state.round));
            }
        }
    }

    state.x_bar = client_mean(state);

    if (config_.participation.probability >= 1.0 && config_.algorithm != AlgorithmKind::NaiveAvgFW) {
        Vec mean_s = Vec::Zero(static_cast<Eigen::Index>(state.dim()));
        for (const auto &s : directions) mean_s += s;
        mean_s /= static_cast<double>(n);
        const Vec &previous = recursion_x_bar_ ? *recursion_x_bar_ : x_bar;
        recursion_x_bar_ = convex_combine(previous, mean_s, v.eta);
        report.recursion_slack = (*recursion_x_bar_ - state.x_bar).lpNorm<Eigen::Infinity>();
        if (config_.verify && report.recursion_slack > 1e-9) {
            throw VerificationError("server recursion drifted from the client mean by " +
                                    std::to_string(report.recursion_slack) + " at round " +
                                    std::to_string(state.round));
        }
    }

    ++state.round;
    return report;
}

RoundMetrics Engine::run_round(FederationState &state) {
    const RoundReport report = step(state);
    return evaluate_round(state, problem_, report.t, report.values, report.active_count, report.recursion_slack);
}

// ---------------------------------------------------------------------------

Vec initial_point(const Problem &problem, InitMode mode) {
    switch (mode) {
        case InitMode::Vertex: return problem.global_set().canonical_vertex();
        case InitMode::Zero: return Vec::Zero(static_cast<Eigen::Index>(problem.dim()));
    }
    return problem.global_set().canonical_vertex();
}

FederationState initialize_state(const Problem &problem, const Vec &x0) {
    if (static_cast<std::size_t>(x0.size()) != problem.dim()) {
        throw std::invalid_argument("initial point has the wrong dimension");
    }
    if (!problem.global_set().contains(x0)) {
        throw std::invalid_argument("initial point is not in " + problem.global_set().describe());
    }
    return make_state(problem.n(), x0);
}

std::vector<Vec> run_naive_baseline(const Problem &problem, const Vec &x_bar0, long T) {
    FederationState state = initialize_state(problem, x_bar0);
    std::vector<Vec> trajectory;
    trajectory.reserve(static_cast<std::size_t>(T) + 1);
    trajectory.push_back(state.x_bar);
    for (long t = 1; t <= T; ++t) {
        const double eta = 2.0 / (static_cast<double>(t) + 1.0);
        for (std::size_t i = 0; i < state.size(); ++i) {
            client_step_naive(state.clients[i], state.x_bar, eta, problem.global_set(), *problem.clients[i]);
        }
        state.x_bar = client_mean(state);
        trajectory.push_back(state.x_bar);
    }
    return trajectory;
}

void assign_split_constraints(FederationState &state, Problem &problem, const std::vector<FeasibleSet> &sets,
                              std::uint64_t seed) {
    if (sets.size() != state.size() || sets.size() != problem.n()) {
        throw std::invalid_argument("split constraints: need exactly one set per client");
    }
    const FeasibleSet &global = problem.global_set();
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (sets[i].dim() != global.dim()) {
            throw std::invalid_argument("split constraints: client " + std::to_string(i) + " set has wrong dimension");
        }
    }
    for (std::uint64_t k = 0; k < 1000; ++k) {
        RngStream rng(seed, 0, k, StreamKind::Sampling);
        const Vec point = global.sample(rng);
        for (std::size_t i = 0; i < sets.size(); ++i) {
            if (!sets[i].contains(point)) {
                throw std::invalid_argument("split constraints: " + sets[i].describe() + " for client " +
                                            std::to_string(i) + " does not contain " + global.describe());
            }
        }
    }
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (!sets[i].contains(state.clients[i].x)) {
            throw std::invalid_argument("split constraints: client " + std::to_string(i) +
                                        " model is outside its set");
        }
    }
    problem.sets.erase(problem.sets.begin() + 1, problem.sets.end());
    for (std::size_t i = 0; i < sets.size(); ++i) {
        problem.sets.push_back(sets[i]);
        state.clients[i].set_id = i + 1;
    }
}

}  // namespace fedfw
