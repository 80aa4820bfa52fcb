#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedfw/core.hpp"
#include "fedfw/metrics.hpp"
#include "fedfw/problem.hpp"

namespace fedfw {

enum class AlgorithmKind { FedFW, FedFWPlus, FedFWSto, NaiveAvgFW };

std::string to_string(AlgorithmKind kind);
AlgorithmKind algorithm_from_string(const std::string &name);

enum class Regime { ConvexT1, NonconvexT2, StoT3, PartialConvex, PartialNonconvex };

std::string to_string(Regime regime);
Regime regime_from_string(const std::string &name);

/// (eta_t, lambda_t, rho_t) sequences.
///
///   ConvexT1          2/(t+1),           l0 sqrt(t+1)
///   NonconvexT2       T^{-2/3},          l0 T^{1/3}
///   StoT3             9/(t+8),           l0 sqrt(t+8),   rho = 4/(t+7)^{2/3}
///   PartialConvex     2/(p(t-1)+2),      l0 sqrt(p(t-1)+2)
///   PartialNonconvex  (pT+1)^{-2/3},     l0 (pT+1)^{1/3}
///
/// rho is 1 outside StoT3 unless overridden.
class Schedule {
public:
    Schedule(Regime regime, double lambda0, long horizon = 1, double participation = 1.0);

    static Schedule convex(double lambda0) { return {Regime::ConvexT1, lambda0}; }
    static Schedule nonconvex(double lambda0, long T) { return {Regime::NonconvexT2, lambda0, T}; }
    static Schedule stochastic(double lambda0) { return {Regime::StoT3, lambda0}; }
    static Schedule partial_convex(double lambda0, double p) { return {Regime::PartialConvex, lambda0, 1, p}; }
    static Schedule partial_nonconvex(double lambda0, long T, double p) {
        return {Regime::PartialNonconvex, lambda0, T, p};
    }

    /// Forces rho_t to a constant (used by the FedFW-sto reduction checks).
    Schedule &override_rho(double rho);

    ScheduleValues at(long t) const;

    Regime regime() const { return regime_; }
    double lambda0() const { return lambda0_; }
    long horizon() const { return horizon_; }
    double participation() const { return participation_; }
    std::optional<double> rho_override() const { return rho_override_; }

private:
    Regime regime_;
    double lambda0_;
    long horizon_;
    double participation_;
    std::optional<double> rho_override_;
};

/// Each client is active independently with `probability`, drawn from the
/// (seed, client, round) participation stream.
struct ParticipationPolicy {
    double probability = 1.0;
    std::uint64_t seed = 0;

    std::vector<char> sample(long round, std::size_t n_clients) const;
};

// ---------------------------------------------------------------------------
// Client steps. Each returns the direction s_i sent to the server and
// updates the slot in place.

Vec client_step_fedfw(ClientSlot &slot, const Vec &x_bar, double eta, double lambda, const FeasibleSet &set,
                      const ClientObjective &objective, std::size_t n_clients);

Vec client_step_fedfw_plus(ClientSlot &slot, const Vec &x_bar, double eta, double lambda, double lambda0,
                           const FeasibleSet &set, const ClientObjective &objective, std::size_t n_clients);

Vec client_step_fedfw_sto(ClientSlot &slot, const Vec &x_bar, double eta, double lambda, double rho,
                          const FeasibleSet &set, const ClientObjective &objective, std::size_t n_clients,
                          std::size_t batch, RngStream &rng);

/// Local FW step from the server average: s = lmo(grad f_i(x_bar)), x_i = (1-eta) x_bar + eta s.
Vec client_step_naive(ClientSlot &slot, const Vec &x_bar, double eta, const FeasibleSet &set,
                      const ClientObjective &objective);

// ---------------------------------------------------------------------------

struct EngineConfig {
    AlgorithmKind algorithm = AlgorithmKind::FedFW;
    Schedule schedule = Schedule::convex(1e-2);
    ParticipationPolicy participation;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    /// Feasibility and recursion-vs-mean assertions after every round.
    bool verify = false;
    std::size_t workers = 1;
};

/// What happened in one round, before any metric evaluation.
struct RoundReport {
    long t = 0;
    ScheduleValues values;
    std::size_t active_count = 0;
    double recursion_slack = 0.0;
};

class VerificationError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Bulk-synchronous round driver. Client steps run concurrently on a worker
/// pool, read only the previous x_bar and their own slot, and draw randomness
/// from per-(client, round) streams; aggregation happens on the caller's thread.
class Engine {
public:
    Engine(const Problem &problem, EngineConfig config);
    ~Engine();
    Engine(const Engine &) = delete;
    Engine &operator=(const Engine &) = delete;

    /// Runs round state.round and advances the counter. With no active
    /// clients the models and x_bar are left untouched.
    RoundReport step(FederationState &state);

    /// step() followed by evaluate_round().
    RoundMetrics run_round(FederationState &state);

    const EngineConfig &config() const { return config_; }
    const Problem &problem() const { return problem_; }

private:
    struct Executor;

    const Problem &problem_;
    EngineConfig config_;
    std::unique_ptr<Executor> executor_;
    std::optional<Vec> recursion_x_bar_;
};

enum class InitMode { Vertex, Zero };

/// Starting point shared by all clients: the canonical vertex of D, or the origin.
Vec initial_point(const Problem &problem, InitMode mode);

/// State with every client at x0, which must lie in D.
FederationState initialize_state(const Problem &problem, const Vec &x0);

/// Runs the naive "local FW then average" procedure for T rounds with
/// eta_t = 2/(t+1) and returns x_bar^1, ..., x_bar^{T+1}.
std::vector<Vec> run_naive_baseline(const Problem &problem, const Vec &x_bar0, long T);

/// Gives client i its own superset D_i of D. Containment is checked on 10^3
/// sampled points of D; any miss is a configuration error.
void assign_split_constraints(FederationState &state, Problem &problem, const std::vector<FeasibleSet> &sets,
                              std::uint64_t seed = 0);

}  // namespace fedfw
