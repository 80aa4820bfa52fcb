#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fedfw {

/// Dense model/gradient vector. All arithmetic is 64-bit.
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when a NaN or Inf shows up in an iterate.
class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(const std::string &what, long round)
        : std::runtime_error(what + " (round " + std::to_string(round) + ")"), round_(round) {}
    long round() const noexcept { return round_; }

private:
    long round_;
};

bool all_finite(const Vec &v);

/// (1 - eta) * a + eta * b. Throws on dimension mismatch or eta outside [0, 1].
Vec convex_combine(const Vec &a, const Vec &b, double eta);

/// Per-client state. `y` is only touched by FedFW+, `d` only by FedFW-sto.
struct ClientSlot {
    Vec x;
    Vec y;
    Vec d;
    std::size_t set_id = 0;
};

/// Everything the coordinator owns between rounds.
struct FederationState {
    std::vector<ClientSlot> clients;
    Vec x_bar;
    long round = 1;

    std::size_t size() const { return clients.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(x_bar.size()); }
};

/// Builds a state with every client at `x0` and zeroed duals/estimators.
FederationState make_state(std::size_t n_clients, const Vec &x0);

/// Exact mean of the client models (ignores the cached x_bar).
Vec client_mean(const FederationState &state);

/// sqrt(sum_i ||x_i - mean||^2), i.e. the Frobenius distance of X to the consensus set.
double consensus_distance(const FederationState &state);

/// Purpose tag so that different consumers of randomness never share a stream.
enum class StreamKind : std::uint64_t {
    Minibatch = 1,
    Participation = 2,
    GradientNoise = 3,
    Sampling = 4,
    Synthetic = 5,
};

/// Counter-based random stream: output is a pure function of
/// (seed, client_id, round, kind), independent of thread scheduling.
class RngStream {
public:
    using engine_type = std::mt19937_64;

    RngStream(std::uint64_t seed, std::uint64_t client_id, std::uint64_t round,
              StreamKind kind = StreamKind::Minibatch);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t client_id() const { return client_; }
    std::uint64_t round() const { return round_; }

    engine_type &engine() { return engine_; }

    /// Uniform integer in [0, bound) without modulo bias.
    std::size_t uniform_index(std::size_t bound);
    /// Uniform double in [0, 1) from the top 53 bits.
    double uniform01();

private:
    std::uint64_t seed_;
    std::uint64_t client_;
    std::uint64_t round_;
    engine_type engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace fedfw
