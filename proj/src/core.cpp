#include "fedfw/core.hpp"

#include <cmath>
#include <limits>

namespace fedfw {

bool all_finite(const Vec &v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) return false;
    }
    return true;
}

Vec convex_combine(const Vec &a, const Vec &b, double eta) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("convex_combine: dimension mismatch (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    }
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw std::invalid_argument("convex_combine: eta must lie in [0, 1], got " + std::to_string(eta));
    }
    return (1.0 - eta) * a + eta * b;
}

FederationState make_state(std::size_t n_clients, const Vec &x0) {
    if (n_clients == 0) throw std::invalid_argument("make_state: need at least one client");
    FederationState state;
    state.clients.resize(n_clients);
    for (auto &slot : state.clients) {
        slot.x = x0;
        slot.y = Vec::Zero(x0.size());
        slot.d = Vec::Zero(x0.size());
        slot.set_id = 0;
    }
    state.x_bar = x0;
    state.round = 1;
    return state;
}

Vec client_mean(const FederationState &state) {
    if (state.clients.empty()) throw std::invalid_argument("client_mean: empty federation");
    Vec sum = Vec::Zero(state.clients.front().x.size());
    for (const auto &slot : state.clients) sum += slot.x;
    return sum / static_cast<double>(state.clients.size());
}

double consensus_distance(const FederationState &state) {
    const Vec mean = client_mean(state);
    double total = 0.0;
    for (const auto &slot : state.clients) total += (slot.x - mean).squaredNorm();
    return std::sqrt(total);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {

RngStream::engine_type make_engine(std::uint64_t seed, std::uint64_t client, std::uint64_t round,
                                   StreamKind kind) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(kind));
    h = splitmix64(h ^ client);
    h = splitmix64(h ^ round);
    // The key is already well mixed, so a direct 64-bit seed suffices; a
    // seed_seq costs ~10x more and streams are built per client per round.
    return RngStream::engine_type(splitmix64(h));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t client_id, std::uint64_t round, StreamKind kind)
    : seed_(seed), client_(client_id), round_(round), engine_(make_engine(seed, client_id, round, kind)) {}

std::size_t RngStream::uniform_index(std::size_t bound) {
    if (bound == 0) throw std::invalid_argument("uniform_index: empty range");
    const std::uint64_t b = bound;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % b);
    std::uint64_t draw;
    do {
        draw = engine_();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % b);
}

double RngStream::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

}  // namespace fedfw
