#include "fedfw/problem.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedfw {

double Problem::objective(const Vec &x) const {
    double total = 0.0;
    for (const auto &c : clients) total += c->value(x);
    return total / static_cast<double>(clients.size());
}

Vec Problem::gradient(const Vec &x) const {
    Vec total = Vec::Zero(x.size());
    for (const auto &c : clients) total += c->gradient(x);
    return total / static_cast<double>(clients.size());
}

bool Problem::convex() const {
    return std::all_of(clients.begin(), clients.end(), [](const auto &c) { return c->convex(); });
}

double Problem::diameter() const {
    double best = 0.0;
    for (const auto &s : sets) best = std::max(best, s.diameter());
    return best;
}

Problem make_problem(std::vector<ClientObjectivePtr> clients, FeasibleSet set) {
    if (clients.empty()) throw std::invalid_argument("problem needs at least one client");
    for (std::size_t i = 0; i < clients.size(); ++i) {
        if (!clients[i]) throw std::invalid_argument("client " + std::to_string(i) + " is null");
        if (clients[i]->dim() != set.dim()) {
            throw std::invalid_argument("client " + std::to_string(i) + " has dimension " +
                                        std::to_string(clients[i]->dim()) + " but the feasible set has " +
                                        std::to_string(set.dim()));
        }
    }
    Problem p;
    p.clients = std::move(clients);
    p.sets.push_back(std::move(set));
    return p;
}

}  // namespace fedfw
