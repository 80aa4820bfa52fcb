#pragma once

#include <cstddef>
#include <vector>

#include "fedfw/core.hpp"
#include "fedfw/feasible_set.hpp"
#include "fedfw/objectives.hpp"

namespace fedfw {

/// Finite-sum problem min_{x in D} (1/n) sum_i f_i(x).
///
/// `sets[0]` is the global constraint D. Split-constraint runs append one
/// superset D_i per client and point each ClientSlot::set_id at it.
struct Problem {
    std::vector<ClientObjectivePtr> clients;
    std::vector<FeasibleSet> sets;

    std::size_t n() const { return clients.size(); }
    std::size_t dim() const { return sets.front().dim(); }
    const FeasibleSet &global_set() const { return sets.front(); }

    /// F(x)
    double objective(const Vec &x) const;
    /// grad F(x)
    Vec gradient(const Vec &x) const;
    bool convex() const;
    /// max_i L_i
    double smoothness() const { return smoothness_bound(clients); }
    /// Largest diameter over all sets in use.
    double diameter() const;
};

/// Validates dimensions and builds a single-constraint problem.
Problem make_problem(std::vector<ClientObjectivePtr> clients, FeasibleSet set);

}  // namespace fedfw
