#pragma once

#include <initializer_list>
#include <memory>

#include "fedfw/engine.hpp"

namespace testing {

inline fedfw::Vec vec(std::initializer_list<double> values) {
    fedfw::Vec v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index k = 0;
    for (double x : values) v[k++] = x;
    return v;
}

inline fedfw::ClientObjectivePtr quad(fedfw::Vec target, double weight = 1.0, bool flipped = false) {
    return std::make_shared<fedfw::QuadraticClient>(std::move(target), weight, flipped);
}

// The 1-D two-client problem F(x) = ((x-3)^2 + (x+1)^2)/2 on [-1, 1], optimum x* = 1.
inline fedfw::Problem counterexample() {
    return fedfw::make_problem({quad(vec({3.0})), quad(vec({-1.0}))}, fedfw::FeasibleSet::box(1, -1.0, 1.0));
}

}  // namespace testing
