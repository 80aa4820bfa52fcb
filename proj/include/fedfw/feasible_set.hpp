#pragma once

#include <cstddef>
#include <string>

#include "fedfw/core.hpp"

namespace fedfw {

enum class SetKind { L1Ball, L2Ball, Box, Simplex };

std::string to_string(SetKind kind);
SetKind set_kind_from_string(const std::string &name);

/// Convex compact constraint set with a closed-form linear minimization oracle.
///
/// Immutable after construction. Tie-breaking is deterministic: argmax/argmin
/// ties go to the lowest index, and a zero gradient returns the canonical
/// vertex (L1/L2: +r e_1, Box: lo, Simplex: scale e_1).
class FeasibleSet {
public:
    static FeasibleSet l1_ball(std::size_t dim, double radius);
    static FeasibleSet l2_ball(std::size_t dim, double radius);
    static FeasibleSet box(Vec lo, Vec hi);
    static FeasibleSet box(std::size_t dim, double lo, double hi);
    /// {x >= 0, sum x = scale}.
    static FeasibleSet simplex(std::size_t dim, double scale);

    SetKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    /// Radius for the balls, scale for the simplex; unused for boxes.
    double radius() const { return radius_; }
    const Vec &lo() const { return lo_; }
    const Vec &hi() const { return hi_; }

    /// argmin_{x in D} <g, x>.
    Vec lmo(const Vec &g) const;

    /// Amount by which x violates the constraint (0 when feasible).
    double residual(const Vec &x) const;
    bool contains(const Vec &x, double tol = 1e-9) const { return residual(x) <= tol; }

    /// max_{x,y in D} ||x - y||_2.
    double diameter() const;

    Vec canonical_vertex() const { return lmo(Vec::Zero(static_cast<Eigen::Index>(dim_))); }

    /// Euclidean projection onto D. Only used to build reference optima.
    Vec project(const Vec &x) const;

    /// A random point of D. Half the draws are extreme points, half are
    /// interior points from a distribution with full support on D.
    Vec sample(RngStream &rng) const;

    std::string describe() const;

private:
    FeasibleSet(SetKind kind, std::size_t dim, double radius, Vec lo, Vec hi);
    void check_dim(const Vec &v, const char *op) const;

    SetKind kind_;
    std::size_t dim_;
    double radius_;
    Vec lo_;
    Vec hi_;
};

}  // namespace fedfw
