#include "fedfw/feasible_set.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace fedfw {

std::string to_string(SetKind kind) {
    switch (kind) {
        case SetKind::L1Ball: return "l1";
        case SetKind::L2Ball: return "l2";
        case SetKind::Box: return "box";
        case SetKind::Simplex: return "simplex";
    }
    return "unknown";
}

SetKind set_kind_from_string(const std::string &name) {
    if (name == "l1" || name == "l1-ball") return SetKind::L1Ball;
    if (name == "l2" || name == "l2-ball") return SetKind::L2Ball;
    if (name == "box") return SetKind::Box;
    if (name == "simplex") return SetKind::Simplex;
    throw std::invalid_argument("unknown feasible set kind '" + name + "'");
}

FeasibleSet::FeasibleSet(SetKind kind, std::size_t dim, double radius, Vec lo, Vec hi)
    : kind_(kind), dim_(dim), radius_(radius), lo_(std::move(lo)), hi_(std::move(hi)) {
    if (dim_ == 0) throw std::invalid_argument("feasible set dimension must be positive");
    if (kind_ == SetKind::Box) {
        if (static_cast<std::size_t>(lo_.size()) != dim_ || static_cast<std::size_t>(hi_.size()) != dim_) {
            throw std::invalid_argument("box bounds must match the set dimension");
        }
        for (std::size_t k = 0; k < dim_; ++k) {
            if (!std::isfinite(lo_[k]) || !std::isfinite(hi_[k]) || !(lo_[k] < hi_[k])) {
                throw std::invalid_argument("box requires finite lo < hi in every coordinate");
            }
        }
    } else if (!(radius_ > 0.0) || !std::isfinite(radius_)) {
        throw std::invalid_argument(to_string(kind_) + " radius/scale must be positive and finite");
    }
}

FeasibleSet FeasibleSet::l1_ball(std::size_t dim, double radius) {
    return FeasibleSet(SetKind::L1Ball, dim, radius, Vec(), Vec());
}

FeasibleSet FeasibleSet::l2_ball(std::size_t dim, double radius) {
    return FeasibleSet(SetKind::L2Ball, dim, radius, Vec(), Vec());
}

FeasibleSet FeasibleSet::box(Vec lo, Vec hi) {
    const auto dim = static_cast<std::size_t>(lo.size());
    return FeasibleSet(SetKind::Box, dim, 0.0, std::move(lo), std::move(hi));
}

FeasibleSet FeasibleSet::box(std::size_t dim, double lo, double hi) {
    const auto n = static_cast<Eigen::Index>(dim);
    return box(Vec::Constant(n, lo), Vec::Constant(n, hi));
}

FeasibleSet FeasibleSet::simplex(std::size_t dim, double scale) {
    return FeasibleSet(SetKind::Simplex, dim, scale, Vec(), Vec());
}

void FeasibleSet::check_dim(const Vec &v, const char *op) const {
    if (static_cast<std::size_t>(v.size()) != dim_) {
        throw std::invalid_argument(std::string(op) + ": expected dimension " + std::to_string(dim_) + ", got " +
                                    std::to_string(v.size()));
    }
}

Vec FeasibleSet::lmo(const Vec &g) const {
    check_dim(g, "lmo");
    const auto n = static_cast<Eigen::Index>(dim_);
    Vec s = Vec::Zero(n);
    switch (kind_) {
        case SetKind::L1Ball: {
            Eigen::Index best = 0;
            double best_abs = std::abs(g[0]);
            for (Eigen::Index k = 1; k < n; ++k) {
                if (std::abs(g[k]) > best_abs) {
                    best_abs = std::abs(g[k]);
                    best = k;
                }
            }
            s[best] = g[best] > 0.0 ? -radius_ : radius_;
            break;
        }
        case SetKind::L2Ball: {
            const double norm = g.norm();
            if (norm == 0.0) {
                s[0] = radius_;
            } else {
                s = (-radius_ / norm) * g;
            }
            break;
        }
        case SetKind::Box: {
            for (Eigen::Index k = 0; k < n; ++k) s[k] = g[k] < 0.0 ? hi_[k] : lo_[k];
            break;
        }
        case SetKind::Simplex: {
            Eigen::Index best = 0;
            for (Eigen::Index k = 1; k < n; ++k) {
                if (g[k] < g[best]) best = k;
            }
            s[best] = radius_;
            break;
        }
    }
    return s;
}

double FeasibleSet::residual(const Vec &x) const {
    check_dim(x, "residual");
    switch (kind_) {
        case SetKind::L1Ball: return std::max(0.0, x.lpNorm<1>() - radius_);
        case SetKind::L2Ball: return std::max(0.0, x.norm() - radius_);
        case SetKind::Box: {
            double worst = 0.0;
            for (Eigen::Index k = 0; k < x.size(); ++k) {
                worst = std::max({worst, lo_[k] - x[k], x[k] - hi_[k]});
            }
            return worst;
        }
        case SetKind::Simplex: {
            double worst = std::abs(x.sum() - radius_);
            for (Eigen::Index k = 0; k < x.size(); ++k) worst = std::max(worst, -x[k]);
            return worst;
        }
    }
    return 0.0;
}

double FeasibleSet::diameter() const {
    switch (kind_) {
        case SetKind::L1Ball:
        case SetKind::L2Ball: return 2.0 * radius_;
        case SetKind::Box: return (hi_ - lo_).norm();
        case SetKind::Simplex: return radius_ * std::sqrt(2.0);
    }
    return 0.0;
}

namespace {

// Projection of v onto {w >= 0, sum w = z} by the sort-and-threshold rule.
Vec project_simplex(const Vec &v, double z) {
    std::vector<double> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cumulative += u[j];
        const double candidate = (cumulative - z) / static_cast<double>(j + 1);
        if (u[j] - candidate > 0.0) theta = candidate;
    }
    return (v.array() - theta).max(0.0).matrix();
}

}  // namespace

Vec FeasibleSet::project(const Vec &x) const {
    check_dim(x, "project");
    switch (kind_) {
        case SetKind::L2Ball: {
            const double norm = x.norm();
            return norm <= radius_ ? x : Vec((radius_ / norm) * x);
        }
        case SetKind::Box: return x.cwiseMax(lo_).cwiseMin(hi_);
        case SetKind::Simplex: return project_simplex(x, radius_);
        case SetKind::L1Ball: {
            if (x.lpNorm<1>() <= radius_) return x;
            const Vec magnitude = project_simplex(x.cwiseAbs(), radius_);
            Vec out(x.size());
            for (Eigen::Index k = 0; k < x.size(); ++k) out[k] = x[k] < 0.0 ? -magnitude[k] : magnitude[k];
            return out;
        }
    }
    return x;
}

Vec FeasibleSet::sample(RngStream &rng) const {
    const auto n = static_cast<Eigen::Index>(dim_);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    if (rng.uniform01() < 0.5) {
        Vec g(n);
        for (Eigen::Index k = 0; k < n; ++k) g[k] = normal(rng.engine());
        return lmo(g);
    }
    Vec x(n);
    switch (kind_) {
        case SetKind::L2Ball: {
            for (Eigen::Index k = 0; k < n; ++k) x[k] = normal(rng.engine());
            const double norm = x.norm();
            const double scale = radius_ * std::pow(rng.uniform01(), 1.0 / static_cast<double>(n));
            return norm > 0.0 ? Vec(x * (scale / norm)) : Vec(Vec::Zero(n));
        }
        case SetKind::L1Ball: {
            // Uniform on the l1 ball: signed exponentials normalized with one slack draw.
            double total = expo(rng.engine());
            for (Eigen::Index k = 0; k < n; ++k) {
                x[k] = expo(rng.engine());
                total += x[k];
                if (rng.uniform01() < 0.5) x[k] = -x[k];
            }
            return x * (radius_ / total);
        }
        case SetKind::Box: {
            for (Eigen::Index k = 0; k < n; ++k) x[k] = lo_[k] + (hi_[k] - lo_[k]) * rng.uniform01();
            return x;
        }
        case SetKind::Simplex: {
            for (Eigen::Index k = 0; k < n; ++k) x[k] = expo(rng.engine());
            return x * (radius_ / x.sum());
        }
    }
    return x;
}

std::string FeasibleSet::describe() const {
    std::ostringstream out;
    out << to_string(kind_) << "(dim=" << dim_;
    if (kind_ == SetKind::Box) {
        out << ", lo=[" << lo_.minCoeff() << ".." << lo_.maxCoeff() << "], hi=[" << hi_.minCoeff() << ".."
            << hi_.maxCoeff() << "]";
    } else {
        out << (kind_ == SetKind::Simplex ? ", scale=" : ", radius=") << radius_;
    }
    out << ")";
    return out.str();
}

}  // namespace fedfw
