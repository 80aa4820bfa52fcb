#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "fedfw/harness.hpp"

namespace fedfw {

namespace {

Vec gaussian(std::size_t dim, RngStream &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec g(static_cast<Eigen::Index>(dim));
    for (Eigen::Index j = 0; j < g.size(); ++j) g[j] = normal(rng.engine());
    return g;
}

Vec call_lmo(const LmoFn &lmo, const FeasibleSet &set, const Vec &g) { return lmo ? lmo(set, g) : set.lmo(g); }

std::string sci(double v) {
    std::ostringstream ss;
    ss.precision(3);
    ss << std::scientific << v;
    return ss.str();
}

InvariantResult make_result(std::string name, double worst, double tolerance, std::string detail = {}) {
    InvariantResult r;
    r.name = std::move(name);
    r.worst = worst;
    r.tolerance = tolerance;
    r.passed = std::isfinite(worst) && worst <= tolerance;
    r.detail = std::move(detail);
    return r;
}

// Deviation of s from the extreme-point form of the set; 0 for a perfect vertex.
double vertex_defect(const FeasibleSet &set, const Vec &s) {
    const double scale = std::max(1.0, set.radius());
    switch (set.kind()) {
        case SetKind::L1Ball:
        case SetKind::Simplex: {
            Eigen::Index k = 0;
            s.cwiseAbs().maxCoeff(&k);
            double rest = 0.0;
            for (Eigen::Index j = 0; j < s.size(); ++j) {
                if (j != k) rest = std::max(rest, std::abs(s[j]));
            }
            const double target = set.kind() == SetKind::Simplex ? s[k] - set.radius() : std::abs(s[k]) - set.radius();
            return std::max(rest, std::abs(target)) / scale;
        }
        case SetKind::L2Ball: return std::abs(s.norm() - set.radius()) / scale;
        case SetKind::Box: {
            double worst = 0.0;
            for (Eigen::Index j = 0; j < s.size(); ++j) {
                const double d = std::min(std::abs(s[j] - set.lo()[j]), std::abs(s[j] - set.hi()[j]));
                worst = std::max(worst, d / std::max({1.0, std::abs(set.lo()[j]), std::abs(set.hi()[j])}));
            }
            return worst;
        }
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace

InvariantResult check_lmo_optimality(const FeasibleSet &set, std::size_t gradients, std::size_t points,
                                     std::uint64_t seed, const LmoFn &lmo) {
    const auto dim = static_cast<Eigen::Index>(set.dim());
    Mat cloud(static_cast<Eigen::Index>(points), dim);
    RngStream cloud_rng(seed, 0, 0, StreamKind::Sampling);
    for (std::size_t k = 0; k < points; ++k) cloud.row(static_cast<Eigen::Index>(k)) = set.sample(cloud_rng).transpose();

    constexpr std::size_t kBlock = 64;
    double worst = -std::numeric_limits<double>::infinity();
    double worst_residual = 0.0;
    for (std::size_t start = 0; start < gradients; start += kBlock) {
        const std::size_t count = std::min(kBlock, gradients - start);
        Mat G(dim, static_cast<Eigen::Index>(count));
        Vec achieved(static_cast<Eigen::Index>(count));
        for (std::size_t k = 0; k < count; ++k) {
            RngStream rng(seed, 1, start + k, StreamKind::Sampling);
            const Vec g = gaussian(set.dim(), rng);
            const Vec s = call_lmo(lmo, set, g);
            worst_residual = std::max(worst_residual, set.residual(s));
            G.col(static_cast<Eigen::Index>(k)) = g;
            achieved[static_cast<Eigen::Index>(k)] = g.dot(s);
        }
        // Chunked so each partial product stays in cache.
        constexpr Eigen::Index kChunk = 2048;
        Vec lowest = Vec::Constant(static_cast<Eigen::Index>(count), std::numeric_limits<double>::infinity());
        for (Eigen::Index row = 0; row < cloud.rows(); row += kChunk) {
            const Eigen::Index rows = std::min(kChunk, cloud.rows() - row);
            const Mat values = cloud.middleRows(row, rows) * G;
            lowest = lowest.cwiseMin(values.colwise().minCoeff().transpose());
        }
        for (std::size_t k = 0; k < count; ++k) {
            const auto c = static_cast<Eigen::Index>(k);
            worst = std::max(worst, achieved[c] - lowest[c]);
        }
    }
    InvariantResult r = make_result("lmo-optimality[" + set.describe() + "]", worst, 1e-9,
                                    std::to_string(gradients) + " gradients vs " + std::to_string(points) +
                                        " sampled points");
    if (worst_residual > 1e-9) {
        r.passed = false;
        r.detail += "; LMO output infeasible by " + sci(worst_residual);
    }
    return r;
}

InvariantResult check_extreme_points(const FeasibleSet &set, std::size_t gradients, std::uint64_t seed,
                                     const LmoFn &lmo) {
    double worst = 0.0;
    for (std::size_t k = 0; k < gradients; ++k) {
        RngStream rng(seed, 2, k, StreamKind::Sampling);
        const Vec g = gaussian(set.dim(), rng);
        const Vec s = call_lmo(lmo, set, g);
        worst = std::max({worst, vertex_defect(set, s), set.residual(s)});
    }
    const Vec zero_out = call_lmo(lmo, set, Vec::Zero(static_cast<Eigen::Index>(set.dim())));
    worst = std::max({worst, vertex_defect(set, zero_out), set.residual(zero_out)});
    return make_result("extreme-points[" + set.describe() + "]", worst, 1e-12,
                       std::to_string(gradients) + " gradients plus the zero gradient");
}

InvariantResult check_gradient(const ClientObjective &objective, const FeasibleSet &set, std::size_t points,
                               std::uint64_t seed) {
    double worst = 0.0;
    for (std::size_t k = 0; k < points; ++k) {
        RngStream rng(seed, 3, k, StreamKind::Sampling);
        const Vec x = set.sample(rng);
        const Vec grad = objective.gradient(x);
        for (int dir = 0; dir < 10; ++dir) {
            Vec u = gaussian(set.dim(), rng);
            u /= u.norm();
            const double h = 1e-5 * std::max(1.0, x.lpNorm<Eigen::Infinity>());
            const double fd = (objective.value(x + h * u) - objective.value(x - h * u)) / (2.0 * h);
            const double exact = grad.dot(u);
            worst = std::max(worst, std::abs(fd - exact) / std::max(1.0, std::abs(exact)));
        }
    }
    return make_result("gradient-fd", worst, 1e-6,
                       std::to_string(points) + " points x 10 directions, central differences");
}

std::vector<InvariantResult> verify_config(const RunConfig &config, const VerifyOptions &options) {
    std::vector<InvariantResult> out;
    const std::uint64_t seed = config.seed;

    // Static oracle checks on every set in play.
    {
        Problem problem = build_problem(config);
        std::vector<FeasibleSet> sets = {problem.global_set()};
        for (const SetSpec &s : config.client_sets) {
            RunConfig single = config;
            single.feasible_set = s;
            single.client_sets.clear();
            sets.push_back(build_problem(single).global_set());
        }
        for (const FeasibleSet &set : sets) {
            out.push_back(check_lmo_optimality(set, options.lmo_gradients, options.lmo_points, seed, options.lmo));
            out.push_back(check_extreme_points(set, options.lmo_gradients, seed, options.lmo));
        }
        const std::size_t checked = std::min<std::size_t>(problem.n(), 10);
        for (std::size_t i = 0; i < checked; ++i) {
            InvariantResult r = check_gradient(*problem.clients[i], problem.global_set(), options.fd_points, seed + i);
            r.name += "[client " + std::to_string(i) + "]";
            out.push_back(std::move(r));
        }
    }

    // Live run with the engine's own assertions switched on.
    RunConfig live = config;
    live.verify = true;
    RunResult run;
    try {
        run = execute_run(live, options.workers);
    } catch (const std::exception &e) {
        out.push_back(make_result("live-run", std::numeric_limits<double>::infinity(), 0.0, e.what()));
        return out;
    }
    out.push_back(make_result("live-run", 0.0, 0.0, std::to_string(run.rows.size()) + " rounds"));

    double xbar_residual = 0.0;
    double negative_gap = -std::numeric_limits<double>::infinity();
    double lambda_drop = 0.0;
    double eta_excess = 0.0;
    bool finite = true;
    double prev_lambda = 0.0;
    for (const MetricsRow &row : run.rows) {
        const RoundMetrics &m = row.m;
        xbar_residual = std::max(xbar_residual, m.xbar_residual);
        negative_gap = std::max({negative_gap, -m.fw_gap, -m.surrogate_gap});
        lambda_drop = std::max(lambda_drop, prev_lambda - m.values.lambda);
        prev_lambda = m.values.lambda;
        eta_excess = std::max({eta_excess, m.values.eta - 1.0, -m.values.eta});
        for (double v : {m.objective, m.fw_gap, m.surrogate_gap, m.consensus_dist, m.surrogate_value}) {
            finite = finite && std::isfinite(v);
        }
    }
    out.push_back(make_result("finite-metrics", finite ? 0.0 : std::numeric_limits<double>::infinity(), 0.0));
    out.push_back(make_result("client-feasibility", run.summary.max_client_residual, 1e-9));
    out.push_back(make_result("xbar-feasibility", xbar_residual, 1e-9));
    out.push_back(make_result("gap-nonnegative", negative_gap, 1e-9, "worst of -fw_gap and -surrogate_gap"));
    out.push_back(make_result("lambda-monotone", lambda_drop, 0.0));
    out.push_back(make_result("eta-in-unit-interval", eta_excess, 0.0));

    if (config.participation >= 1.0 && config.algorithm != AlgorithmKind::NaiveAvgFW) {
        out.push_back(make_result("recursion-vs-mean", run.summary.max_recursion_slack, 1e-9,
                                  "server recursion against the exact client mean"));
    }

    if (!run.rows.empty() && run.rows.front().theorem1_bound) {
        double excess = -std::numeric_limits<double>::infinity();
        for (const MetricsRow &row : run.rows) {
            excess = std::max(excess, *row.surrogate_residual - *row.theorem1_bound);
        }
        out.push_back(make_result("theorem1-bound", excess, 1e-9, "surrogate residual minus bound, every round"));
    }
    if (run.summary.theorem2_bound) {
        out.push_back(make_result("theorem2-bound", run.summary.mean_surrogate_gap - *run.summary.theorem2_bound, 0.0,
                                  "mean surrogate gap minus bound"));
    }

    // Model file round trip.
    {
        const auto path = std::filesystem::temp_directory_path() /
                          ("fedfw-verify-" + std::to_string(std::hash<std::string>{}(config.name)) + "-" +
                           std::to_string(seed) + ".bin");
        double mismatch = std::numeric_limits<double>::infinity();
        try {
            save_model(path, run.final_state.x_bar);
            const Vec back = load_model(path);
            mismatch = back.size() == run.final_state.x_bar.size() && back == run.final_state.x_bar ? 0.0 : 1.0;
        } catch (const std::exception &) {
        }
        std::error_code ec;
        std::filesystem::remove(path, ec);
        out.push_back(make_result("model-roundtrip", mismatch, 0.0));
    }

    // Same seed, different worker count: metrics must match byte for byte.
    {
        const std::size_t other = options.workers <= 1 ? 2 : 1;
        RunConfig again = config;
        again.verify = false;
        const RunResult rerun = execute_run(again, other);
        const bool same = metrics_csv(rerun.rows) == metrics_csv(run.rows) &&
                          rerun.final_state.x_bar == run.final_state.x_bar;
        out.push_back(make_result("determinism", same ? 0.0 : 1.0, 0.0,
                                  "workers " + std::to_string(options.workers) + " vs " + std::to_string(other)));
    }
    return out;
}

}  // namespace fedfw
