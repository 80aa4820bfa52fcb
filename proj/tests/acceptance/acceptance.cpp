// Acceptance suite: `acceptance N` checks criterion N, `acceptance` checks all.
// Each criterion prints one PASS/FAIL line and the exit code is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fedfw/harness.hpp"

using namespace fedfw;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string fmt(const char *pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

RunConfig preset_config(const std::string &name) { return parse_sweep_config(find_preset(name).json).base; }

Schedule schedule_of(const RunConfig &c) {
    Schedule s(c.regime, c.lambda0, c.rounds, c.participation);
    if (c.rho_override) s.override_rho(*c.rho_override);
    return s;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / ("fedfw-acceptance-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// 1. Naive averaging is stuck at 0; FedFW reaches x* = 1.
Outcome counterexample_separation() {
    const RunConfig c = preset_config("counterexample");
    const Problem p = build_problem(c);
    const Vec x0 = Vec::Zero(1);
    double naive_worst = 0.0;
    for (const Vec &x : run_naive_baseline(p, x0, 10000)) naive_worst = std::max(naive_worst, std::abs(x[0]));

    EngineConfig cfg;
    cfg.schedule = Schedule::convex(0.01);
    Engine e(p, cfg);
    FederationState s = initialize_state(p, x0);
    for (long t = 1; t <= 10000; ++t) e.step(s);
    const double miss = std::abs(s.x_bar[0] - 1.0);
    return {naive_worst <= 1e-12 && miss <= 0.05,
            fmt("naive max|xbar|=%.3e (tol 1e-12), fedfw l0=0.01 |xbar-1|=%.4f at t=1e4 (tol 0.05)", naive_worst, miss)};
}

// 2. F_t(X^{t+1}) - F(x*) <= 2 n D^2 ((L/n)/(t+1) + l0/sqrt(t+1)) + 1e-9 for t <= 1e4.
Outcome convex_surrogate_inequality() {
    const RunConfig c = preset_config("thm1-quadratic");
    const RunResult r = execute_run(c);
    const Problem p = build_problem(c);
    const double n = static_cast<double>(p.n()), D = p.diameter(), L = p.smoothness();
    const Vec x_star = Vec(Eigen::Vector3d(0.5, 1.0, 0.5)) / std::sqrt(1.5);
    const double f_star = p.objective(x_star);
    double worst = -1e300;
    long worst_t = 0;
    for (const MetricsRow &row : r.rows) {
        const double t = static_cast<double>(row.m.t);
        const double bound = 2.0 * n * D * D * ((L / n) / (t + 1.0) + c.lambda0 / std::sqrt(t + 1.0));
        const double slack = row.m.surrogate_value - f_star - bound;
        if (slack > worst) {
            worst = slack;
            worst_t = row.m.t;
        }
    }
    return {worst <= 1e-9 && r.rows.size() == 10000,
            fmt("max (residual - bound)=%.3e at t=%ld over %zu rounds (tol 1e-9)", worst, worst_t, r.rows.size())};
}

// 3. log-log slope of F(xbar^t) - F* over [1e2, 1e4] is <= -0.40.
Outcome convex_rate() {
    const RunConfig c = preset_config("thm1-quadratic");
    const RunResult r = execute_run(c);
    const Problem p = build_problem(c);
    const double f_star = p.objective(Vec(Eigen::Vector3d(0.5, 1.0, 0.5)) / std::sqrt(1.5));
    double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
    std::size_t skipped = 0;
    for (const MetricsRow &row : r.rows) {
        if (row.m.t < 100 || row.m.t > 10000) continue;
        const double residual = row.m.objective - f_star;
        if (residual <= 0.0) {
            ++skipped;
            continue;
        }
        const double x = std::log(static_cast<double>(row.m.t)), y = std::log(residual);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        m += 1;
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return {slope <= -0.40, fmt("slope=%.3f over %.0f rounds, %zu non-positive residuals skipped (tol -0.40)", slope, m,
                                skipped)};
}

// 4. Mean surrogate gap under the non-convex bound for T in {1e2, 1e3}; min gap shrinks; gaps >= -1e-9.
Outcome nonconvex_gap_bound() {
    RunConfig c = preset_config("thm2-nonconvex");
    std::string detail;
    bool ok = true;
    double min_gap[2] = {0, 0};
    int k = 0;
    for (long T : {100L, 1000L}) {
        c.rounds = T;
        const RunResult r = execute_run(c);
        const Problem p = build_problem(c);
        const double n = static_cast<double>(p.n()), D = p.diameter(), L = p.smoothness();
        const double E = *r.summary.initial_gap;
        const double bound = (E + n * D * D * c.lambda0 / 2.0) / std::cbrt(static_cast<double>(T)) +
                             (L * D * D / 2.0) / std::pow(std::cbrt(static_cast<double>(T)), 2);
        double lowest = r.summary.initial_surrogate_gap;
        for (const MetricsRow &row : r.rows) lowest = std::min(lowest, row.m.surrogate_gap);
        ok = ok && r.summary.mean_surrogate_gap <= bound && lowest >= -1e-9;
        min_gap[k++] = r.summary.min_surrogate_gap;
        detail += fmt("T=%ld mean=%.4f bound=%.4f (E=%.4f) min=%.3e; ", T, r.summary.mean_surrogate_gap, bound, E,
                      r.summary.min_surrogate_gap);
    }
    ok = ok && min_gap[1] <= min_gap[0];
    return {ok, detail + "min gap nonincreasing in T"};
}

// 5. Stochastic variant: median residual at 1e4 below a third of the median at 1e2, over 10 seeds.
Outcome stochastic_convergence() {
    const RunConfig c = preset_config("thm3-sto");
    const Problem p = build_problem(c);
    const ReferenceSolution ref = reference_optimum(p, c.reference.fw_iterations);
    std::vector<double> early, late;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        EngineConfig cfg;
        cfg.algorithm = AlgorithmKind::FedFWSto;
        cfg.schedule = schedule_of(c);
        cfg.batch_size = c.batch_size;
        cfg.seed = seed;
        Engine e(p, cfg);
        FederationState s = initialize_state(p, initial_point(p, c.init));
        for (long t = 1; t <= 10000; ++t) {
            e.step(s);
            if (t == 100) early.push_back(p.objective(s.x_bar) - ref.value);
        }
        late.push_back(p.objective(s.x_bar) - ref.value);
    }
    const double a = median(early), b = median(late);
    return {b < a / 3.0, fmt("%zu clients, batch %zu: median residual t=1e2 %.4e, t=1e4 %.4e, ratio %.4f (tol < 1/3)",
                             p.n(), c.batch_size, a, b, b / a)};
}

// 6. p = 1 partial participation equals full FedFW; median final residual nonincreasing in p.
Outcome partial_participation() {
    const SweepConfig sweep = parse_sweep_config(find_preset("pp-sweep").json);
    const Problem p = build_problem(sweep.base);
    const double lambda0 = 1.0;
    EngineConfig full;
    full.schedule = Schedule::convex(lambda0);
    EngineConfig partial;
    partial.schedule = Schedule::partial_convex(lambda0, 1.0);
    partial.participation = {1.0, 1};
    Engine a(p, full), b(p, partial);
    const Vec x0 = initial_point(p, sweep.base.init);
    FederationState sa = initialize_state(p, x0), sb = sa;
    double diff = 0.0;
    for (long t = 1; t <= sweep.base.rounds; ++t) {
        a.step(sa);
        b.step(sb);
        diff = std::max(diff, (sa.x_bar - sb.x_bar).lpNorm<Eigen::Infinity>());
        for (std::size_t i = 0; i < sa.size(); ++i) {
            diff = std::max(diff, (sa.clients[i].x - sb.clients[i].x).lpNorm<Eigen::Infinity>());
        }
    }

    std::vector<double> ps = sweep.grid.participation;
    std::sort(ps.begin(), ps.end());
    std::vector<double> medians;
    std::string detail = fmt("p=1 max diff %.1e (tol 1e-12); l0=%g median final residual:", diff, lambda0);
    for (double prob : ps) {
        std::vector<double> residuals;
        for (const RunConfig &cell : expand_grid(sweep)) {
            if (cell.lambda0 != lambda0 || cell.participation != prob) continue;
            residuals.push_back(*execute_run(cell).rows.back().objective_residual);
        }
        medians.push_back(median(residuals));
        detail += fmt(" p=%g %.3e (%zu seeds)", prob, medians.back(), residuals.size());
    }
    bool monotone = true;
    for (std::size_t k = 1; k < medians.size(); ++k) monotone = monotone && medians[k] <= medians[k - 1];
    return {diff <= 1e-12 && monotone, detail};
}

// 7. LMO against 1e5 sampled feasible points for 1000 gradients per set kind, plus extreme-point form.
Outcome lmo_oracle() {
    const std::size_t dim = 5;
    const std::vector<FeasibleSet> sets = {FeasibleSet::l1_ball(dim, 1.0), FeasibleSet::l2_ball(dim, 1.0),
                                           FeasibleSet::box(dim, -1.0, 2.0), FeasibleSet::simplex(dim, 1.0)};
    bool ok = true;
    std::string detail;
    for (const FeasibleSet &set : sets) {
        const InvariantResult opt = check_lmo_optimality(set, 1000, 100000, 7);
        const InvariantResult ext = check_extreme_points(set, 1000, 7);
        ok = ok && opt.passed && ext.passed;
        detail += fmt("%s excess=%.1e extreme=%s; ", to_string(set.kind()).c_str(), opt.worst, ext.passed ? "ok" : "BAD");
    }
    return {ok, detail};
}

// 8. With x frozen, the averaged estimator approaches (1/n) grad f.
Outcome estimator_variance() {
    const RunConfig c = preset_config("thm3-sto");
    const Problem p = build_problem(c);
    const ClientObjective &f = *p.clients.front();
    const Vec x = initial_point(p, InitMode::Vertex);
    const Vec target = f.gradient(x) / static_cast<double>(p.n());
    const Schedule sched = Schedule::stochastic(c.lambda0);
    std::vector<double> at10, at1000;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        ClientSlot slot{x, Vec::Zero(x.size()), Vec::Zero(x.size()), 0};
        for (long t = 1; t <= 1000; ++t) {
            RngStream rng(seed, 0, static_cast<std::uint64_t>(t));
            const ScheduleValues v = sched.at(t);
            slot.x = x;
            client_step_fedfw_sto(slot, x, v.eta, v.lambda, v.rho, p.global_set(), f, p.n(), c.batch_size, rng);
            if (t == 10) at10.push_back((slot.d - target).norm());
        }
        at1000.push_back((slot.d - target).norm());
    }
    const double a = median(at10), b = median(at1000);
    return {b < a, fmt("median |d - grad/n|: t=10 %.4e, t=1e3 %.4e", a, b)};
}

// 9. Larger l0 gives a larger round-1 surrogate gap on the sweep preset.
Outcome lambda_ablation() {
    const SweepConfig sweep = parse_sweep_config(find_preset("pp-sweep").json);
    bool ok = true;
    std::string detail;
    for (const RunConfig &cell : expand_grid(sweep)) {
        if (cell.participation != 1.0 || cell.lambda0 != 1e-2) continue;
        RunConfig low = cell;
        low.lambda0 = 1e-3;
        const double g_hi = execute_run(cell).rows.front().m.surrogate_gap;
        const double g_lo = execute_run(low).rows.front().m.surrogate_gap;
        ok = ok && g_hi > g_lo;
        detail += fmt("seed %llu: %.4e > %.4e; ", static_cast<unsigned long long>(cell.seed), g_hi, g_lo);
    }
    return {ok && !detail.empty(), "round-1 surrogate gap l0=1e-2 vs 1e-3, p=1: " + detail};
}

// 10. Every preset twice, at different worker counts, gives byte-identical metrics.csv.
Outcome determinism() {
    const fs::path root = scratch("determinism");
    bool ok = true;
    std::string detail;
    for (const Preset &preset : presets()) {
        SweepConfig sweep = parse_sweep_config(preset.json);
        if (preset.name == "thm3-sto") {
            // The full run takes ~20 s; a shortened horizon exercises the same code paths.
            sweep.base.rounds = 1000;
            sweep.base.reference.fw_iterations = 2000;
        }
        std::size_t files = 0, mismatches = 0;
        if (preset.sweep) {
            run_sweep(sweep, root / preset.name / "a", 1);
            run_sweep(sweep, root / preset.name / "b", 3);
            for (const auto &entry : fs::directory_iterator(root / preset.name / "a")) {
                if (!entry.is_directory()) continue;
                const fs::path rel = entry.path().filename() / "metrics.csv";
                ++files;
                const std::string lhs = slurp(root / preset.name / "a" / rel);
                if (lhs.empty() || lhs != slurp(root / preset.name / "b" / rel)) ++mismatches;
            }
        } else {
            write_run_artifacts(execute_run(sweep.base, 1), root / preset.name / "a");
            write_run_artifacts(execute_run(sweep.base, 3), root / preset.name / "b");
            ++files;
            const std::string lhs = slurp(root / preset.name / "a" / "metrics.csv");
            if (lhs.empty() || lhs != slurp(root / preset.name / "b" / "metrics.csv")) ++mismatches;
        }
        ok = ok && files > 0 && mismatches == 0;
        detail += fmt("%s %zu/%zu identical; ", preset.name.c_str(), files - mismatches, files);
    }
    return {ok, detail + "workers 1 vs 3"};
}

struct Criterion {
    const char *name;
    double limit_s;  // 0: no runtime requirement
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char **argv) {
    const std::vector<Criterion> criteria = {
        {"counterexample separation", 2, counterexample_separation},
        {"convex surrogate inequality", 5, convex_surrogate_inequality},
        {"convex rate slope", 5, convex_rate},
        {"non-convex gap bound", 10, nonconvex_gap_bound},
        {"stochastic convergence", 60, stochastic_convergence},
        {"partial participation", 10, partial_participation},
        {"lmo oracle equivalence", 5, lmo_oracle},
        {"estimator variance decay", 2, estimator_variance},
        {"lambda0 ablation", 0, lambda_ablation},
        {"determinism", 0, determinism},
    };

    std::vector<std::size_t> selected;
    if (argc > 1) {
        for (int k = 1; k < argc; ++k) {
            const int id = std::atoi(argv[k]);
            if (id < 1 || id > static_cast<int>(criteria.size())) {
                std::fprintf(stderr, "unknown criterion '%s' (expected 1-%zu)\n", argv[k], criteria.size());
                return 2;
            }
            selected.push_back(static_cast<std::size_t>(id - 1));
        }
    } else {
        for (std::size_t k = 0; k < criteria.size(); ++k) selected.push_back(k);
    }

    int failures = 0;
    for (std::size_t k : selected) {
        const Criterion &c = criteria[k];
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception &e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = c.limit_s <= 0 || secs < c.limit_s;
        const bool pass = out.ok && in_time;
        failures += pass ? 0 : 1;
        std::string timing = c.limit_s > 0 ? fmt("%.2fs (limit %gs)", secs, c.limit_s) : fmt("%.2fs", secs);
        std::printf("%s %zu %s: %s [%s]\n", pass ? "PASS" : "FAIL", k + 1, c.name, out.detail.c_str(), timing.c_str());
        std::fflush(stdout);
    }
    return failures;
}
