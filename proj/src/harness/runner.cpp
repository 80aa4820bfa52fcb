#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include "fedfw/harness.hpp"

namespace fedfw {

namespace {

FeasibleSet make_set(const SetSpec &s, std::size_t dim) {
    switch (s.kind) {
        case SetKind::L1Ball: return FeasibleSet::l1_ball(dim, s.radius);
        case SetKind::L2Ball: return FeasibleSet::l2_ball(dim, s.radius);
        case SetKind::Box: return FeasibleSet::box(dim, s.lo, s.hi);
        case SetKind::Simplex: return FeasibleSet::simplex(dim, s.radius);
    }
    throw std::logic_error("unhandled set kind");
}

std::vector<ClientObjectivePtr> build_clients(const ProblemSpec &spec) {
    std::vector<ClientObjectivePtr> clients;
    switch (spec.kind) {
        case ProblemKind::Quadratic:
            for (const QuadraticSpec &q : spec.quadratics) {
                const Vec target = Eigen::Map<const Vec>(q.target.data(), static_cast<Eigen::Index>(q.target.size()));
                clients.push_back(std::make_shared<QuadraticClient>(target, q.weight, q.flipped, q.noise_std));
            }
            break;
        case ProblemKind::MclrSynthetic:
            for (Dataset &d : generate_synthetic(spec.synthetic)) {
                clients.push_back(std::make_shared<MclrClient>(std::move(d), spec.classes, spec.mu));
            }
            break;
        case ProblemKind::MclrCsv: {
            std::size_t features = 0;
            for (const auto &path : spec.csv_paths) {
                Dataset d = load_csv_dataset(path.string());
                if (features == 0) features = d.feature_dim();
                if (d.feature_dim() != features) {
                    throw ConfigError("problem.paths: '" + path.string() + "' has " + std::to_string(d.feature_dim()) +
                                      " features, expected " + std::to_string(features));
                }
                for (int label : d.labels) {
                    if (label < 0 || label >= spec.classes) {
                        throw ConfigError("problem.paths: '" + path.string() + "' has label " +
                                          std::to_string(label) + " outside [0, classes)");
                    }
                }
                clients.push_back(std::make_shared<MclrClient>(std::move(d), spec.classes, spec.mu));
            }
            break;
        }
    }
    return clients;
}

// Each client minimizes its own f_i over D at x* exactly when the consensus
// multiplier vanishes.
bool dual_is_zero(const Problem &problem, const Vec &x_star) {
    const FeasibleSet &set = problem.global_set();
    for (const auto &client : problem.clients) {
        const Vec g = client->gradient(x_star);
        const double gap = g.dot(x_star - set.lmo(g));
        if (gap > 1e-9 * std::max(1.0, g.norm())) return false;
    }
    return true;
}

double estimate_sigma(const Problem &problem, const Vec &x, std::size_t batch, std::uint64_t seed) {
    double worst = 0.0;
    for (const auto &client : problem.clients) {
        worst = std::max(worst, empirical_gradient_variance(*client, x, batch, 200, seed));
    }
    return std::sqrt(worst);
}

void write_text(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("short write on '" + path.string() + "'");
}

std::string optional_cell(const std::optional<double> &v) { return v ? format_double(*v) : std::string(); }

std::string short_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_quote(const std::string &s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += (c == '\n' || c == '\r') ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace

Problem build_problem(const RunConfig &config) {
    validate(config);
    std::vector<ClientObjectivePtr> clients = build_clients(config.problem);
    const std::size_t dim = clients.front()->dim();
    return make_problem(std::move(clients), make_set(config.feasible_set, dim));
}

RunResult execute_run(const RunConfig &config, std::size_t workers) {
    RunResult result;
    result.config = config;
    Problem problem = build_problem(config);
    const Vec x1 = initial_point(problem, config.init);
    FederationState state = initialize_state(problem, x1);
    if (!config.client_sets.empty()) {
        std::vector<FeasibleSet> sets;
        for (const SetSpec &s : config.client_sets) sets.push_back(make_set(s, problem.dim()));
        assign_split_constraints(state, problem, sets, config.seed);
    }

    Schedule schedule(config.regime, config.lambda0, config.rounds, config.participation);
    if (config.rho_override) schedule.override_rho(*config.rho_override);

    EngineConfig ec;
    ec.algorithm = config.algorithm;
    ec.schedule = schedule;
    ec.participation = {config.participation, config.seed};
    ec.batch_size = config.batch_size;
    ec.seed = config.seed;
    ec.verify = config.verify;
    ec.workers = workers;
    Engine engine(problem, ec);

    // Constants and references fixed before the first round.
    RunSummary &sum = result.summary;
    sum.smoothness = problem.smoothness();
    sum.diameter = problem.diameter();
    const bool convex = problem.convex();
    if (config.reference.fw_iterations > 0) {
        sum.reference = reference_optimum(problem, config.reference.fw_iterations);
        sum.G = gradient_bound_G(problem, sum.reference->x);
        if (!convex) sum.initial_gap = estimate_initial_gap(problem, x1, config.reference.fw_iterations);
    }
    if (config.reference.dual_norm) {
        sum.dual_norm = config.reference.dual_norm;
    } else if (convex && sum.reference && dual_is_zero(problem, sum.reference->x)) {
        sum.dual_norm = 0.0;
    }

    BoundConstants bc;
    bc.L = sum.smoothness;
    bc.n = static_cast<double>(problem.n());
    bc.D = sum.diameter;
    bc.lambda0 = config.lambda0;
    bc.G = sum.G;
    bc.E_init = sum.initial_gap.value_or(0.0);
    if (config.algorithm == AlgorithmKind::FedFWSto) {
        sum.sigma = config.reference.sigma ? *config.reference.sigma
                                           : estimate_sigma(problem, x1, config.batch_size, config.seed);
        bc.sigma = *sum.sigma;
        if (config.regime == Regime::StoT3) sum.shcgm = shcgm_constants(bc, state, problem);
    }
    if (config.regime == Regime::NonconvexT2 && sum.initial_gap) {
        sum.theorem2_bound = theorem2_gap_bound(bc, static_cast<double>(config.rounds));
    }

    const double lambda_T = schedule.at(config.rounds).lambda;
    sum.initial_surrogate_gap = surrogate_gap(state, problem, schedule.at(1).lambda);
    double window_sum = surrogate_gap(state, problem, lambda_T);
    sum.min_surrogate_gap = window_sum;

    const bool have_reference = convex && sum.reference.has_value();
    const bool theorem1 = have_reference && config.regime == Regime::ConvexT1 &&
                          config.algorithm == AlgorithmKind::FedFW && config.participation >= 1.0 &&
                          config.client_sets.empty();
    const bool consensus = convex && sum.dual_norm && config.regime == Regime::ConvexT1;

    result.rows.reserve(static_cast<std::size_t>(config.rounds));
    result.wall_ms.reserve(static_cast<std::size_t>(config.rounds));
    for (long t = 1; t <= config.rounds; ++t) {
        const auto start = std::chrono::steady_clock::now();
        const RoundReport report = engine.step(state);
        MetricsRow row;
        row.m = evaluate_round(state, problem, report.t, report.values, report.active_count, report.recursion_slack);
        result.wall_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());

        const auto td = static_cast<double>(t);
        if (have_reference) {
            row.objective_residual = row.m.objective - sum.reference->value;
            row.surrogate_residual = row.m.surrogate_value - sum.reference->value;
        }
        if (theorem1) row.theorem1_bound = theorem1_surrogate_bound(bc, td);
        if (consensus) row.consensus_bound = consensus_bound(bc, td, *sum.dual_norm);
        if (sum.shcgm) row.stochastic_bound = stochastic_objective_bound(*sum.shcgm, td);

        sum.max_recursion_slack = std::max(sum.max_recursion_slack, row.m.recursion_slack);
        for (const ClientSlot &slot : state.clients) {
            sum.max_client_residual = std::max(sum.max_client_residual, problem.sets.at(slot.set_id).residual(slot.x));
        }
        if (t < config.rounds) {
            // Row t describes X^{t+1}; X^1..X^T form the averaging window.
            window_sum += row.m.surrogate_gap;
            sum.min_surrogate_gap = std::min(sum.min_surrogate_gap, row.m.surrogate_gap);
        }
        result.rows.push_back(row);
    }
    sum.mean_surrogate_gap = window_sum / static_cast<double>(config.rounds);

    if (config.baseline) {
        const std::vector<Vec> trajectory = run_naive_baseline(problem, x1, config.rounds);
        for (std::size_t k = 0; k < trajectory.size(); ++k) {
            result.baseline.push_back({static_cast<long>(k + 1), problem.objective(trajectory[k]),
                                       trajectory[k].lpNorm<Eigen::Infinity>()});
        }
    }
    result.final_state = std::move(state);
    return result;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::string metrics_csv(const std::vector<MetricsRow> &rows) {
    std::string out =
        "t,objective,objective_residual,fw_gap,surrogate_gap,consensus_dist,surrogate_value,surrogate_residual,"
        "theorem1_bound,consensus_bound,stochastic_bound,eta,lambda,rho,active_count,xbar_residual,recursion_slack\n";
    for (const MetricsRow &r : rows) {
        const RoundMetrics &m = r.m;
        out += std::to_string(m.t) + ',' + format_double(m.objective) + ',' + optional_cell(r.objective_residual) +
               ',' + format_double(m.fw_gap) + ',' + format_double(m.surrogate_gap) + ',' +
               format_double(m.consensus_dist) + ',' + format_double(m.surrogate_value) + ',' +
               optional_cell(r.surrogate_residual) + ',' + optional_cell(r.theorem1_bound) + ',' +
               optional_cell(r.consensus_bound) + ',' + optional_cell(r.stochastic_bound) + ',' +
               format_double(m.values.eta) + ',' + format_double(m.values.lambda) + ',' +
               format_double(m.values.rho) + ',' + std::to_string(m.active_count) + ',' +
               format_double(m.xbar_residual) + ',' + format_double(m.recursion_slack) + '\n';
    }
    return out;
}

std::string baseline_csv(const std::vector<BaselineRow> &rows) {
    std::string out = "t,objective,xbar_inf_norm\n";
    for (const BaselineRow &r : rows) {
        out += std::to_string(r.t) + ',' + format_double(r.objective) + ',' + format_double(r.xbar_inf_norm) + '\n';
    }
    return out;
}

std::string report_json(const RunResult &result) {
    using nlohmann::json;
    const RunSummary &s = result.summary;
    json j;
    j["name"] = result.config.name;
    j["rounds"] = result.config.rounds;
    j["smoothness"] = s.smoothness;
    j["diameter"] = s.diameter;
    j["G"] = s.G;
    if (s.reference) {
        j["reference"] = {{"value", s.reference->value},
                          {"exact", s.reference->exact},
                          {"x", std::vector<double>(s.reference->x.data(), s.reference->x.data() + s.reference->x.size())}};
    }
    if (s.dual_norm) j["dual_norm"] = *s.dual_norm;
    if (s.sigma) j["sigma"] = *s.sigma;
    if (s.shcgm) j["shcgm"] = {{"C", s.shcgm->C}, {"Q", s.shcgm->Q}};
    if (s.initial_gap) j["initial_gap_estimate"] = *s.initial_gap;
    if (s.theorem2_bound) j["theorem2_bound"] = *s.theorem2_bound;
    j["initial_surrogate_gap"] = s.initial_surrogate_gap;
    j["mean_surrogate_gap"] = s.mean_surrogate_gap;
    j["min_surrogate_gap"] = s.min_surrogate_gap;
    j["max_recursion_slack"] = s.max_recursion_slack;
    j["max_client_residual"] = s.max_client_residual;
    if (!result.rows.empty()) {
        const RoundMetrics &last = result.rows.back().m;
        j["final"] = {{"objective", last.objective},
                      {"fw_gap", last.fw_gap},
                      {"surrogate_gap", last.surrogate_gap},
                      {"consensus_dist", last.consensus_dist}};
    }
    return j.dump(2) + "\n";
}

void write_run_artifacts(const RunResult &result, const std::filesystem::path &dir) {
    std::filesystem::create_directories(dir);
    write_text(dir / "metrics.csv", metrics_csv(result.rows));
    std::string timing = "t,wall_ms\n";
    for (std::size_t k = 0; k < result.wall_ms.size(); ++k) {
        timing += std::to_string(k + 1) + ',' + format_double(result.wall_ms[k]) + '\n';
    }
    write_text(dir / "timing.csv", timing);
    save_model(dir / "final_model.bin", result.final_state.x_bar);
    write_text(dir / "resolved_config.json", dump_run_config(result.config));
    write_text(dir / "report.json", report_json(result));
    if (result.config.baseline) write_text(dir / "baseline.csv", baseline_csv(result.baseline));
}

std::vector<SweepCell> run_sweep(const SweepConfig &sweep, const std::filesystem::path &out, std::size_t workers) {
    const std::vector<RunConfig> configs = expand_grid(sweep);
    std::vector<SweepCell> cells(configs.size());
    std::filesystem::create_directories(out);

    auto run_cell = [&](std::size_t k) {
        RunConfig config = configs[k];
        SweepCell &cell = cells[k];
        cell.lambda0 = config.lambda0;
        cell.participation = config.participation;
        cell.seed = config.seed;
        cell.label = "l0=" + short_number(config.lambda0) + "_p=" + short_number(config.participation) +
                     "_seed=" + std::to_string(config.seed);
        config.output_dir = out / cell.label;
        try {
            const RunResult r = execute_run(config, 1);
            write_run_artifacts(r, config.output_dir);
            const RoundMetrics &last = r.rows.back().m;
            cell.final_objective = last.objective;
            cell.final_residual = r.rows.back().objective_residual;
            cell.final_fw_gap = last.fw_gap;
            cell.final_surrogate_gap = last.surrogate_gap;
            cell.round1_surrogate_gap = r.rows.front().m.surrogate_gap;
            cell.ok = true;
        } catch (const std::exception &e) {
            cell.ok = false;
            cell.error = e.what();
        }
    };

    if (workers <= 1) {
        for (std::size_t k = 0; k < configs.size(); ++k) run_cell(k);
    } else {
        tbb::global_control limit(tbb::global_control::max_allowed_parallelism, workers);
        tbb::task_arena arena(static_cast<int>(workers));
        arena.execute([&] { tbb::parallel_for(std::size_t{0}, configs.size(), run_cell); });
    }
    write_text(out / "summary.csv", summary_csv(cells));
    return cells;
}

std::string summary_csv(const std::vector<SweepCell> &cells) {
    std::string out =
        "cell,lambda0,participation,seed,status,final_objective,final_residual,final_fw_gap,final_surrogate_gap,"
        "round1_surrogate_gap,error\n";
    for (const SweepCell &c : cells) {
        out += c.label + ',' + format_double(c.lambda0) + ',' + format_double(c.participation) + ',' +
               std::to_string(c.seed) + ',' + (c.ok ? "ok" : "failed") + ',' + optional_cell(c.final_objective) +
               ',' + optional_cell(c.final_residual) + ',' + optional_cell(c.final_fw_gap) + ',' +
               optional_cell(c.final_surrogate_gap) + ',' + optional_cell(c.round1_surrogate_gap) + ',' +
               (c.error.empty() ? std::string() : csv_quote(c.error)) + '\n';
    }
    return out;
}

}  // namespace fedfw
