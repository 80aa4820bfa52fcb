#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedfw/engine.hpp"

namespace fedfw {

// ---------------------------------------------------------------------------
// Configuration

struct SetSpec {
    SetKind kind = SetKind::L2Ball;
    double radius = 1.0;  // balls: radius, simplex: scale
    double lo = -1.0;     // box only
    double hi = 1.0;
};

struct QuadraticSpec {
    std::vector<double> target;
    double weight = 1.0;
    bool flipped = false;
    double noise_std = 0.0;
};

enum class ProblemKind { Quadratic, MclrSynthetic, MclrCsv };

struct ProblemSpec {
    ProblemKind kind = ProblemKind::Quadratic;
    std::vector<QuadraticSpec> quadratics;
    SyntheticSpec synthetic;
    std::vector<std::filesystem::path> csv_paths;  // one file per client
    int classes = 10;
    double mu = 0.0;
};

struct ReferenceSpec {
    /// Centralized FW iterations for F* (convex problems) and the initial gap
    /// estimate (non-convex problems). 0 disables both.
    std::size_t fw_iterations = 10000;
    /// Norm of the consensus dual solution. When absent it is taken as 0 if x*
    /// minimizes every client over D, otherwise the consensus bound is omitted.
    std::optional<double> dual_norm;
    /// Gradient-noise bound; estimated at X^1 when absent.
    std::optional<double> sigma;
};

struct RunConfig {
    std::string name = "run";
    AlgorithmKind algorithm = AlgorithmKind::FedFW;
    Regime regime = Regime::ConvexT1;
    double lambda0 = 1e-2;
    std::optional<double> rho_override;
    long rounds = 100;
    double participation = 1.0;
    SetSpec feasible_set;
    std::vector<SetSpec> client_sets;  // empty, or one superset of D per client
    ProblemSpec problem;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    InitMode init = InitMode::Vertex;
    std::filesystem::path output_dir = "fedfw-out";
    bool verify = false;
    /// Also run the naive local-FW-then-average baseline and write baseline.csv.
    bool baseline = false;
    ReferenceSpec reference;
};

struct SweepGrid {
    std::vector<double> lambda0;
    std::vector<double> participation;
    std::vector<std::uint64_t> seed;
};

struct SweepConfig {
    RunConfig base;
    SweepGrid grid;  // empty axes keep the base value
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses a JSON run config. Unknown keys, wrong types and out-of-range values
/// throw ConfigError with the offending key path. Relative CSV paths resolve
/// against `base_dir`.
RunConfig parse_run_config(const std::string &text, const std::filesystem::path &base_dir = {});
/// Accepts either {"base": {...}, "grid": {...}} or a plain run config (a single-cell grid).
SweepConfig parse_sweep_config(const std::string &text, const std::filesystem::path &base_dir = {});

RunConfig load_run_config(const std::filesystem::path &path);
SweepConfig load_sweep_config(const std::filesystem::path &path);

/// Fully resolved config as JSON text; parse_run_config() of the result gives
/// back the same config.
std::string dump_run_config(const RunConfig &config);

void validate(const RunConfig &config);

// ---------------------------------------------------------------------------
// Presets

struct Preset {
    std::string name;
    std::string description;
    bool sweep = false;
    std::string json;
};

const std::vector<Preset> &presets();
const Preset &find_preset(const std::string &name);

// ---------------------------------------------------------------------------
// Model files: 8-byte magic "FEDFWMDL", u32 version, u32 dim, dim f64; all little-endian.

void save_model(const std::filesystem::path &path, const Vec &x);
Vec load_model(const std::filesystem::path &path);

// ---------------------------------------------------------------------------
// Runs

/// One metrics.csv line. Optional columns are written empty when they do not apply.
struct MetricsRow {
    RoundMetrics m;
    std::optional<double> objective_residual;  // F(x_bar) - F*
    std::optional<double> surrogate_residual;  // F_t(X^{t+1}) - F(x*)
    std::optional<double> theorem1_bound;
    std::optional<double> consensus_bound;
    std::optional<double> stochastic_bound;
};

struct BaselineRow {
    long t = 0;
    double objective = 0.0;
    double xbar_inf_norm = 0.0;
};

struct RunSummary {
    std::optional<ReferenceSolution> reference;
    std::optional<double> dual_norm;
    std::optional<double> sigma;
    std::optional<ShcgmConstants> shcgm;
    std::optional<double> initial_gap;        // E-hat (non-convex problems)
    std::optional<double> theorem2_bound;     // NonconvexT2 only
    double initial_surrogate_gap = 0.0;       // at X^1 with lambda_1
    double mean_surrogate_gap = 0.0;          // over X^1..X^T with lambda_T
    double min_surrogate_gap = 0.0;           // same window
    double G = 0.0;
    double smoothness = 0.0;
    double diameter = 0.0;
    double max_recursion_slack = 0.0;
    double max_client_residual = 0.0;
};

struct RunResult {
    RunConfig config;
    std::vector<MetricsRow> rows;
    std::vector<double> wall_ms;
    std::vector<BaselineRow> baseline;
    RunSummary summary;
    FederationState final_state;
};

/// Builds the clients and the global set D of a config. Per-client sets are
/// attached by execute_run(), which also owns the federation state.
Problem build_problem(const RunConfig &config);

/// Executes a run in memory. `workers` only affects wall time.
RunResult execute_run(const RunConfig &config, std::size_t workers = 1);

std::string format_double(double v);
std::string metrics_csv(const std::vector<MetricsRow> &rows);
std::string baseline_csv(const std::vector<BaselineRow> &rows);
std::string report_json(const RunResult &result);

/// Writes metrics.csv, timing.csv, final_model.bin, resolved_config.json,
/// report.json and (if enabled) baseline.csv into `dir`.
void write_run_artifacts(const RunResult &result, const std::filesystem::path &dir);

struct SweepCell {
    std::string label;
    double lambda0 = 0.0;
    double participation = 0.0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::optional<double> final_objective;
    std::optional<double> final_residual;
    std::optional<double> final_fw_gap;
    std::optional<double> final_surrogate_gap;
    std::optional<double> round1_surrogate_gap;
};

/// Grid cells in lambda0-major, then participation, then seed order.
std::vector<RunConfig> expand_grid(const SweepConfig &sweep);

/// Runs every cell (cells in parallel over `workers`), writes one directory per
/// cell under `out` plus summary.csv. Failed cells are recorded, not fatal.
std::vector<SweepCell> run_sweep(const SweepConfig &sweep, const std::filesystem::path &out, std::size_t workers = 1);
std::string summary_csv(const std::vector<SweepCell> &cells);

// ---------------------------------------------------------------------------
// Verification

struct InvariantResult {
    std::string name;
    bool passed = false;
    double worst = 0.0;      // worst observed slack, sign convention: > tolerance fails
    double tolerance = 0.0;
    std::string detail;
};

using LmoFn = std::function<Vec(const FeasibleSet &, const Vec &)>;

struct VerifyOptions {
    std::size_t workers = 1;
    std::size_t lmo_gradients = 1000;
    std::size_t lmo_points = 10000;
    std::size_t fd_points = 5;
    /// Replaces FeasibleSet::lmo in the oracle checks (mutation testing).
    LmoFn lmo;
};

/// <g, lmo(g)> against the minimum over sampled feasible points, worst excess reported.
InvariantResult check_lmo_optimality(const FeasibleSet &set, std::size_t gradients, std::size_t points,
                                     std::uint64_t seed, const LmoFn &lmo = {});
/// LMO outputs have the extreme-point form of the set.
InvariantResult check_extreme_points(const FeasibleSet &set, std::size_t gradients, std::uint64_t seed,
                                     const LmoFn &lmo = {});
/// Central finite differences against the analytic gradient, worst relative error.
InvariantResult check_gradient(const ClientObjective &objective, const FeasibleSet &set, std::size_t points,
                               std::uint64_t seed);

std::vector<InvariantResult> verify_config(const RunConfig &config, const VerifyOptions &options = {});

}  // namespace fedfw
