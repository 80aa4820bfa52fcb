// fedfw: run, sweep and verify federated Frank-Wolfe experiments.

#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "fedfw/harness.hpp"

namespace {

struct Common {
    std::string config;
    std::string preset;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
};

void add_common(CLI::App *cmd, Common &c) {
    auto *config = cmd->add_option("--config", c.config, "JSON config file");
    auto *preset = cmd->add_option("--preset", c.preset, "built-in preset name (see 'presets list')");
    config->excludes(preset);
    cmd->add_option("--out", c.out, "output directory (overrides output_dir)");
    cmd->add_option("--seed", c.seed, "seed (overrides the config)");
    cmd->add_option("--workers", c.workers, "worker threads for client steps / sweep cells")
        ->check(CLI::PositiveNumber);
}

fedfw::SweepConfig load(const Common &c, const std::string &fallback_preset) {
    if (!c.config.empty()) return fedfw::load_sweep_config(c.config);
    const fedfw::Preset &p = fedfw::find_preset(c.preset.empty() ? fallback_preset : c.preset);
    return fedfw::parse_sweep_config(p.json);
}

fedfw::RunConfig load_single(const Common &c, const std::string &fallback_preset, const char *command) {
    fedfw::SweepConfig s = load(c, fallback_preset);
    if (!s.grid.lambda0.empty() || !s.grid.participation.empty() || !s.grid.seed.empty()) {
        throw fedfw::ConfigError(std::string("config has a parameter grid; use 'sweep' instead of '") + command + "'");
    }
    if (c.seed) s.base.seed = *c.seed;
    if (!c.out.empty()) s.base.output_dir = c.out;
    return s.base;
}

int cmd_run(const Common &c) {
    if (c.config.empty() && c.preset.empty()) throw fedfw::ConfigError("run needs --config or --preset");
    const fedfw::RunConfig config = load_single(c, "", "run");
    const fedfw::RunResult result = fedfw::execute_run(config, c.workers);
    fedfw::write_run_artifacts(result, config.output_dir);
    const fedfw::RoundMetrics &last = result.rows.back().m;
    std::printf("%s: %ld rounds, F(x_bar) = %s, fw_gap = %s, dist = %s -> %s\n", config.name.c_str(),
                config.rounds, fedfw::format_double(last.objective).c_str(),
                fedfw::format_double(last.fw_gap).c_str(), fedfw::format_double(last.consensus_dist).c_str(),
                config.output_dir.string().c_str());
    return 0;
}

int cmd_sweep(const Common &c) {
    if (c.config.empty() && c.preset.empty()) throw fedfw::ConfigError("sweep needs --config or --preset");
    fedfw::SweepConfig sweep = load(c, "");
    if (c.seed) {
        sweep.base.seed = *c.seed;
        sweep.grid.seed.clear();
    }
    const std::filesystem::path out = c.out.empty() ? sweep.base.output_dir : std::filesystem::path(c.out);
    const auto cells = fedfw::run_sweep(sweep, out, c.workers);
    std::size_t failed = 0;
    for (const auto &cell : cells) {
        if (!cell.ok) {
            ++failed;
            std::fprintf(stderr, "cell %s failed: %s\n", cell.label.c_str(), cell.error.c_str());
        }
    }
    std::printf("%zu cells, %zu failed -> %s\n", cells.size(), failed, (out / "summary.csv").string().c_str());
    return failed == 0 ? 0 : 1;
}

int cmd_verify(const Common &c) {
    const fedfw::RunConfig config = load_single(c, "counterexample", "verify");
    fedfw::VerifyOptions options;
    options.workers = c.workers;
    const auto results = fedfw::verify_config(config, options);
    bool ok = true;
    for (const auto &r : results) {
        ok = ok && r.passed;
        std::printf("%-4s %-52s worst=%10.3e  tol=%.0e  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.worst,
                    r.tolerance, r.detail.c_str());
    }
    std::printf("%s\n", ok ? "all invariants hold" : "invariant violations found");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Projection-free federated optimization with Frank-Wolfe"};
    app.require_subcommand(1);

    Common run_opts, sweep_opts, verify_opts;
    auto *run = app.add_subcommand("run", "execute one configured run");
    add_common(run, run_opts);
    auto *sweep = app.add_subcommand("sweep", "run a grid over lambda0, participation and seed");
    add_common(sweep, sweep_opts);
    auto *verify = app.add_subcommand("verify", "check oracle and engine invariants on a live run");
    add_common(verify, verify_opts);
    auto *presets = app.add_subcommand("presets", "built-in experiment configs");
    presets->require_subcommand(1);
    auto *list = presets->add_subcommand("list", "list preset names");
    std::string show_name;
    auto *show = presets->add_subcommand("show", "print a preset's config");
    show->add_option("name", show_name, "preset name")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(run_opts);
        if (*sweep) return cmd_sweep(sweep_opts);
        if (*verify) return cmd_verify(verify_opts);
        if (*list) {
            for (const auto &p : fedfw::presets()) {
                std::printf("%-16s %s%s\n", p.name.c_str(), p.sweep ? "[sweep] " : "", p.description.c_str());
            }
            return 0;
        }
        if (*show) {
            std::printf("%s\n", fedfw::find_preset(show_name).json.c_str());
            return 0;
        }
    } catch (const fedfw::NonFiniteError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const fedfw::ConfigError &e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
