#include <stdexcept>

#include "fedfw/harness.hpp"

namespace fedfw {

namespace {

// Two clients on [-1, 1] with F(x) = ((x-3)^2 + (x+1)^2) / 2, minimized at x = 1.
// Local FW followed by averaging never leaves x = 0.
constexpr const char *kCounterexample = R"({
  "name": "counterexample",
  "algorithm": "fedfw",
  "schedule": {"regime": "convex", "lambda0": 1.0},
  "rounds": 10000,
  "feasible_set": {"kind": "box", "lo": -1.0, "hi": 1.0},
  "problem": {"kind": "quadratic", "clients": [{"target": [3.0]}, {"target": [-1.0]}]},
  "init": "zero",
  "baseline": true,
  "output_dir": "runs/counterexample"
})";

// Mean target (0.5, 1, 0.5) lies outside the unit ball, so x* = (0.5, 1, 0.5) / sqrt(1.5) is on the boundary.
constexpr const char *kConvexQuadratic = R"({
  "name": "thm1-quadratic",
  "algorithm": "fedfw",
  "schedule": {"regime": "convex", "lambda0": 1.0},
  "rounds": 10000,
  "feasible_set": {"kind": "l2", "radius": 1.0},
  "problem": {"kind": "quadratic", "clients": [
    {"target": [2.0, 1.0, 0.0]},
    {"target": [-1.0, 1.0, 1.0]}
  ]},
  "init": "vertex",
  "output_dir": "runs/thm1-quadratic"
})";

// The second client is negated, so F has Hessian -I/2 and is concave on the ball.
constexpr const char *kNonconvexQuadratic = R"({
  "name": "thm2-nonconvex",
  "algorithm": "fedfw",
  "schedule": {"regime": "nonconvex", "lambda0": 1.0},
  "rounds": 1000,
  "feasible_set": {"kind": "l2", "radius": 1.0},
  "problem": {"kind": "quadratic", "clients": [
    {"target": [0.5, 0.0], "weight": 0.5},
    {"target": [0.0, 0.5], "weight": 1.0, "flipped": true}
  ]},
  "init": "vertex",
  "output_dir": "runs/thm2-nonconvex"
})";

constexpr const char *kStochasticMclr = R"({
  "name": "thm3-sto",
  "algorithm": "fedfw-sto",
  "schedule": {"regime": "sto", "lambda0": 0.1},
  "rounds": 10000,
  "feasible_set": {"kind": "l1", "radius": 1.0},
  "problem": {"kind": "mclr-synthetic", "clients": 10, "samples_per_client": 40, "features": 60,
              "classes": 10, "heterogeneity": "iid", "data_seed": 7},
  "batch_size": 16,
  "seed": 1,
  "init": "zero",
  "reference": {"fw_iterations": 20000},
  "output_dir": "runs/thm3-sto"
})";

constexpr const char *kParticipationSweep = R"({
  "base": {
    "name": "pp-sweep",
    "algorithm": "fedfw",
    "schedule": {"regime": "partial-convex", "lambda0": 1.0},
    "rounds": 1000,
    "feasible_set": {"kind": "box", "lo": -1.0, "hi": 1.0},
    "problem": {"kind": "quadratic", "clients": [{"target": [3.0]}, {"target": [-1.0]}]},
    "init": "zero",
    "output_dir": "runs/pp-sweep"
  },
  "grid": {
    "lambda0": [0.001, 0.01, 1.0],
    "participation": [0.2, 0.5, 1.0],
    "seed": [1, 2, 3, 4, 5]
  }
})";

}  // namespace

const std::vector<Preset> &presets() {
    static const std::vector<Preset> all = {
        {"counterexample", "1-D problem where averaged local FW stalls at 0; FedFW reaches x* = 1", false,
         kCounterexample},
        {"thm1-quadratic", "2-client convex quadratic on the unit L2 ball with a boundary optimum", false, kConvexQuadratic},
        {"thm2-nonconvex", "2-client quadratic with a sign-flipped client, non-convex schedule", false, kNonconvexQuadratic},
        {"thm3-sto", "stochastic FedFW on synthetic multiclass logistic regression, L1 ball", false, kStochasticMclr},
        {"pp-sweep", "counterexample swept over lambda0, participation and seed", true, kParticipationSweep},
    };
    return all;
}

const Preset &find_preset(const std::string &name) {
    for (const Preset &p : presets()) {
        if (p.name == name) return p;
    }
    std::string known;
    for (const Preset &p : presets()) known += (known.empty() ? "" : ", ") + p.name;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

}  // namespace fedfw
