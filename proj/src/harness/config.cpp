#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedfw/harness.hpp"

namespace fedfw {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported as typos.
class Reader {
public:
    Reader(const json &j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
    }

    bool has(const std::string &key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    void touch(const std::string &key) { used_.insert(key); }

    const json &raw(const std::string &key) {
        used_.insert(key);
        return j_.at(key);
    }

    std::string key_path(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const std::string &key, double fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        return as_number(j_.at(key), key_path(key));
    }

    std::optional<double> optional_number(const std::string &key) {
        used_.insert(key);
        if (!has(key)) return std::nullopt;
        return as_number(j_.at(key), key_path(key));
    }

    long long integer(const std::string &key, long long fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        return as_integer(j_.at(key), key_path(key));
    }

    std::uint64_t unsigned_integer(const std::string &key, std::uint64_t fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        return as_unsigned(j_.at(key), key_path(key));
    }

    bool boolean(const std::string &key, bool fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        const json &v = j_.at(key);
        if (!v.is_boolean()) fail(key_path(key), "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string &key, const std::string &fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        const json &v = j_.at(key);
        if (!v.is_string()) fail(key_path(key), "expected a string");
        return v.get<std::string>();
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) fail(key_path(it.key()), "unknown key");
        }
    }

    [[noreturn]] static void fail(const std::string &where, const std::string &what) {
        throw ConfigError(where + ": " + what);
    }

    static double as_number(const json &v, const std::string &where) {
        if (!v.is_number()) fail(where, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(where, "must be finite");
        return x;
    }

    static long long as_integer(const json &v, const std::string &where) {
        if (!v.is_number_integer()) fail(where, "expected an integer");
        return v.get<long long>();
    }

    static std::uint64_t as_unsigned(const json &v, const std::string &where) {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer()) fail(where, "must be non-negative");
        fail(where, "expected a non-negative integer");
    }

private:
    const json &j_;
    std::string path_;
    std::set<std::string> used_;
};

template <typename Fn>
auto parse_enum(const std::string &where, const std::string &value, Fn &&fn) {
    try {
        return fn(value);
    } catch (const std::invalid_argument &e) {
        throw ConfigError(where + ": " + e.what());
    }
}

SetSpec parse_set(const json &j, const std::string &path) {
    Reader r(j, path);
    SetSpec s;
    s.kind = parse_enum(r.key_path("kind"), r.string("kind", "l2"), set_kind_from_string);
    if (s.kind == SetKind::Box) {
        s.lo = r.number("lo", s.lo);
        s.hi = r.number("hi", s.hi);
    } else {
        s.radius = r.number("radius", s.radius);
    }
    r.finish();
    return s;
}

json dump_set(const SetSpec &s) {
    json j;
    j["kind"] = to_string(s.kind);
    if (s.kind == SetKind::Box) {
        j["lo"] = s.lo;
        j["hi"] = s.hi;
    } else {
        j["radius"] = s.radius;
    }
    return j;
}

std::string problem_kind_name(ProblemKind k) {
    switch (k) {
        case ProblemKind::Quadratic: return "quadratic";
        case ProblemKind::MclrSynthetic: return "mclr-synthetic";
        case ProblemKind::MclrCsv: return "mclr-csv";
    }
    return "unknown";
}

ProblemKind problem_kind_from(const std::string &name) {
    if (name == "quadratic") return ProblemKind::Quadratic;
    if (name == "mclr-synthetic") return ProblemKind::MclrSynthetic;
    if (name == "mclr-csv") return ProblemKind::MclrCsv;
    throw std::invalid_argument("unknown problem kind '" + name + "'");
}

ProblemSpec parse_problem(const json &j, const std::filesystem::path &base_dir) {
    Reader r(j, "problem");
    ProblemSpec p;
    p.kind = parse_enum("problem.kind", r.string("kind", "quadratic"), problem_kind_from);
    switch (p.kind) {
        case ProblemKind::Quadratic: {
            if (!r.has("clients")) Reader::fail("problem.clients", "missing");
            const json &clients = r.raw("clients");
            if (!clients.is_array()) Reader::fail("problem.clients", "expected an array");
            for (std::size_t i = 0; i < clients.size(); ++i) {
                const std::string where = "problem.clients[" + std::to_string(i) + "]";
                Reader c(clients[i], where);
                QuadraticSpec q;
                if (!c.has("target")) Reader::fail(where + ".target", "missing");
                const json &target = c.raw("target");
                if (!target.is_array()) Reader::fail(where + ".target", "expected an array of numbers");
                for (std::size_t k = 0; k < target.size(); ++k) {
                    q.target.push_back(Reader::as_number(target[k], where + ".target[" + std::to_string(k) + "]"));
                }
                q.weight = c.number("weight", q.weight);
                q.flipped = c.boolean("flipped", q.flipped);
                q.noise_std = c.number("noise_std", q.noise_std);
                c.finish();
                p.quadratics.push_back(std::move(q));
            }
            break;
        }
        case ProblemKind::MclrSynthetic: {
            SyntheticSpec &s = p.synthetic;
            s.n_clients = static_cast<std::size_t>(r.unsigned_integer("clients", s.n_clients));
            s.samples_per_client = static_cast<std::size_t>(r.unsigned_integer("samples_per_client", s.samples_per_client));
            s.features = static_cast<std::size_t>(r.unsigned_integer("features", s.features));
            s.classes = static_cast<int>(r.integer("classes", s.classes));
            const std::string mode = r.string("heterogeneity", "iid");
            if (mode == "iid") {
                s.mode = Heterogeneity::IID;
            } else if (mode == "non-iid") {
                s.mode = Heterogeneity::NonIID;
            } else {
                Reader::fail("problem.heterogeneity", "expected 'iid' or 'non-iid'");
            }
            s.labels_per_client = static_cast<int>(r.integer("labels_per_client", s.labels_per_client));
            s.seed = r.unsigned_integer("data_seed", s.seed);
            p.classes = s.classes;
            p.mu = r.number("mu", p.mu);
            break;
        }
        case ProblemKind::MclrCsv: {
            if (!r.has("paths")) Reader::fail("problem.paths", "missing");
            const json &paths = r.raw("paths");
            if (!paths.is_array()) Reader::fail("problem.paths", "expected an array of file names");
            for (std::size_t i = 0; i < paths.size(); ++i) {
                if (!paths[i].is_string()) Reader::fail("problem.paths[" + std::to_string(i) + "]", "expected a string");
                std::filesystem::path path = paths[i].get<std::string>();
                if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
                p.csv_paths.push_back(path);
            }
            p.classes = static_cast<int>(r.integer("classes", p.classes));
            p.mu = r.number("mu", p.mu);
            break;
        }
    }
    r.finish();
    return p;
}

json dump_problem(const ProblemSpec &p) {
    json j;
    j["kind"] = problem_kind_name(p.kind);
    switch (p.kind) {
        case ProblemKind::Quadratic: {
            json clients = json::array();
            for (const auto &q : p.quadratics) {
                clients.push_back(
                    {{"target", q.target}, {"weight", q.weight}, {"flipped", q.flipped}, {"noise_std", q.noise_std}});
            }
            j["clients"] = clients;
            break;
        }
        case ProblemKind::MclrSynthetic: {
            const SyntheticSpec &s = p.synthetic;
            j["clients"] = s.n_clients;
            j["samples_per_client"] = s.samples_per_client;
            j["features"] = s.features;
            j["classes"] = s.classes;
            j["heterogeneity"] = s.mode == Heterogeneity::IID ? "iid" : "non-iid";
            j["labels_per_client"] = s.labels_per_client;
            j["data_seed"] = s.seed;
            j["mu"] = p.mu;
            break;
        }
        case ProblemKind::MclrCsv: {
            json paths = json::array();
            for (const auto &path : p.csv_paths) paths.push_back(path.string());
            j["paths"] = paths;
            j["classes"] = p.classes;
            j["mu"] = p.mu;
            break;
        }
    }
    return j;
}

RunConfig parse_run_object(const json &j, const std::filesystem::path &base_dir) {
    Reader r(j, "");
    RunConfig c;
    c.name = r.string("name", c.name);
    c.algorithm = parse_enum("algorithm", r.string("algorithm", to_string(c.algorithm)), algorithm_from_string);

    if (r.has("schedule")) {
        Reader s(r.raw("schedule"), "schedule");
        c.regime = parse_enum("schedule.regime", s.string("regime", to_string(c.regime)), regime_from_string);
        c.lambda0 = s.number("lambda0", c.lambda0);
        c.rho_override = s.optional_number("rho_override");
        s.finish();
    }

    c.rounds = static_cast<long>(r.integer("rounds", c.rounds));
    c.participation = r.number("participation", c.participation);
    if (r.has("feasible_set")) c.feasible_set = parse_set(r.raw("feasible_set"), "feasible_set");
    if (r.has("client_sets")) {
        const json &sets = r.raw("client_sets");
        if (!sets.is_array()) Reader::fail("client_sets", "expected an array");
        for (std::size_t i = 0; i < sets.size(); ++i) {
            c.client_sets.push_back(parse_set(sets[i], "client_sets[" + std::to_string(i) + "]"));
        }
    }
    if (!r.has("problem")) Reader::fail("problem", "missing");
    c.problem = parse_problem(r.raw("problem"), base_dir);

    c.batch_size = static_cast<std::size_t>(r.unsigned_integer("batch_size", c.batch_size));
    c.seed = r.unsigned_integer("seed", c.seed);
    const std::string init = r.string("init", "vertex");
    if (init == "vertex") {
        c.init = InitMode::Vertex;
    } else if (init == "zero") {
        c.init = InitMode::Zero;
    } else {
        Reader::fail("init", "expected 'vertex' or 'zero'");
    }
    c.output_dir = r.string("output_dir", c.output_dir.string());
    c.verify = r.boolean("verify", c.verify);
    c.baseline = r.boolean("baseline", c.baseline);

    if (r.has("reference")) {
        Reader ref(r.raw("reference"), "reference");
        c.reference.fw_iterations =
            static_cast<std::size_t>(ref.unsigned_integer("fw_iterations", c.reference.fw_iterations));
        c.reference.dual_norm = ref.optional_number("dual_norm");
        c.reference.sigma = ref.optional_number("sigma");
        ref.finish();
    }
    r.finish();
    validate(c);
    return c;
}

json parse_text(const std::string &text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
}

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename T, typename Fn>
std::vector<T> parse_axis(Reader &r, const std::string &key, Fn &&convert) {
    std::vector<T> out;
    r.touch(key);
    if (!r.has(key)) return out;
    const json &values = r.raw(key);
    if (!values.is_array() || values.empty()) Reader::fail("grid." + key, "expected a non-empty array");
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.push_back(convert(values[i], "grid." + key + "[" + std::to_string(i) + "]"));
    }
    return out;
}

}  // namespace

void validate(const RunConfig &c) {
    auto fail = [](const std::string &where, const std::string &what) { throw ConfigError(where + ": " + what); };
    if (c.rounds < 1) fail("rounds", "must be >= 1");
    if (!(c.participation > 0.0 && c.participation <= 1.0)) fail("participation", "must lie in (0, 1]");
    if (!(c.lambda0 > 0.0)) fail("schedule.lambda0", "must be > 0");
    if (c.rho_override && !(*c.rho_override > 0.0 && *c.rho_override <= 1.0)) {
        fail("schedule.rho_override", "must lie in (0, 1]");
    }
    if (c.batch_size < 1) fail("batch_size", "must be >= 1");
    if (c.reference.dual_norm && *c.reference.dual_norm < 0.0) fail("reference.dual_norm", "must be >= 0");
    if (c.reference.sigma && *c.reference.sigma < 0.0) fail("reference.sigma", "must be >= 0");

    auto check_set = [&](const SetSpec &s, const std::string &where) {
        if (s.kind == SetKind::Box) {
            if (!(s.lo < s.hi)) fail(where, "box needs lo < hi");
        } else if (!(s.radius > 0.0)) {
            fail(where + ".radius", "must be > 0");
        }
    };
    check_set(c.feasible_set, "feasible_set");
    for (std::size_t i = 0; i < c.client_sets.size(); ++i) {
        check_set(c.client_sets[i], "client_sets[" + std::to_string(i) + "]");
    }

    const ProblemSpec &p = c.problem;
    std::size_t n = 0;
    switch (p.kind) {
        case ProblemKind::Quadratic:
            n = p.quadratics.size();
            if (n == 0) fail("problem.clients", "needs at least one client");
            for (std::size_t i = 0; i < n; ++i) {
                const std::string where = "problem.clients[" + std::to_string(i) + "]";
                const QuadraticSpec &q = p.quadratics[i];
                if (q.target.empty()) fail(where + ".target", "must not be empty");
                if (q.target.size() != p.quadratics.front().target.size()) {
                    fail(where + ".target", "all clients need the same dimension");
                }
                if (!(q.weight > 0.0)) fail(where + ".weight", "must be > 0");
                if (q.noise_std < 0.0) fail(where + ".noise_std", "must be >= 0");
            }
            break;
        case ProblemKind::MclrSynthetic: {
            const SyntheticSpec &s = p.synthetic;
            n = s.n_clients;
            if (n == 0) fail("problem.clients", "must be >= 1");
            if (s.samples_per_client == 0) fail("problem.samples_per_client", "must be >= 1");
            if (s.features == 0) fail("problem.features", "must be >= 1");
            if (s.classes < 2) fail("problem.classes", "must be >= 2");
            if (s.mode == Heterogeneity::NonIID && (s.labels_per_client < 1 || s.labels_per_client > s.classes)) {
                fail("problem.labels_per_client", "must lie in [1, classes]");
            }
            break;
        }
        case ProblemKind::MclrCsv:
            n = p.csv_paths.size();
            if (n == 0) fail("problem.paths", "needs at least one file");
            if (p.classes < 2) fail("problem.classes", "must be >= 2");
            for (const auto &path : p.csv_paths) {
                if (!std::filesystem::is_regular_file(path)) fail("problem.paths", "file '" + path.string() + "' not found");
            }
            break;
    }
    if (p.mu < 0.0) fail("problem.mu", "must be >= 0");
    if (!c.client_sets.empty() && c.client_sets.size() != n) {
        fail("client_sets", "needs one entry per client (" + std::to_string(n) + ")");
    }
}

RunConfig parse_run_config(const std::string &text, const std::filesystem::path &base_dir) {
    return parse_run_object(parse_text(text), base_dir);
}

SweepConfig parse_sweep_config(const std::string &text, const std::filesystem::path &base_dir) {
    const json j = parse_text(text);
    SweepConfig sweep;
    if (!j.is_object() || !j.contains("base")) {
        sweep.base = parse_run_object(j, base_dir);
        return sweep;
    }
    Reader r(j, "");
    sweep.base = parse_run_object(r.raw("base"), base_dir);
    if (r.has("grid")) {
        Reader g(r.raw("grid"), "grid");
        sweep.grid.lambda0 = parse_axis<double>(g, "lambda0", Reader::as_number);
        sweep.grid.participation = parse_axis<double>(g, "participation", Reader::as_number);
        sweep.grid.seed = parse_axis<std::uint64_t>(g, "seed", Reader::as_unsigned);
        g.finish();
    }
    r.finish();
    for (const RunConfig &cell : expand_grid(sweep)) validate(cell);
    return sweep;
}

RunConfig load_run_config(const std::filesystem::path &path) {
    return parse_run_config(read_file(path), path.parent_path());
}

SweepConfig load_sweep_config(const std::filesystem::path &path) {
    return parse_sweep_config(read_file(path), path.parent_path());
}

std::string dump_run_config(const RunConfig &c) {
    json j;
    j["name"] = c.name;
    j["algorithm"] = to_string(c.algorithm);
    json schedule = {{"regime", to_string(c.regime)}, {"lambda0", c.lambda0}};
    if (c.rho_override) schedule["rho_override"] = *c.rho_override;
    j["schedule"] = schedule;
    j["rounds"] = c.rounds;
    j["participation"] = c.participation;
    j["feasible_set"] = dump_set(c.feasible_set);
    if (!c.client_sets.empty()) {
        json sets = json::array();
        for (const auto &s : c.client_sets) sets.push_back(dump_set(s));
        j["client_sets"] = sets;
    }
    j["problem"] = dump_problem(c.problem);
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["init"] = c.init == InitMode::Vertex ? "vertex" : "zero";
    j["output_dir"] = c.output_dir.string();
    j["verify"] = c.verify;
    j["baseline"] = c.baseline;
    json reference = {{"fw_iterations", c.reference.fw_iterations}};
    if (c.reference.dual_norm) reference["dual_norm"] = *c.reference.dual_norm;
    if (c.reference.sigma) reference["sigma"] = *c.reference.sigma;
    j["reference"] = reference;
    return j.dump(2) + "\n";
}

std::vector<RunConfig> expand_grid(const SweepConfig &sweep) {
    const RunConfig &base = sweep.base;
    const std::vector<double> lambdas = sweep.grid.lambda0.empty() ? std::vector<double>{base.lambda0}
                                                                   : sweep.grid.lambda0;
    const std::vector<double> ps = sweep.grid.participation.empty() ? std::vector<double>{base.participation}
                                                                    : sweep.grid.participation;
    const std::vector<std::uint64_t> seeds = sweep.grid.seed.empty() ? std::vector<std::uint64_t>{base.seed}
                                                                     : sweep.grid.seed;
    std::vector<RunConfig> cells;
    for (double l0 : lambdas) {
        for (double p : ps) {
            for (std::uint64_t seed : seeds) {
                RunConfig c = base;
                c.lambda0 = l0;
                c.participation = p;
                c.seed = seed;
                cells.push_back(std::move(c));
            }
        }
    }
    return cells;
}

}  // namespace fedfw
