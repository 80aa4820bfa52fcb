#include <doctest.h>

#include <cmath>
#include <limits>

#include "fedfw/engine.hpp"
#include "helpers.hpp"

using namespace fedfw;
using testing::counterexample;
using testing::quad;
using testing::vec;

namespace {

class NanClient final : public ClientObjective {
public:
    std::size_t dim() const override { return 1; }
    double value(const Vec &) const override { return 0.0; }
    Vec gradient(const Vec &x) const override {
        return x[0] > 0.25 ? vec({std::numeric_limits<double>::quiet_NaN()}) : vec({-1.0});
    }
    Vec stochastic_gradient(const Vec &x, std::size_t, RngStream &) const override { return gradient(x); }
    double smoothness() const override { return 1.0; }
    bool convex() const override { return true; }
    std::size_t sample_count() const override { return 0; }
};

Problem small_mclr(std::size_t clients, std::size_t samples, std::uint64_t seed, double radius) {
    SyntheticSpec spec;
    spec.n_clients = clients;
    spec.samples_per_client = samples;
    spec.features = 4;
    spec.classes = 3;
    spec.seed = seed;
    std::vector<ClientObjectivePtr> objs;
    for (Dataset &d : generate_synthetic(spec)) objs.push_back(std::make_shared<MclrClient>(std::move(d), 3));
    const std::size_t dim = objs.front()->dim();
    return make_problem(std::move(objs), FeasibleSet::l1_ball(dim, radius));
}

double max_diff(const FederationState &a, const FederationState &b) {
    double worst = (a.x_bar - b.x_bar).lpNorm<Eigen::Infinity>();
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, (a.clients[i].x - b.clients[i].x).lpNorm<Eigen::Infinity>());
    }
    return worst;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("schedule values") {
    CHECK(Schedule::convex(0.5).at(1).eta == 1.0);
    CHECK(Schedule::convex(0.5).at(3).lambda == doctest::Approx(1.0));
    CHECK(Schedule::stochastic(1.0).at(1).rho == 1.0);
    CHECK(Schedule::stochastic(1.0).at(1).eta == 1.0);
    CHECK(Schedule::stochastic(2.0).at(1).lambda == doctest::Approx(6.0));
    CHECK(Schedule::stochastic(1.0).at(20).rho == doctest::Approx(4.0 / std::pow(27.0, 2.0 / 3.0)));
    CHECK(Schedule::nonconvex(0.1, 1000).at(5).eta == doctest::Approx(0.01));
    CHECK(Schedule::nonconvex(0.1, 1000).at(5).lambda == doctest::Approx(1.0));
    CHECK(Schedule::partial_convex(1.0, 0.5).at(3).eta == doctest::Approx(2.0 / 3.0));
    CHECK(Schedule::partial_nonconvex(1.0, 14, 0.5).at(1).eta == doctest::Approx(0.25));
    CHECK(Schedule::partial_nonconvex(1.0, 14, 0.5).at(1).lambda == doctest::Approx(2.0));
    CHECK(Schedule::convex(1.0).at(9).rho == 1.0);
    CHECK(Schedule::convex(1.0).override_rho(0.3).at(9).rho == 0.3);
    CHECK_THROWS(Schedule::convex(0.0));
    CHECK_THROWS(Schedule::partial_convex(1.0, 0.0));
    CHECK_THROWS(Schedule::convex(1.0).at(0));
}

TEST_CASE("partial-convex with p = 1 reduces exactly to the convex schedule") {
    const Schedule a = Schedule::convex(0.3);
    const Schedule b = Schedule::partial_convex(0.3, 1.0);
    for (long t = 1; t <= 5000; ++t) {
        CHECK(a.at(t).eta == b.at(t).eta);
        CHECK(a.at(t).lambda == b.at(t).lambda);
    }
}

TEST_CASE("schedule invariants hold for every regime") {
    const std::vector<Schedule> all = {Schedule::convex(0.01), Schedule::nonconvex(0.01, 777),
                                       Schedule::stochastic(0.01), Schedule::partial_convex(0.01, 0.3),
                                       Schedule::partial_nonconvex(0.01, 777, 0.3)};
    for (const Schedule &s : all) {
        double prev = 0.0;
        for (long t = 1; t <= 20000; ++t) {
            const ScheduleValues v = s.at(t);
            CHECK(v.eta > 0.0);
            CHECK(v.eta <= 1.0);
            CHECK(v.lambda > 0.0);
            CHECK(v.lambda >= prev);
            CHECK(v.rho > 0.0);
            CHECK(v.rho <= 1.0);
            prev = v.lambda;
        }
    }
}

TEST_CASE("names round-trip") {
    for (auto k : {AlgorithmKind::FedFW, AlgorithmKind::FedFWPlus, AlgorithmKind::FedFWSto, AlgorithmKind::NaiveAvgFW}) {
        CHECK(algorithm_from_string(to_string(k)) == k);
    }
    for (auto r : {Regime::ConvexT1, Regime::NonconvexT2, Regime::StoT3, Regime::PartialConvex, Regime::PartialNonconvex}) {
        CHECK(regime_from_string(to_string(r)) == r);
    }
    CHECK(algorithm_from_string("fedfw-plus") == AlgorithmKind::FedFWPlus);
    CHECK_THROWS(algorithm_from_string("fedavg"));
}

TEST_CASE("counterexample client step at t = 1") {
    const Problem p = counterexample();
    ClientSlot slot{vec({0}), vec({0}), vec({0}), 0};
    const Vec s = client_step_fedfw(slot, vec({0}), 1.0, 1e-2, p.global_set(), *p.clients[0], 2);
    CHECK(s == vec({1}));
    CHECK(slot.x == vec({1}));
    ClientSlot other{vec({0}), vec({0}), vec({0}), 0};
    CHECK(client_step_fedfw(other, vec({0}), 1.0, 1e-2, p.global_set(), *p.clients[1], 2) == vec({-1}));
}

TEST_CASE("zero gradient takes the canonical vertex") {
    const FeasibleSet ball = FeasibleSet::l2_ball(2, 1.0);
    const QuadraticClient f(vec({0.2, 0.1}), 1.0);
    ClientSlot slot{vec({0.2, 0.1}), Vec::Zero(2), Vec::Zero(2), 0};
    const Vec s = client_step_fedfw(slot, vec({0.2, 0.1}), 0.5, 3.0, ball, f, 2);
    CHECK(s == vec({1, 0}));
    CHECK(slot.x.isApprox(vec({0.6, 0.05}), 1e-15));
}

TEST_CASE("one hand-computed FedFW round on two quadratic clients") {
    // n = 2, lambda = 2, eta = 1/2, D = unit L2 ball.
    // g1 = (x1 - a1) + 2 (x1 - xbar) = (-0.5, 0) + (0.5, -0.5) = (0, -0.5) -> s1 = (0, 1)
    // g2 = (x2 - a2) + 2 (x2 - xbar) = (0, -0.5) + (-0.5, 0.5) = (-0.5, 0) -> s2 = (1, 0)
    const Problem p = make_problem({quad(vec({1, 0})), quad(vec({0, 1}))}, FeasibleSet::l2_ball(2, 1.0));
    const Vec x_bar = vec({0.25, 0.25});
    ClientSlot c1{vec({0.5, 0}), Vec::Zero(2), Vec::Zero(2), 0};
    ClientSlot c2{vec({0, 0.5}), Vec::Zero(2), Vec::Zero(2), 0};
    CHECK(client_step_fedfw(c1, x_bar, 0.5, 2.0, p.global_set(), *p.clients[0], 2).isApprox(vec({0, 1}), 1e-15));
    CHECK(client_step_fedfw(c2, x_bar, 0.5, 2.0, p.global_set(), *p.clients[1], 2).isApprox(vec({1, 0}), 1e-15));
    CHECK(c1.x.isApprox(vec({0.25, 0.5}), 1e-15));
    CHECK(c2.x.isApprox(vec({0.5, 0.25}), 1e-15));
}

TEST_CASE("fedfw+ dual accumulation") {
    const Problem p = counterexample();
    ClientSlot a{vec({0.2}), vec({0}), vec({0}), 0};
    // At consensus y stays zero and the step equals plain FedFW.
    ClientSlot at_mean{vec({0.2}), vec({0}), vec({0}), 0};
    ClientSlot plain = at_mean;
    CHECK(client_step_fedfw_plus(at_mean, vec({0.2}), 0.5, 1.0, 0.7, p.global_set(), *p.clients[0], 2) ==
          client_step_fedfw(plain, vec({0.2}), 0.5, 1.0, p.global_set(), *p.clients[0], 2));
    CHECK(at_mean.y == vec({0}));
    CHECK(at_mean.x == plain.x);

    // Two rounds with the same offset delta = 0.2 - (-0.1) = 0.3.
    for (int k = 0; k < 2; ++k) {
        a.x = vec({0.2});
        client_step_fedfw_plus(a, vec({-0.1}), 0.5, 1.0, 0.7, p.global_set(), *p.clients[0], 2);
    }
    CHECK(a.y[0] == doctest::Approx(2 * 0.7 * 0.3).epsilon(1e-14));
}

TEST_CASE("fedfw-sto first round uses the fresh minibatch gradient") {
    const Problem p = small_mclr(2, 30, 5, 2.0);
    ClientSlot slot{p.global_set().canonical_vertex(), Vec::Zero(static_cast<Eigen::Index>(p.dim())),
                    Vec::Constant(static_cast<Eigen::Index>(p.dim()), 9.0), 0};
    RngStream rng(1, 0, 1);
    RngStream same(1, 0, 1);
    client_step_fedfw_sto(slot, slot.x, 1.0, 0.5, 1.0, p.global_set(), *p.clients[0], 2, 8, rng);
    const Vec expected = p.clients[0]->stochastic_gradient(p.global_set().canonical_vertex(), 8, same) / 2.0;
    CHECK(slot.d.isApprox(expected, 1e-15));
}

TEST_CASE("fedfw-sto with rho = 1 and full batches reproduces fedfw") {
    const Problem p = small_mclr(3, 20, 6, 3.0);
    EngineConfig det;
    det.schedule = Schedule::convex(0.1);
    EngineConfig sto = det;
    sto.algorithm = AlgorithmKind::FedFWSto;
    sto.schedule.override_rho(1.0);
    sto.batch_size = 20;
    Engine a(p, det), b(p, sto);
    FederationState sa = initialize_state(p, p.global_set().canonical_vertex());
    FederationState sb = sa;
    for (int t = 0; t < 200; ++t) {
        a.step(sa);
        b.step(sb);
        REQUIRE(max_diff(sa, sb) <= 1e-12);
    }
}

TEST_CASE("estimator variance shrinks with the rho schedule") {
    const Problem p = small_mclr(2, 50, 7, 2.0);
    const Vec x = p.global_set().canonical_vertex();
    const Vec target = p.clients[0]->gradient(x) / 2.0;
    std::vector<double> at10, at1000;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        ClientSlot slot{x, Vec::Zero(x.size()), Vec::Zero(x.size()), 0};
        const Schedule s = Schedule::stochastic(1.0);
        for (long t = 1; t <= 1000; ++t) {
            RngStream rng(seed, 0, static_cast<std::uint64_t>(t));
            slot.x = x;  // frozen model
            client_step_fedfw_sto(slot, x, s.at(t).eta, s.at(t).lambda, s.at(t).rho, p.global_set(), *p.clients[0], 2,
                                  4, rng);
            if (t == 10) at10.push_back((slot.d - target).norm());
        }
        at1000.push_back((slot.d - target).norm());
    }
    std::sort(at10.begin(), at10.end());
    std::sort(at1000.begin(), at1000.end());
    CHECK(at1000[5] < at10[5]);
}

TEST_CASE("server recursion matches the exact mean under full participation") {
    const Problem p = small_mclr(4, 15, 8, 2.0);
    for (auto algo : {AlgorithmKind::FedFW, AlgorithmKind::FedFWPlus, AlgorithmKind::FedFWSto}) {
        EngineConfig cfg;
        cfg.algorithm = algo;
        cfg.schedule = algo == AlgorithmKind::FedFWSto ? Schedule::stochastic(0.5) : Schedule::convex(0.5);
        cfg.batch_size = 4;
        cfg.verify = true;
        Engine e(p, cfg);
        FederationState s = initialize_state(p, p.global_set().canonical_vertex());
        double worst = 0.0;
        for (int t = 0; t < 300; ++t) worst = std::max(worst, e.step(s).recursion_slack);
        CHECK(worst <= 1e-9);
        CHECK((s.x_bar - client_mean(s)).lpNorm<Eigen::Infinity>() <= 1e-9);
    }
}

TEST_CASE("unused per-client buffers stay zero") {
    const Problem p = small_mclr(3, 10, 9, 1.0);
    for (auto algo : {AlgorithmKind::FedFW, AlgorithmKind::FedFWPlus, AlgorithmKind::FedFWSto, AlgorithmKind::NaiveAvgFW}) {
        EngineConfig cfg;
        cfg.algorithm = algo;
        cfg.schedule = Schedule::stochastic(0.5);
        cfg.batch_size = 3;
        Engine e(p, cfg);
        FederationState s = initialize_state(p, p.global_set().canonical_vertex());
        for (int t = 0; t < 20; ++t) e.step(s);
        for (const auto &c : s.clients) {
            CHECK(c.y.isZero(0.0) == (algo != AlgorithmKind::FedFWPlus));
            CHECK(c.d.isZero(0.0) == (algo != AlgorithmKind::FedFWSto));
        }
    }
}

TEST_CASE("feasibility closure for every algorithm") {
    const std::vector<FeasibleSet> sets = {FeasibleSet::l1_ball(5, 1.0), FeasibleSet::l2_ball(5, 2.0),
                                           FeasibleSet::box(5, -0.5, 1.0), FeasibleSet::simplex(5, 1.0)};
    for (const FeasibleSet &set : sets) {
        Problem p = make_problem({quad(vec({1, 2, 3, 4, 5}), 0.5), quad(vec({-3, 0, 1, 0, 2})),
                                  quad(vec({0, 0, 0, 1, -1}), 2.0, true)},
                                 set);
        for (auto algo : {AlgorithmKind::FedFW, AlgorithmKind::FedFWPlus, AlgorithmKind::FedFWSto, AlgorithmKind::NaiveAvgFW}) {
            EngineConfig cfg;
            cfg.algorithm = algo;
            cfg.schedule = Schedule::partial_convex(0.3, 0.6);
            cfg.participation = {0.6, 3};
            cfg.verify = true;
            Engine e(p, cfg);
            FederationState s = initialize_state(p, set.canonical_vertex());
            for (int t = 0; t < 100; ++t) {
                CHECK_NOTHROW(e.step(s));
                CHECK(set.contains(s.x_bar));
            }
        }
    }
}

TEST_CASE("p = 1 partial run matches the full run bit for bit") {
    const Problem p = counterexample();
    EngineConfig full;
    full.schedule = Schedule::convex(0.05);
    EngineConfig partial = full;
    partial.schedule = Schedule::partial_convex(0.05, 1.0);
    partial.participation = {1.0, 99};
    Engine a(p, full), b(p, partial);
    FederationState sa = initialize_state(p, vec({0})), sb = sa;
    for (int t = 0; t < 3000; ++t) {
        a.step(sa);
        b.step(sb);
        REQUIRE(max_diff(sa, sb) == 0.0);
    }
}

TEST_CASE("inactive clients keep their models") {
    const Problem p = small_mclr(6, 10, 10, 1.0);
    EngineConfig cfg;
    cfg.schedule = Schedule::partial_convex(1.0, 0.4);
    cfg.participation = {0.4, 12};
    Engine e(p, cfg);
    FederationState s = initialize_state(p, p.global_set().canonical_vertex());
    for (int t = 0; t < 5; ++t) e.step(s);
    const FederationState before = s;
    const std::vector<char> active = cfg.participation.sample(s.round, s.size());
    const RoundReport r = e.step(s);
    CHECK(r.active_count == static_cast<std::size_t>(std::count(active.begin(), active.end(), 1)));
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!active[i]) CHECK(s.clients[i].x == before.clients[i].x);
    }
    CHECK(s.x_bar.isApprox(client_mean(s), 1e-15));
}

TEST_CASE("a round with no active clients is a no-op") {
    const Problem p = counterexample();
    EngineConfig cfg;
    cfg.participation = {1e-12, 1};
    Engine e(p, cfg);
    FederationState s = initialize_state(p, vec({0.5}));
    const RoundReport r = e.step(s);
    CHECK(r.active_count == 0);
    CHECK(s.round == 2);
    CHECK(s.x_bar == vec({0.5}));
    for (const auto &c : s.clients) CHECK(c.x == vec({0.5}));
}

TEST_CASE("participation sampling") {
    const ParticipationPolicy all{1.0, 5};
    for (char a : all.sample(3, 10)) CHECK(a == 1);
    const ParticipationPolicy half{0.5, 5};
    CHECK(half.sample(7, 50) == half.sample(7, 50));
    std::size_t active = 0;
    for (long t = 1; t <= 200; ++t) {
        for (char a : half.sample(t, 50)) active += static_cast<std::size_t>(a);
    }
    CHECK(std::abs(static_cast<double>(active) / 10000.0 - 0.5) < 0.02);
}

TEST_CASE("counterexample: partial participation p = 0.5 still converges") {
    const Problem p = counterexample();
    EngineConfig cfg;
    cfg.schedule = Schedule::partial_convex(1.0, 0.5);
    cfg.participation = {0.5, 1};
    Engine e(p, cfg);
    FederationState s = initialize_state(p, vec({0}));
    for (int t = 0; t < 10000; ++t) e.step(s);
    CHECK(std::abs(s.x_bar[0] - 1.0) <= 0.1);
}

TEST_CASE("counterexample: fedfw+ converges") {
    const Problem p = counterexample();
    EngineConfig cfg;
    cfg.algorithm = AlgorithmKind::FedFWPlus;
    cfg.schedule = Schedule::convex(1.0);
    Engine e(p, cfg);
    FederationState s = initialize_state(p, vec({0}));
    for (int t = 0; t < 10000; ++t) e.step(s);
    CHECK(std::abs(s.x_bar[0] - 1.0) <= 0.05);
}

TEST_CASE("naive averaged FW is stuck at the origin") {
    const Problem p = counterexample();
    const std::vector<Vec> xs = run_naive_baseline(p, vec({0}), 10000);
    REQUIRE(xs.size() == 10001);
    for (const Vec &x : xs) REQUIRE(std::abs(x[0]) <= 1e-12);
    // Grid search confirms the true optimum is x* = 1.
    double best = 0.0, best_value = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 2000; ++k) {
        const double x = -1.0 + k * 1e-3;
        if (p.objective(vec({x})) < best_value) {
            best_value = p.objective(vec({x}));
            best = x;
        }
    }
    CHECK(best == doctest::Approx(1.0));
}

TEST_CASE("split constraints") {
    SUBCASE("identical sets change nothing") {
        const Problem base = make_problem({quad(vec({3, 1})), quad(vec({-1, 2}))}, FeasibleSet::l1_ball(2, 1.0));
        Problem split = base;
        FederationState sa = initialize_state(base, base.global_set().canonical_vertex());
        FederationState sb = sa;
        assign_split_constraints(sb, split, {base.global_set(), base.global_set()});
        EngineConfig cfg;
        cfg.schedule = Schedule::convex(0.5);
        Engine a(base, cfg), b(split, cfg);
        for (int t = 0; t < 500; ++t) {
            a.step(sa);
            b.step(sb);
            REQUIRE(max_diff(sa, sb) <= 1e-12);
        }
    }
    SUBCASE("a cheap l2 superset for one client") {
        const double r2 = 10.0 * std::sqrt(3.0);
        Problem p = make_problem({quad(vec({12, 3, 0})), quad(vec({-4, 1, 2}))}, FeasibleSet::l1_ball(3, 10.0));
        FederationState s = initialize_state(p, p.global_set().canonical_vertex());
        assign_split_constraints(s, p, {FeasibleSet::l1_ball(3, 10.0), FeasibleSet::l2_ball(3, r2)});
        CHECK(s.clients[1].set_id == 2);

        ClientSlot probe = s.clients[1];
        const Vec g = p.clients[1]->gradient(probe.x) / 2.0 + 1.0 * (probe.x - s.x_bar);
        CHECK(client_step_fedfw(probe, s.x_bar, 0.5, 1.0, p.sets[2], *p.clients[1], 2)
                  .isApprox(-r2 * g / g.norm(), 1e-14));

        EngineConfig cfg;
        cfg.schedule = Schedule::convex(1.0);
        cfg.verify = true;
        Engine e(p, cfg);
        for (int t = 0; t < 10000; ++t) e.step(s);
        // Interior optimum (4, 2, 1): the mean target has l1 norm 7 < 10.
        CHECK((s.x_bar - vec({4, 2, 1})).norm() <= 0.1);
    }
    SUBCASE("a set that does not contain D is rejected") {
        Problem p = make_problem({quad(vec({1, 0})), quad(vec({0, 1}))}, FeasibleSet::l1_ball(2, 10.0));
        FederationState s = initialize_state(p, p.global_set().canonical_vertex());
        CHECK_THROWS(assign_split_constraints(s, p, {FeasibleSet::l1_ball(2, 10.0), FeasibleSet::l2_ball(2, 5.0)}));
        CHECK_THROWS(assign_split_constraints(s, p, {FeasibleSet::l1_ball(2, 10.0)}));
    }
}

TEST_CASE("results do not depend on the worker count") {
    const Problem p = small_mclr(8, 25, 11, 2.0);
    auto run = [&](std::size_t workers) {
        EngineConfig cfg;
        cfg.algorithm = AlgorithmKind::FedFWSto;
        cfg.schedule = Schedule::partial_convex(0.5, 0.7);
        cfg.participation = {0.7, 21};
        cfg.batch_size = 5;
        cfg.seed = 21;
        cfg.workers = workers;
        Engine e(p, cfg);
        FederationState s = initialize_state(p, p.global_set().canonical_vertex());
        for (int t = 0; t < 200; ++t) e.step(s);
        return s;
    };
    const FederationState a = run(1), b = run(4);
    CHECK(max_diff(a, b) == 0.0);
}

TEST_CASE("non-finite iterates abort with the round number") {
    // On a ball the NaN direction reaches the iterate (a box LMO would map it to a vertex).
    const Problem p = make_problem({std::make_shared<NanClient>()}, FeasibleSet::l2_ball(1, 1.0));
    EngineConfig cfg;
    cfg.schedule = Schedule::convex(1.0);
    Engine e(p, cfg);
    FederationState s = initialize_state(p, vec({0}));
    e.step(s);  // x jumps to 1
    try {
        e.step(s);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError &err) {
        CHECK(err.round() == 2);
    }
}

TEST_CASE("initialization") {
    const Problem p = make_problem({quad(vec({1, 1}))}, FeasibleSet::simplex(2, 1.0));
    CHECK(initial_point(p, InitMode::Vertex) == vec({1, 0}));
    CHECK(initial_point(p, InitMode::Zero) == vec({0, 0}));
    CHECK_THROWS(initialize_state(p, vec({0, 0})));  // origin is not in the simplex
    CHECK_THROWS(initialize_state(p, vec({1})));
}

}
