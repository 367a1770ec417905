#include <doctest.h>

#include <cmath>
#include <sstream>

#ifdef CASCADE_HAVE_OPENMP
#include <omp.h>
#endif

#include "cascade/simulate.hpp"

using namespace cascade;

namespace {

ProblemSpec lq1(const std::string& body, const std::string& top = "") {
    std::string cfg =
        "n = 1\nhorizon = 1.0\nx0 = [1.0]\nmc.num_paths = 64\nmc.dt = 0.05\nmc.seed = 11\n" +
        top + "\n[regime.\"\"]\n" + body;
    return load_spec(cfg);
}

ProblemSpec lq2_reachable(long paths = 400, double dt = 0.02) {
    std::string cfg =
        "n = 2\nhorizon = 1.0\nx0 = [1.0, 1.0]\nmc.num_paths = " + std::to_string(paths) +
        "\nmc.dt = " + std::to_string(dt) +
        "\nmc.seed = 77\n\n[regime.\"\"]\n"
        "1.mu = -0.2\n1.nu = 0.3\n1.v = 0\n1.gamma = 1\n"
        "2.mu = -0.2\n2.nu = 0.3\n2.v = 0\n2.gamma = 1\n";
    return load_spec(cfg);
}

}  // namespace

TEST_CASE("drift-only path decays to the barrier and enters the terminal regime") {
    const ProblemSpec spec = lq1("1.b = -1\n1.v = 0\n1.gamma = 1\n");
    const RegimeTree tree = RegimeTree::build(1);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const PathBatch b = simulate_paths(spec, tree, model, Policy::zero(spec), 1, 11);

    // x(t) = 1 - t on the grid
    for (int m = 0; m <= 5; ++m)
        CHECK(b.state(0, m)[0] == doctest::Approx(1.0 - 0.05 * m));
    REQUIRE(b.events[0].size() == 1);
    CHECK(b.events[0][0].node == 0);
    CHECK(std::abs(b.events[0][0].time - 1.0) <= 0.05 + 1e-12);
    CHECK(b.regime_at(0, b.grid.M) == tree.terminal_id());
}

TEST_CASE("constant-path cost arithmetic") {
    // x0 = 0, v = -1: running cost (1/2)*1*T, terminal cost 1/2
    const char* cfg =
        "n = 1\nhorizon = 1.0\nx0 = [0.0]\nmc.num_paths = 8\nmc.dt = 0.05\nmc.seed = 3\n"
        "\n[regime.\"\"]\n1.v = -1\n1.gamma = 1\n";
    const ProblemSpec spec = load_spec(cfg);
    const RegimeTree tree = RegimeTree::build(1);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const PathBatch b = simulate_paths(spec, tree, model, Policy::zero(spec), 8, 3);
    for (long p = 0; p < 8; ++p) {
        CHECK(b.run_cost[static_cast<size_t>(p)] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(b.term_cost[static_cast<size_t>(p)] == doctest::Approx(0.5).epsilon(1e-12));
    }
    CHECK(b.events[0].empty());
}

TEST_CASE("estimate_cost of the all-zero instance is exactly zero") {
    const char* cfg =
        "n = 1\nhorizon = 1.0\nx0 = [0.0]\nmc.num_paths = 32\nmc.dt = 0.1\nmc.seed = 5\n"
        "\n[regime.\"\"]\n1.v = 0.5\n1.gamma = 0\n";
    // gamma 0 kills the state cost; zero policy kills the control cost
    const ProblemSpec spec = load_spec(cfg);
    const RegimeTree tree = RegimeTree::build(1);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const CostEstimate est =
        estimate_cost(spec, tree, model, Policy::zero(spec), 32, 5);
    CHECK(est.mean == 0.0);
    CHECK(est.std_error == 0.0);
}

TEST_CASE("deterministic instances have zero standard error") {
    const ProblemSpec spec = lq1("1.mu = 0.3\n1.v = -5\n1.gamma = 1\n");
    const RegimeTree tree = RegimeTree::build(1);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const CostEstimate est = estimate_cost(spec, tree, model, Policy::zero(spec), 16, 11);
    CHECK(est.std_error == 0.0);
    // equals the single-path quadrature
    const PathBatch b = simulate_paths(spec, tree, model, Policy::zero(spec), 1, 11);
    CHECK(est.mean == doctest::Approx(b.cost(0)));
}

TEST_CASE("defaults freeze the node and switch the regime once") {
    const ProblemSpec spec = lq2_reachable();
    const RegimeTree tree = RegimeTree::build(2);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const PathBatch b = simulate_paths(spec, tree, model, Policy::zero(spec),
                                       spec.mc.num_paths, spec.mc.seed);
    long found = 0;
    for (long p = 0; p < b.num_paths; ++p) {
        if (b.events[static_cast<size_t>(p)].size() != 1) continue;
        const DefaultEvent& ev = b.events[static_cast<size_t>(p)][0];
        if (ev.node != 0) continue;
        ++found;
        // timeline [(0, root), (tau, {1})]
        for (int m = 0; m < ev.step; ++m) CHECK(b.regime_at(p, m) == 0);
        const int rid_after = b.regime_at(p, ev.step);
        CHECK(tree.regime(rid_after).key() == "1");
        // frozen at zero afterward
        for (int m = ev.step; m <= b.grid.M; ++m) CHECK(b.state(p, m)[0] == 0.0);
        // the pre-freeze value actually crossed or touched the barrier
        CHECK(ev.prefreeze <= b.state(p, ev.step - 1)[0]);
    }
    CHECK(found > 0);

    // stopping rule and cost positivity over the whole batch
    for (long p = 0; p < b.num_paths; ++p) {
        for (const auto& ev : b.events[static_cast<size_t>(p)])
            CHECK(ev.time <= spec.horizon + 1e-12);
        CHECK(b.cost(p) >= 0.0);
        // switch times non-decreasing
        for (size_t j = 1; j < b.events[static_cast<size_t>(p)].size(); ++j)
            CHECK(b.events[static_cast<size_t>(p)][j].time >=
                  b.events[static_cast<size_t>(p)][j - 1].time);
    }
}

TEST_CASE("serial reference and OpenMP kernel produce identical batches") {
    const ProblemSpec spec = lq2_reachable(200);
    const RegimeTree tree = RegimeTree::build(2);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const Policy policy = Policy::zero(spec);
    const PathBatch a = simulate_paths(spec, tree, model, policy, 200, 77);
    const PathBatch c = simulate_paths_serial(spec, tree, model, policy, 200, 77);
    CHECK(a.states == c.states);
    CHECK(a.regime == c.regime);
    CHECK(a.run_cost == c.run_cost);
    CHECK(a.term_cost == c.term_cost);
}

#ifdef CASCADE_HAVE_OPENMP
TEST_CASE("thread count never changes simulated results") {
    const ProblemSpec spec = lq2_reachable(300);
    const RegimeTree tree = RegimeTree::build(2);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const Policy policy = Policy::zero(spec);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const PathBatch a = simulate_paths(spec, tree, model, policy, 300, 9);
    omp_set_num_threads(std::max(2, saved));
    const PathBatch b = simulate_paths(spec, tree, model, policy, 300, 9);
    omp_set_num_threads(saved);
    CHECK(a.states == b.states);
    CHECK(a.run_cost == b.run_cost);

    std::ostringstream csv_a, csv_b;
    write_paths_csv(csv_a, spec, tree, policy, a);
    write_paths_csv(csv_b, spec, tree, policy, b);
    CHECK(csv_a.str() == csv_b.str());
}
#endif

TEST_CASE("paths csv shape") {
    const ProblemSpec spec = lq2_reachable(3, 0.25);
    const RegimeTree tree = RegimeTree::build(2);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const Policy policy = Policy::zero(spec);
    const PathBatch b = simulate_paths(spec, tree, model, policy, 3, 1);
    std::ostringstream os;
    write_paths_csv(os, spec, tree, policy, b);
    const std::string text = os.str();
    CHECK(text.rfind("path_id,t,regime,x_1,x_2,a_1,a_2,running_cost\n", 0) == 0);
    // one row per grid point per path, plus the header
    long lines = 0;
    for (char ch : text)
        if (ch == '\n') ++lines;
    CHECK(lines == 1 + 3 * (b.grid.M + 1));
}

TEST_CASE("bridge correction triggers hits that straddle the barrier") {
    // strong noise near the barrier: the bridge test must fire on some paths
    // where the endpoints both sit above it
    std::string cfg =
        "n = 1\nhorizon = 1.0\nx0 = [0.3]\nmc.num_paths = 4000\nmc.dt = 0.25\n"
        "mc.seed = 21\nmc.bridge_correction = true\n\n[regime.\"\"]\n"
        "1.nu = 0.4\n1.v = 0\n1.gamma = 1\n";
    const ProblemSpec with_bridge = load_spec(cfg);
    std::string cfg_off = cfg;
    cfg_off.replace(cfg_off.find("mc.bridge_correction = true"), 27,
                    "mc.bridge_correction = false");
    const ProblemSpec without = load_spec(cfg_off);
    const RegimeTree tree = RegimeTree::build(1);
    const ModelFunctions model = ModelFunctions::lq(with_bridge);
    const Policy policy = Policy::zero(with_bridge);
    long hits_bridge = 0, hits_plain = 0;
    const PathBatch a = simulate_paths(with_bridge, tree, model, policy, 4000, 21);
    const PathBatch b = simulate_paths(without, tree, ModelFunctions::lq(without), policy,
                                       4000, 21);
    for (long p = 0; p < 4000; ++p) {
        hits_bridge += static_cast<long>(a.events[static_cast<size_t>(p)].size());
        hits_plain += static_cast<long>(b.events[static_cast<size_t>(p)].size());
    }
    CHECK(hits_bridge > hits_plain);  // discrete detection undershoots hits
}
