#include <doctest.h>

#include "cascade/errors.hpp"
#include "cascade/model.hpp"

using namespace cascade;

namespace {

const char* kMinimal = R"(
# smallest legal instance
n = 1
horizon = 1.0
x0 = [1.0]
mc.num_paths = 1
mc.dt = 0.1
mc.seed = 0

[regime.""]
1.mu = 0
1.b = 0
1.sigma = 0
1.nu = 1
1.v = 0
1.gamma = 1
)";

}  // namespace

TEST_CASE("minimal config loads with one root regime") {
    const ProblemSpec spec = load_spec(kMinimal);
    CHECK(spec.n == 1);
    CHECK(spec.horizon == 1.0);
    CHECK(enumerate_active_regimes(spec.n).size() == 1);
    const auto snap = coefficients_at(spec, Regime::root(1), 0.0);
    CHECK(snap[0].mu == 0);
    CHECK(snap[0].b == 0);
    CHECK(snap[0].sigma == 0);
    CHECK(snap[0].nu == 1);
    CHECK(snap[0].v == 0);
    CHECK(snap[0].gamma == 1);
}

TEST_CASE("instant default is rejected") {
    std::string cfg = kMinimal;
    const auto pos = cfg.find("1.v = 0");
    cfg.replace(pos, 7, "1.v = 1");  // barrier equals x0
    CHECK_THROWS_WITH_AS(load_spec(cfg), doctest::Contains("instant default"),
                         ValidationError);
}

TEST_CASE("size-n regime blocks are rejected") {
    std::string cfg = R"(
n = 2
horizon = 1.0
x0 = [1.0, 1.0]
mc.num_paths = 1
mc.dt = 0.1
mc.seed = 0

[regime."1,2"]
)";
    CHECK_THROWS_WITH_AS(load_spec(cfg), doctest::Contains("size-n regime"),
                         ValidationError);
}

TEST_CASE("missing required keys are named") {
    CHECK_THROWS_WITH_AS(load_spec("n = 1\nhorizon = 1\nx0 = [1]\nmc.dt = 0.1\nmc.seed = 0"),
                         doctest::Contains("mc.num_paths"), ConfigError);
    CHECK_THROWS_AS(load_spec("horizon = 1"), ConfigError);
}

TEST_CASE("parse errors carry line numbers") {
    try {
        load_spec("n = 1\nhorizon = oops\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("inheritance: child regimes fall back per field") {
    const char* cfg = R"(
n = 2
horizon = 1.0
x0 = [1.0, 2.0]
mc.num_paths = 1
mc.dt = 0.1
mc.seed = 0

[regime.""]
1.mu = 0.5
1.gamma = 1
2.mu = 0.25
2.nu = 0.4
2.gamma = 2

[regime."1"]
2.mu = -0.75
)";
    const ProblemSpec spec = load_spec(cfg);
    const Regime r1 = Regime::from_key("1", 2);
    // declared override wins
    CHECK(spec.coeff(r1, 1).mu(0.3) == -0.75);
    // everything else inherits from the root
    CHECK(spec.coeff(r1, 1).nu(0.3) == 0.4);
    CHECK(spec.coeff(r1, 1).gamma == 2);
    // survivor of regime {2} inherits root values wholesale
    const Regime r2 = Regime::from_key("2", 2);
    CHECK(spec.coeff(r2, 0).mu(0.0) == 0.5);
}

TEST_CASE("nearest declared ancestor wins per node") {
    const char* cfg = R"(
n = 3
horizon = 1.0
x0 = [1.0, 1.0, 1.0]
mc.num_paths = 1
mc.dt = 0.1
mc.seed = 0

[regime.""]
1.mu = 1
2.mu = 1
3.mu = 1

[regime."2"]
3.mu = 9
)";
    const ProblemSpec spec = load_spec(cfg);
    // {1,2} has declared ancestors {} and {2}; {2} is nearer for node 3
    const Regime r12 = Regime::from_key("1,2", 3);
    CHECK(spec.coeff(r12, 2).mu(0.0) == 9);
    // {1,3}'s ancestors are only {} ("2" is not a subset)
    const Regime r13 = Regime::from_key("1,3", 3);
    CHECK(spec.coeff(r13, 1).mu(0.0) == 1);
}

TEST_CASE("piecewise coefficients are right-continuous") {
    const char* cfg = R"(
n = 1
horizon = 1.0
x0 = [1.0]
mc.num_paths = 1
mc.dt = 0.1
mc.seed = 0

[regime.""]
1.mu = { 0: 0.1, 0.5: 0.2 }
1.gamma = 1
)";
    const ProblemSpec spec = load_spec(cfg);
    const NodeCoeffs& c = spec.coeff(Regime::root(1), 0);
    CHECK(c.mu(0.0) == 0.1);
    CHECK(c.mu(0.49999) == 0.1);
    CHECK(c.mu(0.5) == 0.2);  // right-continuous at the breakpoint
    CHECK(c.mu(1.0) == 0.2);
    // constant between breakpoints
    CHECK(c.mu(0.2) == c.mu(0.4));
    CHECK(c.mu(0.6) == c.mu(0.9));
}

TEST_CASE("gamma must be nonnegative and breakpoints in range") {
    std::string cfg = kMinimal;
    cfg.replace(cfg.find("1.gamma = 1"), 11, "1.gamma = -1");
    CHECK_THROWS_AS(load_spec(cfg), ValidationError);

    std::string cfg2 = kMinimal;
    cfg2.replace(cfg2.find("1.mu = 0"), 8, "1.mu = { 0: 0, 2.5: 1 }");
    CHECK_THROWS_WITH_AS(load_spec(cfg2), doctest::Contains("breakpoint"),
                         ValidationError);
}

TEST_CASE("emit_spec round-trips through load_spec") {
    const char* cfg = R"(
n = 2
horizon = 0.75
x0 = [1.5, -0.25]
control.a_min = -2.5
control.a_max = 2.5
mc.num_paths = 123
mc.dt = 0.025
mc.seed = 987654321
mc.basis_degree = 3
mc.ridge = 1e-6
mc.bridge_correction = true
mc.max_picard = 4

[regime.""]
1.mu = { 0: 0.1, 0.5: 0.2 }
1.b = -0.125
1.nu = 0.3
1.v = 0.0625
1.gamma = 1.75
2.mu = 0.2
2.gamma = 0.5

[regime."1"]
2.b = { 0: 0, 0.25: 0.5 }
)";
    const ProblemSpec a = load_spec(cfg);
    const std::string text = emit_spec(a);
    const ProblemSpec b = load_spec(text);
    CHECK(a.n == b.n);
    CHECK(a.horizon == b.horizon);
    CHECK(a.x0 == b.x0);
    CHECK(a.mc.num_paths == b.mc.num_paths);
    CHECK(a.mc.dt == b.mc.dt);
    CHECK(a.mc.seed == b.mc.seed);
    CHECK(a.mc.basis_degree == b.mc.basis_degree);
    CHECK(a.mc.ridge == b.mc.ridge);
    CHECK(a.mc.bridge_correction == b.mc.bridge_correction);
    for (int i = 0; i < a.n; ++i) {
        CHECK(a.bounds[static_cast<size_t>(i)].lo == b.bounds[static_cast<size_t>(i)].lo);
        CHECK(a.bounds[static_cast<size_t>(i)].hi == b.bounds[static_cast<size_t>(i)].hi);
    }
    // declared blocks identical
    REQUIRE(a.declared.size() == b.declared.size());
    for (const auto& [key, blk] : a.declared) {
        const auto it = b.declared.find(key);
        REQUIRE(it != b.declared.end());
        REQUIRE(blk.nodes.size() == it->second.nodes.size());
        for (const auto& [node, nc] : blk.nodes) {
            const auto& nb = it->second.nodes.at(node);
            CHECK(nc.mu == nb.mu);
            CHECK(nc.b == nb.b);
            CHECK(nc.sigma == nb.sigma);
            CHECK(nc.nu == nb.nu);
            CHECK(nc.v == nb.v);
            CHECK(nc.gamma == nb.gamma);
        }
    }
    // the canonical writer is a fixed point
    CHECK(emit_spec(b) == text);
}

TEST_CASE("coefficients_at contract violations") {
    const ProblemSpec spec = load_spec(kMinimal);
    CHECK_THROWS_AS(coefficients_at(spec, Regime::root(1), 2.0), ValidationError);
    CHECK_THROWS_AS(coefficients_at(spec, Regime::from_key("1", 1), 0.5), ValidationError);
}

TEST_CASE("grid sizing never coarsens the requested step") {
    ProblemSpec spec = load_spec(kMinimal);
    CHECK(spec.num_steps() == 10);
    CHECK(spec.dt_eff() == doctest::Approx(0.1));
    spec.mc.dt = 0.3;
    CHECK(spec.num_steps() == 4);
    CHECK(spec.dt_eff() <= 0.3);
}
