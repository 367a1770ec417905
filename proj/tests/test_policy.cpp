#include <doctest.h>

#include "cascade/policy.hpp"

using namespace cascade;

namespace {

ProblemSpec bounded_spec() {
    const char* cfg =
        "n = 2\nhorizon = 1.0\nx0 = [1.0, 1.0]\ncontrol.a_min = -0.5\ncontrol.a_max = 0.5\n"
        "mc.num_paths = 1\nmc.dt = 0.1\nmc.seed = 0\n\n[regime.\"\"]\n"
        "1.gamma = 1\n2.gamma = 1\n";
    return load_spec(cfg);
}

}  // namespace

TEST_CASE("zero policy returns zeros") {
    const ProblemSpec spec = bounded_spec();
    const Policy p = Policy::zero(spec);
    double x[2] = {1, 2}, a[2] = {9, 9};
    p.eval(Regime::root(2), 0.3, x, a);
    CHECK(a[0] == 0.0);
    CHECK(a[1] == 0.0);
}

TEST_CASE("feedback output is projected onto the control box") {
    const ProblemSpec spec = bounded_spec();
    // a synthetic feedback a_i = P x_i - phi with P = 1, phi = 0
    const Policy p = Policy::from_fn(spec, Policy::Kind::riccati_feedback,
                                     [](const Regime& r, double, const double* x, double* a) {
                                         for (int i : r.survivors()) a[i] = 1.0 * x[i] - 0.0;
                                     });
    double x[2] = {0.7, 0.2}, a[2];
    p.eval(Regime::root(2), 0.0, x, a);
    CHECK(a[0] == 0.5);  // 0.7 clamped
    CHECK(a[1] == doctest::Approx(0.2));
}

TEST_CASE("defaulted components stay zero regardless of bounds") {
    const char* cfg =
        "n = 2\nhorizon = 1.0\nx0 = [1.0, 1.0]\ncontrol.a_min = 0.25\ncontrol.a_max = 0.5\n"
        "mc.num_paths = 1\nmc.dt = 0.1\nmc.seed = 0\n\n[regime.\"\"]\n"
        "1.gamma = 1\n2.gamma = 1\n";
    const ProblemSpec spec = load_spec(cfg);  // box excludes 0 on purpose
    const Policy p = Policy::constant(spec, {0.4, 0.4});
    const Regime r1 = Regime::from_key("1", 2);
    double x[2] = {0, 1}, a[2];
    p.eval(r1, 0.0, x, a);
    CHECK(a[0] == 0.0);  // defaulted: frozen, not clamped into the box
    CHECK(a[1] == doctest::Approx(0.4));
}

TEST_CASE("perturbed policies shift then project") {
    const ProblemSpec spec = bounded_spec();
    const Policy base = Policy::constant(spec, {0.2, 0.2});
    const Policy pert = Policy::perturbed(
        base,
        [](const Regime&, double t, double* d) {
            d[0] = 1.0;
            d[1] = t < 0.5 ? 0.0 : 1.0;
        },
        0.1);
    double x[2] = {0, 0}, a[2];
    pert.eval(Regime::root(2), 0.25, x, a);
    CHECK(a[0] == doctest::Approx(0.3));
    CHECK(a[1] == doctest::Approx(0.2));
    pert.eval(Regime::root(2), 0.75, x, a);
    CHECK(a[1] == doctest::Approx(0.3));

    // h = 0 keeps the base policy bit-exactly
    const Policy same = Policy::perturbed(
        base, [](const Regime&, double, double* d) { d[0] = 1.0; }, 0.0);
    same.eval(Regime::root(2), 0.25, x, a);
    CHECK(a[0] == 0.2);
}
