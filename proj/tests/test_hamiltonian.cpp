#include <doctest.h>

#include <cmath>

#include "cascade/hamiltonian.hpp"
#include "cascade/rng.hpp"

using namespace cascade;

namespace {

ProblemSpec make_spec(const std::string& body, int n = 1) {
    std::string cfg = "n = " + std::to_string(n) + "\nhorizon = 1.0\nx0 = [";
    for (int i = 0; i < n; ++i) cfg += (i ? ", 1.0" : "1.0");
    cfg += "]\nmc.num_paths = 1\nmc.dt = 0.1\nmc.seed = 0\n\n[regime.\"\"]\n" + body;
    return load_spec(cfg);
}

}  // namespace

TEST_CASE("hamiltonian direct substitution") {
    // mu=b=0, sigma=nu=0, gamma=1, v=0: H = a*y + (x^2 + a^2)/2
    const ProblemSpec spec = make_spec("1.gamma = 1\n1.v = 0\n");
    const ModelFunctions model = ModelFunctions::lq(spec);
    const Regime root = Regime::root(1);
    double x = 1, a = 2, y = 3, z = 0;
    CHECK(hamiltonian(model, {root, 0.0, &x, &a, &y, &z}) == doctest::Approx(8.5));

    // all quadratic terms vanish at x=v, a=0: H = b*y
    const ProblemSpec spec2 = make_spec("1.b = 0.7\n1.v = 0.25\n1.gamma = 3\n");
    const ModelFunctions model2 = ModelFunctions::lq(spec2);
    x = 0.25, a = 0, y = -1.5, z = 0;
    CHECK(hamiltonian(model2, {root, 0.0, &x, &a, &y, &z}) == doctest::Approx(0.7 * -1.5));

    // nu=1, z=2: H = Sigma*z + L = 2 + 0.5
    const ProblemSpec spec3 = make_spec("1.nu = 1\n1.gamma = 1\n1.v = 0\n");
    const ModelFunctions model3 = ModelFunctions::lq(spec3);
    x = 1, a = 0, y = 0, z = 2;
    CHECK(hamiltonian(model3, {root, 0.0, &x, &a, &y, &z}) == doctest::Approx(2.5));
}

TEST_CASE("gradients closed forms") {
    const ProblemSpec spec = make_spec(
        "1.mu = 0.3\n1.sigma = 0.1\n1.gamma = 1\n1.v = 0.5\n");
    const ModelFunctions model = ModelFunctions::lq(spec);
    const Regime root = Regime::root(1);
    double x = 1.5, a = 2, y = 2, z = 4, g = 0;
    HamiltonianInput in{root, 0.0, &x, &a, &y, &z};
    grad_x_hamiltonian(model, in, &g);
    CHECK(g == doctest::Approx(0.3 * 2 + 0.1 * 4 + 1.0 * (1.5 - 0.5)));  // 2.0
    y = 3;
    grad_a_hamiltonian(model, in, &g);
    CHECK(g == doctest::Approx(5.0));
    // first-order optimum at a = -y
    a = -3;
    grad_a_hamiltonian(model, in, &g);
    CHECK(g == doctest::Approx(0.0));
}

TEST_CASE("finite differences reproduce both gradients") {
    const char* body =
        "1.mu = 0.3\n1.b = -0.2\n1.sigma = 0.15\n1.nu = 0.4\n1.v = 0.5\n1.gamma = 1.5\n"
        "2.mu = -0.1\n2.b = 0.1\n2.sigma = 0.05\n2.nu = 0.2\n2.v = -0.25\n2.gamma = 0.5\n";
    const ProblemSpec spec = make_spec(body, 2);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const NoiseStream pr(42);
    const double h = 1e-5;
    uint64_t ctr = 0;

    for (const Regime& r : enumerate_active_regimes(2)) {
        for (int pt = 0; pt < 100; ++pt) {
            double x[2] = {0, 0}, a[2] = {0, 0}, y[2] = {0, 0}, z[2] = {0, 0};
            for (int i : r.survivors()) {
                x[i] = pr.gaussian(ctr++, 0, 0, Stream::probe);
                a[i] = pr.gaussian(ctr++, 0, 0, Stream::probe);
                y[i] = pr.gaussian(ctr++, 0, 0, Stream::probe);
                z[i] = pr.gaussian(ctr++, 0, 0, Stream::probe);
            }
            const double t = 0.77 * pr.uniform(ctr++, 0, 0, Stream::probe);
            HamiltonianInput in{r, t, x, a, y, z};
            double gx[2], ga[2];
            grad_x_hamiltonian(model, in, gx);
            grad_a_hamiltonian(model, in, ga);
            for (int i : r.survivors()) {
                const double xi = x[i];
                x[i] = xi + h;
                const double hp = hamiltonian(model, in);
                x[i] = xi - h;
                const double hm = hamiltonian(model, in);
                x[i] = xi;
                CHECK(std::abs((hp - hm) / (2 * h) - gx[i]) /
                          std::max(1.0, std::abs(gx[i])) <= 1e-6);
                const double ai = a[i];
                a[i] = ai + h;
                const double hap = hamiltonian(model, in);
                a[i] = ai - h;
                const double ham = hamiltonian(model, in);
                a[i] = ai;
                CHECK(std::abs((hap - ham) / (2 * h) - ga[i]) /
                          std::max(1.0, std::abs(ga[i])) <= 1e-6);
            }
        }
    }
}

TEST_CASE("H is additive across surviving nodes") {
    const char* body =
        "1.mu = 0.3\n1.nu = 0.4\n1.v = 0.5\n1.gamma = 1.5\n"
        "2.mu = -0.1\n2.nu = 0.2\n2.v = -0.25\n2.gamma = 0.5\n";
    const ProblemSpec spec = make_spec(body, 2);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const Regime root = Regime::root(2);
    double x[2] = {1.2, -0.3}, a[2] = {0.5, 0.8}, y[2] = {2, -1}, z[2] = {0.1, 0.7};
    const double both = hamiltonian(model, {root, 0.5, x, a, y, z});

    // evaluating with one node zeroed at a time and summing gives the same H
    double x1[2] = {x[0], 0}, a1[2] = {a[0], 0}, y1[2] = {y[0], 0}, z1[2] = {z[0], 0};
    double x2[2] = {0, x[1]}, a2[2] = {0, a[1]}, y2[2] = {0, y[1]}, z2[2] = {0, z[1]};
    const Regime only1 = Regime::from_key("2", 2);  // node 2 defaulted
    const Regime only2 = Regime::from_key("1", 2);
    const double h1 = hamiltonian(model, {only1, 0.5, x1, a1, y1, z1});
    const double h2 = hamiltonian(model, {only2, 0.5, x2, a2, y2, z2});
    CHECK(both == doctest::Approx(h1 + h2));
}

TEST_CASE("midpoint convexity of (x, a) -> H with nonnegative weights") {
    const ProblemSpec spec = make_spec("1.mu = 0.4\n1.sigma = 0.2\n1.v = 0.3\n1.gamma = 2\n");
    const ModelFunctions model = ModelFunctions::lq(spec);
    const Regime root = Regime::root(1);
    const NoiseStream pr(7);
    uint64_t ctr = 0;
    for (int s = 0; s < 500; ++s) {
        const double y = pr.gaussian(ctr++, 0, 0, Stream::probe);
        const double z = pr.gaussian(ctr++, 0, 0, Stream::probe);
        double x1 = pr.gaussian(ctr++, 0, 0, Stream::probe);
        double a1 = pr.gaussian(ctr++, 0, 0, Stream::probe);
        double x2 = pr.gaussian(ctr++, 0, 0, Stream::probe);
        double a2 = pr.gaussian(ctr++, 0, 0, Stream::probe);
        double xm = 0.5 * (x1 + x2), am = 0.5 * (a1 + a2);
        const double hm = hamiltonian(model, {root, 0.1, &xm, &am, &y, &z});
        const double h1 = hamiltonian(model, {root, 0.1, &x1, &a1, &y, &z});
        const double h2 = hamiltonian(model, {root, 0.1, &x2, &a2, &y, &z});
        CHECK(hm <= 0.5 * (h1 + h2) + 1e-12);
    }
}

TEST_CASE("custom callbacks replace the built-in forms") {
    // a control-dependent diffusion through the callback seam
    const ProblemSpec spec = make_spec("1.gamma = 1\n1.v = 0\n");
    ModelFunctions model = ModelFunctions::lq(spec);
    model.closed_form_lq = false;
    model.sigma_diag = [](const Regime& r, double, const double* x, double* out) {
        for (int i = 0; i < r.n; ++i) out[i] = 0.0;
        for (int i : r.survivors()) out[i] = 0.5 * x[i];
    };
    const Regime root = Regime::root(1);
    double x = 2, a = 0, y = 0, z = 3;
    // H = Sigma*z + L = (0.5*2)*3 + 0.5*4 = 5
    CHECK(hamiltonian(model, {root, 0.0, &x, &a, &y, &z}) == doctest::Approx(5.0));
}
