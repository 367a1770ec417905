#include "cascade/hamiltonian.hpp"

namespace cascade {

ModelFunctions ModelFunctions::lq(const ProblemSpec& spec) {
    ModelFunctions m;
    m.n = spec.n;
    m.closed_form_lq = true;
    const ProblemSpec* s = &spec;

    m.drift = [s](const Regime& r, double t, const double* x, const double* a, double* out) {
        for (int i = 0; i < r.n; ++i) out[i] = 0.0;
        for (int i : r.survivors()) {
            const NodeCoeffs& c = s->coeff(r, i);
            out[i] = c.mu(t) * x[i] + c.b(t) + a[i];
        }
    };
    m.sigma_diag = [s](const Regime& r, double t, const double* x, double* out) {
        for (int i = 0; i < r.n; ++i) out[i] = 0.0;
        for (int i : r.survivors()) {
            const NodeCoeffs& c = s->coeff(r, i);
            out[i] = c.sigma(t) * x[i] + c.nu(t);
        }
    };
    m.running_cost = [s](const Regime& r, double t, const double* x, const double* a) {
        double sum = 0.0;
        for (int i : r.survivors()) {
            const NodeCoeffs& c = s->coeff(r, i);
            const double d = x[i] - c.v(t);
            sum += 0.5 * c.gamma * d * d + 0.5 * a[i] * a[i];
        }
        return sum;
    };
    m.terminal_cost = [s](const Regime& r, double t, const double* x) {
        double sum = 0.0;
        for (int i : r.survivors()) {
            const NodeCoeffs& c = s->coeff(r, i);
            const double d = x[i] - c.v(t);
            sum += 0.5 * c.gamma * d * d;
        }
        return sum;
    };
    m.grad_x_terminal = [s](const Regime& r, double t, const double* x, double* out) {
        for (int i = 0; i < r.n; ++i) out[i] = 0.0;
        for (int i : r.survivors()) {
            const NodeCoeffs& c = s->coeff(r, i);
            out[i] = c.gamma * (x[i] - c.v(t));
        }
    };
    m.grad_x_h = [s](const Regime& r, double t, const double* x, const double*,
                     const double* y, const double* z, double* out) {
        for (int i = 0; i < r.n; ++i) out[i] = 0.0;
        for (int i : r.survivors()) {
            const NodeCoeffs& c = s->coeff(r, i);
            out[i] = c.mu(t) * y[i] + c.sigma(t) * z[i] + c.gamma * (x[i] - c.v(t));
        }
    };
    m.grad_a_h = [](const Regime& r, double, const double*, const double* a,
                    const double* y, const double*, double* out) {
        for (int i = 0; i < r.n; ++i) out[i] = 0.0;
        for (int i : r.survivors()) out[i] = y[i] + a[i];
    };
    return m;
}

double hamiltonian(const ModelFunctions& model, const HamiltonianInput& in) {
    const int n = in.regime.n;
    std::vector<double> drift(static_cast<size_t>(n)), sig(static_cast<size_t>(n));
    model.drift(in.regime, in.t, in.x, in.a, drift.data());
    model.sigma_diag(in.regime, in.t, in.x, sig.data());
    double h = model.running_cost(in.regime, in.t, in.x, in.a);
    for (int i = 0; i < n; ++i) h += drift[static_cast<size_t>(i)] * in.y[i] +
                                     sig[static_cast<size_t>(i)] * in.z_diag[i];
    return h;
}

void grad_x_hamiltonian(const ModelFunctions& model, const HamiltonianInput& in, double* out) {
    model.grad_x_h(in.regime, in.t, in.x, in.a, in.y, in.z_diag, out);
}

void grad_a_hamiltonian(const ModelFunctions& model, const HamiltonianInput& in, double* out) {
    model.grad_a_h(in.regime, in.t, in.x, in.a, in.y, in.z_diag, out);
}

}  // namespace cascade
