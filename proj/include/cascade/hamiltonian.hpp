#pragma once

#include <functional>

#include "cascade/model.hpp"
#include "cascade/regimes.hpp"

namespace cascade {

/// Arguments of the generalized Hamiltonian of one regime. Defaulted
/// components of x and a are 0; only the diagonal of z enters because the
/// volatility matrix is diagonal.
struct HamiltonianInput {
    Regime regime;
    double t = 0;
    const double* x = nullptr;       // length n
    const double* a = nullptr;       // length n
    const double* y = nullptr;       // length n
    const double* z_diag = nullptr;  // length n
};

// Model callback seam. The built-in instance is the linear-quadratic model
// (drift mu*x + b + a, volatility sigma*x + nu, quadratic costs); callers may
// swap any callback for verification of non-LQ models. All callbacks write
// only the surviving components and must leave defaulted entries at 0.
struct ModelFunctions {
    using VecFn = std::function<void(const Regime&, double t, const double* x,
                                     const double* a, double* out)>;
    using SigFn = std::function<void(const Regime&, double t, const double* x, double* out)>;
    using CostFn = std::function<double(const Regime&, double t, const double* x,
                                        const double* a)>;
    using TermFn = std::function<double(const Regime&, double t, const double* x)>;
    using GradTermFn = std::function<void(const Regime&, double t, const double* x, double* out)>;
    using GradHFn = std::function<void(const Regime&, double t, const double* x,
                                       const double* a, const double* y,
                                       const double* z_diag, double* out)>;

    int n = 0;
    bool closed_form_lq = false;  // true when built by ModelFunctions::lq

    VecFn drift;             // B
    SigFn sigma_diag;        // diagonal of Sigma (control-free for the LQ instance)
    CostFn running_cost;     // L
    TermFn terminal_cost;    // G
    GradTermFn grad_x_terminal;  // dG/dx
    GradHFn grad_x_h;        // dH/dx
    GradHFn grad_a_h;        // dH/da

    static ModelFunctions lq(const ProblemSpec& spec);
};

/// H = B.y + sum_i Sigma_ii z_ii + L.
double hamiltonian(const ModelFunctions& model, const HamiltonianInput& in);

void grad_x_hamiltonian(const ModelFunctions& model, const HamiltonianInput& in, double* out);
void grad_a_hamiltonian(const ModelFunctions& model, const HamiltonianInput& in, double* out);

}  // namespace cascade
